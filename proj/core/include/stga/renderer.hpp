#pragma once

#include "stga/camera.hpp"
#include "stga/gaussian.hpp"
#include "stga/image.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace stga {

/// A splat projected to the image plane with its color for this view.
struct Splat2D {
    Vec2 mean = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();  // includes the +0.3 I low-pass term
    double depth = 0.0;
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    int source = 0;
};

struct RenderSettings {
    static constexpr double kCovarianceBlur = 0.3;
    static constexpr double kMaxAlpha = 0.999;
    static constexpr double kMinAlpha = 1.0 / 255.0;
    static constexpr double kTransmittanceFloor = 1e-4;

    int tile_size = 16;
    bool early_out = true;
};

/// Per-pixel state kept by the forward pass for render_backward.
struct RenderState {
    std::vector<int> order;         // splat indices sorted by (depth, source)
    std::vector<int> tile_offsets;  // CSR offsets into tile_entries, tiles row-major
    std::vector<int> tile_entries;  // positions in `order`
    std::vector<int> last_entry;    // per pixel: entries processed (exclusive end)
    std::vector<double> final_transmittance;
    int tiles_x = 0;
    int tiles_y = 0;
    int tile_size = 16;
    bool tiled = true;
};

struct RenderOutput {
    Image image;                          // H x W x 3
    std::vector<double> alpha;            // H x W, 1 - final transmittance
    std::vector<std::int32_t> contributors;  // per pixel
    std::vector<double> splat_weight;     // per input splat: sum of alpha * T over pixels
    RenderState state;
};

struct Splat2DGrad {
    Vec2 mean = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();  // all four entries treated as independent
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
};

/// EWA projection. Returns nullopt when the mean is at or behind the near plane,
/// the opacity can never reach the visibility threshold, or the footprint misses
/// the image. `cull_offscreen = false` keeps off-image splats (oracle path).
[[nodiscard]] std::optional<Splat2D> project(const PosedGaussian& posed, const Camera& cam,
                                             int source = 0, bool cull_offscreen = true);

/// Gradient of (mean, cov2d) w.r.t. the posed position and covariance.
/// Opacity and color gradients pass through unchanged.
[[nodiscard]] PosedGradient project_backward(const PosedGaussian& posed, const Camera& cam,
                                             const Splat2DGrad& grad);

/// Half extents (pixels) of the region where the splat can reach the minimum
/// visible alpha; nullopt if it never does.
[[nodiscard]] std::optional<Vec2> splat_extent(const Splat2D& s);

/// Tiled front-to-back compositing.
[[nodiscard]] RenderOutput render(std::span<const Splat2D> splats, const Camera& cam,
                                  const Vec3& background = Vec3::Zero(),
                                  const RenderSettings& settings = {});

/// Per-splat gradients given dL/dImage (H x W x 3). `forward` must come from
/// render() with the same inputs.
[[nodiscard]] std::vector<Splat2DGrad> render_backward(std::span<const Splat2D> splats,
                                                       const Camera& cam, const Vec3& background,
                                                       const RenderOutput& forward,
                                                       const Image& upstream);

/// Brute-force reference: every pixel visits every splat in depth order, no
/// tiling, no footprint culling, no early-out.
[[nodiscard]] RenderOutput render_oracle(std::span<const Splat2D> splats, const Camera& cam,
                                         const Vec3& background = Vec3::Zero());
[[nodiscard]] RenderOutput render_oracle(std::span<const PosedGaussian> posed,
                                         std::span<const Vec3> colors, const Camera& cam,
                                         const Vec3& background = Vec3::Zero());

}  // namespace stga
