#pragma once

#include "stga/camera.hpp"
#include "stga/deform.hpp"
#include "stga/gaussian.hpp"
#include "stga/image.hpp"
#include "stga/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace stga {

/// Dense forward flow (frame t -> t+1) in pixels/frame, row-major (u, v) pairs.
struct FlowField {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    FlowField() = default;
    FlowField(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 2, 0.0f) {}

    [[nodiscard]] Vec2 at(int y, int x) const {
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 2;
        return Vec2(data[i], data[i + 1]);
    }
    void set(int y, int x, const Vec2& v) {
        const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 2;
        data[i] = static_cast<float>(v.x());
        data[i + 1] = static_cast<float>(v.y());
    }
    /// Bilinear lookup at a pixel-center coordinate; nullopt outside the image.
    [[nodiscard]] std::optional<Vec2> sample(const Vec2& p) const;
};

/// Middlebury .flo: float32 202021.25, i32 width, i32 height, float32 (u, v) pairs.
void write_flo(const std::filesystem::path& path, const FlowField& flow);
[[nodiscard]] FlowField read_flo(const std::filesystem::path& path);

inline constexpr float kFloMagic = 202021.25f;

struct DensifyConfig {
    double error_threshold = 0.05;       // tau
    double step = 0.01;                  // Delta, world units
    double spread = 0.0025;              // sigma, world units
    double flow_protection = 0.5;        // gamma_flow
    int window = 5;                      // T, frames
    double motion_threshold = 2.0;       // delta, pixels accumulated
    double consistency_tolerance = 2.0;  // epsilon_c, pixels
    double density_scale = 1.0;          // kappa
    int cell_size = 16;                  // pixels
    double opacity_floor = 0.005;
    double refine_blend = 0.3;           // beta
    int max_new_per_round = 2000;

    /// Throws ArgumentError when a field is out of range.
    void validate() const;
};

/// Row-major boolean image.
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int h, int w, bool fill = false)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}
    [[nodiscard]] bool at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int y, int x, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    [[nodiscard]] std::size_t count() const;
    /// Pixel containing p (nearest pixel center); false outside.
    [[nodiscard]] bool contains(const Vec2& p) const;
};

/// Per-pixel mean absolute channel error greater than tau.
[[nodiscard]] Mask detect_dynamic(const Image& rendered, const Image& ground_truth, double tau);

/// Sum of |v| over the last min(window + 1, history.size()) fields (history is
/// oldest first).
[[nodiscard]] std::vector<double> accumulate_motion(std::span<const FlowField> history, int window);
[[nodiscard]] Mask valid_region(std::span<const FlowField> history, int window, double delta);
/// W = clamp(accumulated / (2 delta), 0, 1).
[[nodiscard]] std::vector<double> motion_strength(std::span<const double> accumulated, double delta);

/// Delta * dir + N(0, sigma^2 I); dir is used as given.
[[nodiscard]] Vec3 flow_offset(const Vec3& world_dir, double step, double spread, CounterRng& rng);

/// Unit world direction of a pixel-space flow vector at the given camera depth;
/// nullopt when |flow| <= 1e-6.
[[nodiscard]] std::optional<Vec3> lift_flow_direction(const Camera& cam, const Vec2& flow, double depth);

/// New splat placed at the seed's posed position plus flow_offset along the
/// lifted flow direction. Polynomials are re-centered at ctx.t and the
/// constant term is folded into the canonical position, so the posed position
/// at ctx.t is exact. nullopt when the flow is zero or the seed is behind the camera.
[[nodiscard]] std::optional<SpacetimeGaussian> sample_along_flow(const SpacetimeGaussian& seed,
                                                                 const BoneWeights& weights,
                                                                 const DeformContext& ctx,
                                                                 const Vec2& flow, const Camera& cam,
                                                                 double step, double spread,
                                                                 CounterRng& rng);

enum class Consistency { Accept, Flag };

/// Predicted pixel = proj(prev) + flow_prev(proj(prev)); accept iff the current
/// projection is within tolerance. Behind-camera or off-image points are flagged.
[[nodiscard]] Consistency check_consistency(const Vec3& prev_world, const Vec3& cur_world,
                                            const FlowField& flow_prev, const Camera& cam_prev,
                                            const Camera& cam_cur, double tolerance);

/// Two-strike rule: returns the updated consecutive-failure count; a splat is
/// deleted once it reaches kConsistencyStrikes.
inline constexpr int kConsistencyStrikes = 2;
[[nodiscard]] inline int update_strikes(int strikes, Consistency c) {
    return c == Consistency::Accept ? 0 : strikes + 1;
}

[[nodiscard]] inline double flow_weighted_contribution(double contribution, double strength, double gamma) {
    return contribution * (1.0 + gamma * strength);
}

struct PruneCandidate {
    double max_opacity = 1.0;
    double contribution = 0.0;
    double motion_strength = 0.0;
    bool consistent = true;
};

/// Indices (ascending) of splats that survive: opacity floor first, then the
/// lowest flow-weighted contributions until within budget. Consistent splats
/// with W > 0.8 are only removed by the opacity floor.
[[nodiscard]] std::vector<std::size_t> prune(std::span<const PruneCandidate> candidates,
                                             double opacity_floor, double gamma,
                                             std::size_t budget);

/// Screen-space splat density on a regular grid.
struct DensityReport {
    int cells_x = 0;
    int cells_y = 0;
    int cell_size = 16;
    std::vector<double> current;      // splats per cell
    std::vector<double> target;       // base * (1 + kappa * W_cell)
    std::vector<double> strength;     // mean W over the cell's valid pixels
    std::vector<std::uint8_t> moving; // cell intersects the valid region
    double base_density = 0.0;        // median over non-empty cells
    Mask dynamic;
    Mask valid;
};

[[nodiscard]] DensityReport density_report(std::span<const Vec2> splat_pixels, const Mask& dynamic,
                                           const Mask& valid, std::span<const double> strength,
                                           const DensifyConfig& config);

/// Moving cells whose density is below target.
[[nodiscard]] std::vector<int> density_trigger(const DensityReport& report);

/// Mean splats per non-empty moving cell over mean splats per non-empty static
/// cell; 0 when either set is empty.
[[nodiscard]] double density_ratio(const DensityReport& report);

/// Splats per covered pixel inside the valid region over splats per covered
/// pixel outside it, each splat binned by its nearest pixel. Normalizing by
/// coverage keeps partially covered screen areas from reading as sparse.
/// 0 when either side has no coverage or no splats.
[[nodiscard]] double coverage_density_ratio(std::span<const Vec2> splat_pixels, const Mask& valid,
                                            const Mask& covered);

/// (1 - beta) v_est + beta v_traj per sample.
[[nodiscard]] std::vector<Vec2> refine_flow(std::span<const Vec2> estimated,
                                            std::span<const Vec2> trajectory, double beta);
[[nodiscard]] double flow_residual(std::span<const Vec2> refined, std::span<const Vec2> trajectory);

}  // namespace stga
