#pragma once

#include "stga/appearance.hpp"
#include "stga/camera.hpp"
#include "stga/deform.hpp"
#include "stga/gaussian.hpp"
#include "stga/renderer.hpp"
#include "stga/skeleton.hpp"

#include <optional>
#include <span>
#include <vector>

namespace stga {

enum class ColorMode { Mlp, SphericalHarmonics };

/// Trainable avatar: splats, their skinning weights and the color head.
struct Model {
    GaussianLayout layout;
    std::vector<SpacetimeGaussian> gaussians;
    SkinningWeights weights;
    ColorMode color_mode = ColorMode::Mlp;
    int sh_degree = 2;
    ColorMLP mlp;  // unused (empty) in SH mode

    [[nodiscard]] std::size_t size() const { return gaussians.size(); }
    /// Rounds every parameter to the nearest float32 so checkpoints are exact.
    void round_to_float();
    /// Keeps the splats at the given ascending indices.
    void keep(std::span<const std::size_t> indices);
};

/// Cached forward pass for one view.
struct ModelRender {
    DeformContext ctx;
    std::vector<PosedGaussian> posed;
    MatX colors;                     // 3 x N
    std::optional<ColorCache> cache; // MLP mode
    std::vector<Vec3> view_dirs;     // SH mode
    std::vector<double> view_dist;   // SH mode
    std::vector<Splat2D> splats;
    std::vector<int> splat_of;       // splat index -> gaussian index
    RenderOutput out;
};

[[nodiscard]] ModelRender render_model(const Model& model, const Skeleton& skel, const Pose& pose,
                                       double t, const Camera& cam, const Vec3& background,
                                       const RenderSettings& settings = {});

struct ModelGrad {
    std::vector<GaussianGrad> gaussians;
    VecX mlp;
};

/// Accumulates into `grad` the gradients given dL/dImage plus optional extra
/// dL/d(posed position) per splat (`extra_position` empty or one per splat).
void backward_model(const Model& model, const ModelRender& fwd, const Camera& cam,
                    const Vec3& background, const Image& dimage, ModelGrad& grad,
                    std::span<const Vec3> extra_position = {});

[[nodiscard]] ModelGrad zero_grad(const Model& model);

}  // namespace stga
