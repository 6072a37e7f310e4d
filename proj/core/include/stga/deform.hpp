#pragma once

#include "stga/camera.hpp"
#include "stga/gaussian.hpp"
#include "stga/skeleton.hpp"

#include <optional>
#include <span>
#include <vector>

namespace stga {

/// Everything needed to pose splats for one frame. Bone transforms are
/// computed once from the skeleton and pose.
struct DeformContext {
    BoneTransforms transforms;
    double t = 0.0;

    static DeformContext make(const Skeleton& skel, const Pose& pose, double t);
    /// Identity transforms: deform reduces to pure spacetime evaluation.
    static DeformContext rest(std::size_t bone_count, double t);
};

/// Normalized time of frame k in an N-frame sequence.
[[nodiscard]] inline double frame_time(int k, int frame_count) {
    return frame_count > 1 ? static_cast<double>(k) / static_cast<double>(frame_count - 1) : 0.0;
}

/// LBS position plus motion offset; bone rotation of the dominant bone composed
/// in front of the evaluated quaternion.
[[nodiscard]] PosedGaussian deform(const SpacetimeGaussian& g, const BoneWeights& w,
                                   const DeformContext& ctx);

/// Gradients of the splat parameters given upstream PosedGaussian gradients.
[[nodiscard]] GaussianGrad deform_backward(const SpacetimeGaussian& g, const BoneWeights& w,
                                           const DeformContext& ctx, const PosedGradient& upstream);

/// Posed position only (cheap path for velocities and densification).
[[nodiscard]] Vec3 deform_position(const SpacetimeGaussian& g, const BoneWeights& w,
                                   const DeformContext& ctx);

/// Elementwise deform; output order matches input order. Throws ArgumentError
/// when the weight count does not match.
[[nodiscard]] std::vector<PosedGaussian> deform_batch(std::span<const SpacetimeGaussian> gaussians,
                                                      std::span<const BoneWeights> weights,
                                                      const DeformContext& ctx);

/// Projected displacement (pixels/frame) between two frames, nullopt when the
/// splat is behind either camera.
[[nodiscard]] std::optional<Vec2> screen_velocity(const SpacetimeGaussian& g, const BoneWeights& w,
                                                  const DeformContext& ctx_k,
                                                  const DeformContext& ctx_prev,
                                                  const Camera& cam_k, const Camera& cam_prev);

[[nodiscard]] inline std::optional<Vec2> screen_velocity(const SpacetimeGaussian& g,
                                                         const BoneWeights& w,
                                                         const DeformContext& ctx_k,
                                                         const DeformContext& ctx_prev,
                                                         const Camera& cam) {
    return screen_velocity(g, w, ctx_k, ctx_prev, cam, cam);
}

}  // namespace stga
