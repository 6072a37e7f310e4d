#include "stga/deform.hpp"

#include "stga/parallel.hpp"

namespace stga {

DeformContext DeformContext::make(const Skeleton& skel, const Pose& pose, double t) {
    return DeformContext{forward_kinematics(skel, pose), t};
}

DeformContext DeformContext::rest(std::size_t bone_count, double t) {
    return DeformContext{BoneTransforms(bone_count, Mat4::Identity()), t};
}

Vec3 deform_position(const SpacetimeGaussian& g, const BoneWeights& w, const DeformContext& ctx) {
    return lbs_transform(g.canonical_pos, w, ctx.transforms) + eval_motion_offset(g, ctx.t);
}

PosedGaussian deform(const SpacetimeGaussian& g, const BoneWeights& w, const DeformContext& ctx) {
    PosedGaussian p;
    p.position = deform_position(g, w, ctx);
    const Mat3 bone_rot = ctx.transforms[w.dominant()].block<3, 3>(0, 0);
    p.covariance = build_covariance(Mat3(bone_rot * quat_to_matrix(eval_rotation(g, ctx.t).q)),
                                    g.log_scales);
    p.opacity = temporal_opacity(g, ctx.t);
    p.appearance_feat = g.appearance_feat;
    return p;
}

GaussianGrad deform_backward(const SpacetimeGaussian& g, const BoneWeights& w,
                             const DeformContext& ctx, const PosedGradient& upstream) {
    return grad_gaussian_params(g, ctx.t, upstream, lbs_jacobian(w, ctx.transforms),
                                ctx.transforms[w.dominant()].block<3, 3>(0, 0));
}

std::vector<PosedGaussian> deform_batch(std::span<const SpacetimeGaussian> gaussians,
                                        std::span<const BoneWeights> weights,
                                        const DeformContext& ctx) {
    if (gaussians.size() != weights.size()) {
        throw ArgumentError("deform_batch: " + std::to_string(gaussians.size()) + " splats but " +
                            std::to_string(weights.size()) + " weight entries");
    }
    std::vector<PosedGaussian> out(gaussians.size());
    constexpr std::size_t kChunk = 1024;
    const std::size_t chunks = (gaussians.size() + kChunk - 1) / kChunk;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t end = std::min(gaussians.size(), (c + 1) * kChunk);
        for (std::size_t i = c * kChunk; i < end; ++i) out[i] = deform(gaussians[i], weights[i], ctx);
    });
    return out;
}

std::optional<Vec2> screen_velocity(const SpacetimeGaussian& g, const BoneWeights& w,
                                    const DeformContext& ctx_k, const DeformContext& ctx_prev,
                                    const Camera& cam_k, const Camera& cam_prev) {
    const auto now = cam_k.project(deform_position(g, w, ctx_k));
    const auto before = cam_prev.project(deform_position(g, w, ctx_prev));
    if (!now || !before) return std::nullopt;
    return *now - *before;
}

}  // namespace stga
