#pragma once

#include "stga/gaussian.hpp"
#include "stga/skeleton.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace stga {

enum class ViewEncoding { Frequency, SphericalHarmonics };

struct EncodingConfig {
    int position_frequencies = 6;
    int view_frequencies = 4;
    int pose_frequencies = 2;
    int motion_width = 8;
    ViewEncoding view_encoding = ViewEncoding::Frequency;
};

/// [sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)] per component.
[[nodiscard]] VecX positional_encoding(std::span<const double> x, int frequencies);
[[nodiscard]] inline VecX positional_encoding(const Vec3& x, int frequencies) {
    return positional_encoding(std::span<const double>(x.data(), 3), frequencies);
}

/// Degree <= 2 real SH basis (9 values, 3DGS sign convention) at unit direction d.
[[nodiscard]] Eigen::Matrix<double, 9, 1> sh_basis(const Vec3& d);

/// SH color: coefficients laid out [basis * 3 + channel]; uses the first
/// (degree + 1)^2 basis functions; result clipped to [0,1] after +0.5.
[[nodiscard]] Vec3 sh_color(std::span<const double> coeffs, const Vec3& dir, int degree = 2);

/// Gradient of the unclipped SH color w.r.t. the coefficients and the direction.
struct ShColorGrad {
    VecX coeffs;
    Vec3 dir = Vec3::Zero();
};
[[nodiscard]] ShColorGrad sh_color_backward(std::span<const double> coeffs, const Vec3& dir,
                                            int degree, const Vec3& upstream);

/// Number of SH coefficients (RGB) of the given degree.
[[nodiscard]] constexpr int sh_coefficient_count(int degree) { return 3 * (degree + 1) * (degree + 1); }

/// Gradient of per-splat color inputs from the color head.
struct ColorInputGrad {
    Vec3 position = Vec3::Zero();  // posed position (through gamma(mu) and the view direction)
    std::vector<Vec3> motion_coeffs;
    std::vector<Quat> rot_coeffs;
    VecX appearance_feat;
};

/// Activations kept by forward_batch for backward_batch.
struct ColorCache {
    MatX input;                     // per-splat inputs (pose features excluded) x N
    MatX motion_inputs;             // stacked polynomial coefficients x N
    VecX pose_features;
    std::vector<MatX> activations;  // post-ReLU hidden layers
    MatX colors;                    // 3 x N
    std::vector<Vec3> view_dirs;
    std::vector<double> view_distance;  // |mu - camera center|, 0 for explicit directions
};

/// Dynamic-aware color head: MLP over gamma(mu), a learned projection of the
/// polynomial coefficients, gamma(pose), gamma(view) and the per-splat latent.
class ColorMLP {
public:
    ColorMLP() = default;
    ColorMLP(const EncodingConfig& enc, const GaussianLayout& layout, std::size_t bone_count,
             std::vector<int> hidden = {64, 64}, std::uint64_t seed = 0);

    [[nodiscard]] const EncodingConfig& encoding() const { return enc_; }
    [[nodiscard]] const GaussianLayout& layout() const { return layout_; }
    [[nodiscard]] std::size_t bone_count() const { return bones_; }
    [[nodiscard]] const std::vector<int>& hidden() const { return hidden_; }
    /// Full layer sizes: input, hidden..., 3.
    [[nodiscard]] std::vector<int> layer_sizes() const;

    [[nodiscard]] int motion_input_dim() const;
    [[nodiscard]] int position_dim() const { return 6 * enc_.position_frequencies; }
    [[nodiscard]] int pose_dim() const { return 4 * static_cast<int>(bones_) * 2 * enc_.pose_frequencies; }
    [[nodiscard]] int view_dim() const;
    [[nodiscard]] int input_dim() const;
    [[nodiscard]] std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    VecX& parameters() { return params_; }
    [[nodiscard]] const VecX& parameters() const { return params_; }

    /// Motion feature f_mot = P [b; c] + p0.
    [[nodiscard]] VecX motion_feature(const SpacetimeGaussian& g) const;
    /// Projection matrix and bias views (motion_width x motion_input_dim).
    [[nodiscard]] Eigen::Map<const MatX> motion_projection() const;
    [[nodiscard]] Eigen::Map<MatX> motion_projection();
    [[nodiscard]] Eigen::Map<VecX> motion_bias();

    [[nodiscard]] Eigen::Map<const MatX> weight(int layer) const;
    [[nodiscard]] Eigen::Map<MatX> weight(int layer);
    [[nodiscard]] Eigen::Map<VecX> bias(int layer);
    [[nodiscard]] Eigen::Map<const VecX> bias(int layer) const;

    /// Colors (3 x N) for splats at posed positions seen from camera_center.
    [[nodiscard]] ColorCache forward_batch(std::span<const SpacetimeGaussian> gaussians,
                                           std::span<const Vec3> positions, const Pose& pose,
                                           const Vec3& camera_center) const;
    /// Same with explicit unit view directions (no gradient to the direction).
    [[nodiscard]] ColorCache forward_directions(std::span<const SpacetimeGaussian> gaussians,
                                                std::span<const Vec3> positions, const Pose& pose,
                                                std::span<const Vec3> view_dirs) const;

    /// Accumulates parameter gradients into `param_grad` (size parameter_count)
    /// and returns per-splat input gradients.
    std::vector<ColorInputGrad> backward_batch(std::span<const SpacetimeGaussian> gaussians,
                                               std::span<const Vec3> positions,
                                               const ColorCache& cache, const MatX& dcolors,
                                               VecX& param_grad) const;

private:
    struct Block {
        Eigen::Index offset = 0;
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
    };

    [[nodiscard]] VecX pose_features(const Pose& pose) const;
    [[nodiscard]] VecX view_features(const Vec3& dir) const;
    void build_blocks();

    EncodingConfig enc_;
    GaussianLayout layout_;
    std::size_t bones_ = 0;
    std::vector<int> hidden_;
    VecX params_;
    Block proj_w_, proj_b_;
    std::vector<Block> w_, b_;
};

/// Single-splat color; `view_dir` must be unit length.
[[nodiscard]] Vec3 color_forward(const SpacetimeGaussian& g, const PosedGaussian& posed,
                                 const Pose& pose, const Vec3& view_dir, const ColorMLP& mlp);

}  // namespace stga
