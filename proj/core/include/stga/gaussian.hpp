#pragma once

#include "stga/types.hpp"

#include <cstddef>
#include <vector>

namespace stga {

/// Polynomial orders and feature width shared by every splat of a model.
struct GaussianLayout {
    int motion_order = 2;    // n_p: position polynomial terms k = 1..n_p
    int rotation_order = 1;  // n_q: quaternion polynomial terms k = 0..n_q
    int feature_width = 8;

    /// Number of scalars in the flattened parameter vector of one splat.
    [[nodiscard]] int parameter_count() const {
        return 3 + 3 * motion_order + 1 + 4 * (rotation_order + 1) + 1 + 3 + 1 + 1 + feature_width;
    }
    friend bool operator==(const GaussianLayout&, const GaussianLayout&) = default;
};

/// One spacetime splat in canonical space. The same struct doubles as the
/// gradient container for its own fields (see grad_gaussian_params).
struct SpacetimeGaussian {
    Vec3 canonical_pos = Vec3::Zero();
    std::vector<Vec3> motion_coeffs;  // b_k, k = 1..n_p
    double temporal_center_pos = 0.0;
    std::vector<Quat> rot_coeffs;  // c_k, k = 0..n_q
    double temporal_center_rot = 0.0;
    Vec3 log_scales = Vec3::Zero();
    double base_opacity = 0.0;  // logit
    double temporal_sharpness = 0.0;
    VecX appearance_feat;

    /// Static splat: zero motion, identity base rotation, given layout.
    static SpacetimeGaussian make(const GaussianLayout& layout);
    /// All-zero container with the layout of `like`.
    static SpacetimeGaussian zeros_like(const SpacetimeGaussian& like);

    [[nodiscard]] GaussianLayout layout() const;

    /// Flatten into `out` (size layout().parameter_count()) in declaration order.
    void pack(double* out) const;
    void unpack(const double* in);

    SpacetimeGaussian& operator+=(const SpacetimeGaussian& other);
};

using GaussianGrad = SpacetimeGaussian;

/// A splat evaluated at one time (and pose): world-space mean, covariance, opacity.
struct PosedGaussian {
    Vec3 position = Vec3::Zero();
    Mat3 covariance = Mat3::Identity();
    double opacity = 0.0;
    VecX appearance_feat;
};

/// Upstream gradients with respect to PosedGaussian fields. Matrix gradients
/// treat all nine entries as independent.
struct PosedGradient {
    Vec3 position = Vec3::Zero();
    Mat3 covariance = Mat3::Zero();
    double opacity = 0.0;
    VecX appearance_feat;
};

struct RotationEval {
    Quat q = identity_quat();
    bool degenerate = false;
};

/// Sum_{k=1..n_p} b_k (t - mu0)^k.
[[nodiscard]] Vec3 eval_motion_offset(const SpacetimeGaussian& g, double t);

/// Normalized Sum_{k=0..n_q} c_k (t - mu_tau)^k; identity when the raw norm is below 1e-8.
[[nodiscard]] RotationEval eval_rotation(const SpacetimeGaussian& g, double t);

/// R diag(exp(2 s)) R^T, symmetric by construction.
[[nodiscard]] Mat3 build_covariance(const Quat& q, const Vec3& log_scales);
[[nodiscard]] Mat3 build_covariance(const Mat3& rotation, const Vec3& log_scales);

/// sigmoid(logit) * exp(-s_tau (t - mu0)^2).
[[nodiscard]] double temporal_opacity(const SpacetimeGaussian& g, double t);

/// max over t in [0, 1] of temporal_opacity.
[[nodiscard]] double max_temporal_opacity(const SpacetimeGaussian& g);

/// Rigid-free evaluation: position = canonical_pos + motion offset.
[[nodiscard]] PosedGaussian evaluate_static(const SpacetimeGaussian& g, double t);

/// Shift a polynomial sum_k a_k (t - from)^k (k = 0..n) to the center `to`.
/// Coefficients are indexed from k = 0.
template <typename T>
std::vector<T> recenter_polynomial(const std::vector<T>& coeffs, double from, double to) {
    const std::size_t n = coeffs.size();
    std::vector<T> out(n);
    const double shift = to - from;
    for (std::size_t j = 0; j < n; ++j) {
        T acc = coeffs[j] * 0.0;
        double binom = 1.0;  // C(k, j) for k = j
        double power = 1.0;  // shift^(k - j)
        for (std::size_t k = j; k < n; ++k) {
            acc += coeffs[k] * (binom * power);
            binom = binom * static_cast<double>(k + 1) / static_cast<double>(k + 1 - j);
            power *= shift;
        }
        out[j] = acc;
    }
    return out;
}

/// Backward through position/rotation/covariance/opacity evaluation.
///
/// `lbs_jacobian` is d(posed position)/d(canonical_pos) and `bone_rotation`
/// the rotation composed in front of the evaluated quaternion; both default
/// to the identity for a static splat.
[[nodiscard]] GaussianGrad grad_gaussian_params(const SpacetimeGaussian& g, double t,
                                                const PosedGradient& upstream,
                                                const Mat3& lbs_jacobian = Mat3::Identity(),
                                                const Mat3& bone_rotation = Mat3::Identity());

}  // namespace stga
