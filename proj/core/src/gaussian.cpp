#include "stga/gaussian.hpp"

#include <algorithm>
#include <cmath>

namespace stga {

SpacetimeGaussian SpacetimeGaussian::make(const GaussianLayout& layout) {
    SpacetimeGaussian g;
    g.motion_coeffs.assign(static_cast<std::size_t>(layout.motion_order), Vec3::Zero());
    g.rot_coeffs.assign(static_cast<std::size_t>(layout.rotation_order + 1), Quat::Zero());
    g.rot_coeffs[0] = identity_quat();
    g.appearance_feat = VecX::Zero(layout.feature_width);
    return g;
}

SpacetimeGaussian SpacetimeGaussian::zeros_like(const SpacetimeGaussian& like) {
    SpacetimeGaussian g = make(like.layout());
    g.rot_coeffs[0] = Quat::Zero();
    return g;
}

GaussianLayout SpacetimeGaussian::layout() const {
    return GaussianLayout{static_cast<int>(motion_coeffs.size()),
                          static_cast<int>(rot_coeffs.size()) - 1,
                          static_cast<int>(appearance_feat.size())};
}

void SpacetimeGaussian::pack(double* out) const {
    auto put3 = [&out](const Vec3& v) {
        out[0] = v[0];
        out[1] = v[1];
        out[2] = v[2];
        out += 3;
    };
    put3(canonical_pos);
    for (const Vec3& b : motion_coeffs) put3(b);
    *out++ = temporal_center_pos;
    for (const Quat& c : rot_coeffs) {
        for (int i = 0; i < 4; ++i) *out++ = c[i];
    }
    *out++ = temporal_center_rot;
    put3(log_scales);
    *out++ = base_opacity;
    *out++ = temporal_sharpness;
    for (Eigen::Index i = 0; i < appearance_feat.size(); ++i) *out++ = appearance_feat[i];
}

void SpacetimeGaussian::unpack(const double* in) {
    auto get3 = [&in](Vec3& v) {
        v = Vec3(in[0], in[1], in[2]);
        in += 3;
    };
    get3(canonical_pos);
    for (Vec3& b : motion_coeffs) get3(b);
    temporal_center_pos = *in++;
    for (Quat& c : rot_coeffs) {
        for (int i = 0; i < 4; ++i) c[i] = *in++;
    }
    temporal_center_rot = *in++;
    get3(log_scales);
    base_opacity = *in++;
    temporal_sharpness = *in++;
    for (Eigen::Index i = 0; i < appearance_feat.size(); ++i) appearance_feat[i] = *in++;
}

SpacetimeGaussian& SpacetimeGaussian::operator+=(const SpacetimeGaussian& o) {
    canonical_pos += o.canonical_pos;
    for (std::size_t k = 0; k < motion_coeffs.size(); ++k) motion_coeffs[k] += o.motion_coeffs[k];
    temporal_center_pos += o.temporal_center_pos;
    for (std::size_t k = 0; k < rot_coeffs.size(); ++k) rot_coeffs[k] += o.rot_coeffs[k];
    temporal_center_rot += o.temporal_center_rot;
    log_scales += o.log_scales;
    base_opacity += o.base_opacity;
    temporal_sharpness += o.temporal_sharpness;
    appearance_feat += o.appearance_feat;
    return *this;
}

Vec3 eval_motion_offset(const SpacetimeGaussian& g, double t) {
    const double dt = t - g.temporal_center_pos;
    Vec3 out = Vec3::Zero();
    double power = dt;
    for (const Vec3& b : g.motion_coeffs) {
        out += b * power;
        power *= dt;
    }
    return out;
}

namespace {

Quat raw_rotation(const SpacetimeGaussian& g, double t) {
    const double dt = t - g.temporal_center_rot;
    Quat q = Quat::Zero();
    double power = 1.0;
    for (const Quat& c : g.rot_coeffs) {
        q += c * power;
        power *= dt;
    }
    return q;
}

constexpr double kDegenerateNorm = 1e-8;

}  // namespace

RotationEval eval_rotation(const SpacetimeGaussian& g, double t) {
    const Quat raw = raw_rotation(g, t);
    const double n = raw.norm();
    if (n < kDegenerateNorm) return {identity_quat(), true};
    return {raw / n, false};
}

Mat3 build_covariance(const Mat3& r, const Vec3& log_scales) {
    const Vec3 s2 = (2.0 * log_scales).array().exp();
    Mat3 cov;
    for (int i = 0; i < 3; ++i) {
        for (int j = i; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += r(i, k) * s2[k] * r(j, k);
            cov(i, j) = acc;
            cov(j, i) = acc;
        }
    }
    return cov;
}

Mat3 build_covariance(const Quat& q, const Vec3& log_scales) {
    return build_covariance(quat_to_matrix(q), log_scales);
}

double temporal_opacity(const SpacetimeGaussian& g, double t) {
    const double dt = t - g.temporal_center_pos;
    return sigmoid(g.base_opacity) * std::exp(-g.temporal_sharpness * dt * dt);
}

double max_temporal_opacity(const SpacetimeGaussian& g) {
    const double closest = std::clamp(g.temporal_center_pos, 0.0, 1.0);
    return temporal_opacity(g, closest);
}

PosedGaussian evaluate_static(const SpacetimeGaussian& g, double t) {
    PosedGaussian p;
    p.position = g.canonical_pos + eval_motion_offset(g, t);
    p.covariance = build_covariance(eval_rotation(g, t).q, g.log_scales);
    p.opacity = temporal_opacity(g, t);
    p.appearance_feat = g.appearance_feat;
    return p;
}

GaussianGrad grad_gaussian_params(const SpacetimeGaussian& g, double t, const PosedGradient& up,
                                  const Mat3& lbs_jacobian, const Mat3& bone_rotation) {
    GaussianGrad grad = GaussianGrad::zeros_like(g);

    // Position: mu = J x_c + const + sum_k b_k dt^k.
    const double dtp = t - g.temporal_center_pos;
    grad.canonical_pos = lbs_jacobian.transpose() * up.position;
    double power = 1.0;  // dt^(k-1)
    Vec3 dmu_dcenter = Vec3::Zero();
    for (std::size_t k = 0; k < g.motion_coeffs.size(); ++k) {
        const double order = static_cast<double>(k + 1);
        dmu_dcenter -= order * power * g.motion_coeffs[k];
        power *= dtp;
        grad.motion_coeffs[k] = up.position * power;
    }
    grad.temporal_center_pos = up.position.dot(dmu_dcenter);

    // Opacity: sigma = sigmoid(l) exp(-s dt^2).
    const double sig = sigmoid(g.base_opacity);
    const double decay = std::exp(-g.temporal_sharpness * dtp * dtp);
    const double opacity = sig * decay;
    grad.base_opacity = up.opacity * sig * (1.0 - sig) * decay;
    grad.temporal_sharpness = -up.opacity * opacity * dtp * dtp;
    grad.temporal_center_pos += up.opacity * opacity * 2.0 * g.temporal_sharpness * dtp;

    // Covariance: Sigma = M M^T with M = R_bone R(q) S.
    const Quat raw = raw_rotation(g, t);
    const double qnorm = raw.norm();
    const bool degenerate = qnorm < kDegenerateNorm;
    const Quat q = degenerate ? identity_quat() : Quat(raw / qnorm);
    const Mat3 rq = quat_to_matrix(q);
    const Mat3 r = bone_rotation * rq;
    const Vec3 scales = g.log_scales.array().exp();
    const Mat3 m = r * scales.asDiagonal();
    const Mat3 dm = (up.covariance + up.covariance.transpose()) * m;
    const Mat3 dr = dm * scales.asDiagonal();
    const Mat3 rt_dm = r.transpose() * dm;
    for (int j = 0; j < 3; ++j) grad.log_scales[j] = rt_dm(j, j) * scales[j];

    if (!degenerate) {
        const Mat3 drq = bone_rotation.transpose() * dr;
        const Quat dq = quat_to_matrix_backward(q, drq);
        const Quat draw = (dq - q * q.dot(dq)) / qnorm;
        const double dtr = t - g.temporal_center_rot;
        double p = 1.0;
        Quat dq_dcenter = Quat::Zero();
        for (std::size_t k = 0; k < g.rot_coeffs.size(); ++k) {
            grad.rot_coeffs[k] = draw * p;
            if (k + 1 < g.rot_coeffs.size()) {
                dq_dcenter -= static_cast<double>(k + 1) * p * g.rot_coeffs[k + 1];
            }
            p *= dtr;
        }
        grad.temporal_center_rot = draw.dot(dq_dcenter);
    }

    if (up.appearance_feat.size() == g.appearance_feat.size()) {
        grad.appearance_feat = up.appearance_feat;
    }
    return grad;
}

}  // namespace stga
