#pragma once

// Test-only helpers: random generators and central finite differences. These
// never call into the analytic backward code they are used to check.

#include "stga/gaussian.hpp"
#include "stga/rng.hpp"
#include "stga/skeleton.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace stga::test {

inline Vec3 random_vec3(CounterRng& rng, double lo, double hi) {
    return Vec3(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi));
}

inline Quat random_unit_quat(CounterRng& rng) {
    Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q / q.norm();
}

/// Random splat with nonzero polynomial terms everywhere.
inline SpacetimeGaussian random_gaussian(CounterRng& rng, const GaussianLayout& layout = {}) {
    SpacetimeGaussian g = SpacetimeGaussian::make(layout);
    g.canonical_pos = random_vec3(rng, -1.0, 1.0);
    for (Vec3& b : g.motion_coeffs) b = random_vec3(rng, -0.5, 0.5);
    g.temporal_center_pos = rng.uniform(0.0, 1.0);
    g.rot_coeffs[0] = random_unit_quat(rng);
    for (std::size_t k = 1; k < g.rot_coeffs.size(); ++k) {
        g.rot_coeffs[k] = Quat(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                               rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
    }
    g.temporal_center_rot = rng.uniform(0.0, 1.0);
    g.log_scales = random_vec3(rng, -2.5, -0.5);
    g.base_opacity = rng.uniform(-2.0, 2.0);
    g.temporal_sharpness = rng.uniform(0.0, 3.0);
    for (Eigen::Index i = 0; i < g.appearance_feat.size(); ++i) g.appearance_feat[i] = rng.normal();
    return g;
}

/// Central differences of f at x: returns df/dx_i for every i.
inline VecX central_difference(const std::function<double(const VecX&)>& f, const VecX& x,
                               double h = 1e-5) {
    VecX grad(x.size());
    VecX probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

/// |a - b| within rel * max(|a|, |b|) or abs.
inline bool gradient_close(double analytic, double numeric, double rel, double abs_tol) {
    const double diff = std::abs(analytic - numeric);
    return diff <= abs_tol || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

inline VecX pack(const SpacetimeGaussian& g) {
    VecX v(g.layout().parameter_count());
    g.pack(v.data());
    return v;
}

/// Two-bone chain along +x used by several tests.
inline Skeleton two_bone_chain() {
    std::vector<Bone> bones(2);
    bones[0].name = "root";
    bones[0].tail = Vec3(1.0, 0.0, 0.0);
    bones[1].name = "child";
    bones[1].parent = 0;
    bones[1].rest = translation(Vec3(1.0, 0.0, 0.0));
    bones[1].tail = Vec3(1.0, 0.0, 0.0);
    return Skeleton(std::move(bones));
}

}  // namespace stga::test
