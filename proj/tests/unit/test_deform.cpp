#include "doctest.h"
#include "test_support.hpp"

#include "stga/deform.hpp"
#include "stga/parallel.hpp"

#include <chrono>
#include <numbers>

using namespace stga;

namespace {

Pose random_pose(CounterRng& rng, std::size_t bones) {
    Pose p;
    for (std::size_t i = 0; i < bones; ++i) p.rotations.push_back(test::random_unit_quat(rng));
    p.root_translation = test::random_vec3(rng, -1, 1);
    return p;
}

BoneWeights two_bone_mix(CounterRng& rng) {
    BoneWeights w;
    w.count = 2;
    w.bones = {0, 1, 0, 0};
    w.weights[0] = rng.uniform(0.1, 0.9);
    w.weights[1] = 1.0 - w.weights[0];
    return w;
}

Camera test_camera() {
    Camera cam;
    cam.fx = cam.fy = 100.0;
    cam.cx = cam.cy = 32.0;
    cam.width = cam.height = 64;
    cam.world_to_camera = translation(Vec3(0, 0, 4));
    return cam;
}

}  // namespace

TEST_CASE("deform examples") {
    SpacetimeGaussian g = SpacetimeGaussian::make({});
    g.canonical_pos = Vec3(0.2, -0.4, 0.7);
    g.log_scales = Vec3(-1.0, -2.0, -0.5);
    const Skeleton skel({Bone{"root", -1, Mat4::Identity(), std::nullopt}});
    const BoneWeights w = BoneWeights::single(0);

    SUBCASE("both stages identity") {
        const PosedGaussian p = deform(g, w, DeformContext::make(skel, Pose::rest(1), 0.3));
        CHECK(p.position == g.canonical_pos);
        const Vec3 var = (2.0 * g.log_scales).array().exp();
        CHECK((p.covariance - Mat3(var.asDiagonal())).cwiseAbs().maxCoeff() < 1e-15);
    }
    SUBCASE("pure root translation") {
        Pose pose = Pose::rest(1);
        pose.root_translation = Vec3(1, -2, 0.5);
        const PosedGaussian p = deform(g, w, DeformContext::make(skel, pose, 0.3));
        CHECK((p.position - (g.canonical_pos + pose.root_translation)).norm() < 1e-15);
    }
    SUBCASE("pure spacetime offset") {
        g.motion_coeffs[0] = Vec3(1, 0, 0);
        g.temporal_center_pos = 0.25;
        const PosedGaussian p = deform(g, w, DeformContext::make(skel, Pose::rest(1), 0.5));
        CHECK(p.position == g.canonical_pos + Vec3(0.25, 0, 0));
    }
}

TEST_CASE("stage decoupling and additivity") {
    CounterRng rng(31);
    const Skeleton skel = test::two_bone_chain();
    for (int trial = 0; trial < 300; ++trial) {
        SpacetimeGaussian g = test::random_gaussian(rng);
        const BoneWeights w = two_bone_mix(rng);
        const double t = rng.uniform();
        const DeformContext posed = DeformContext::make(skel, random_pose(rng, 2), t);

        // Additivity: the position is exactly LBS plus the polynomial offset.
        const PosedGaussian p = deform(g, w, posed);
        const Vec3 lbs = lbs_transform(g.canonical_pos, w, posed.transforms);
        CHECK(p.position == lbs + eval_motion_offset(g, t));

        // Rest pose reduces to the pure spacetime evaluation.
        const PosedGaussian r = deform(g, w, DeformContext::make(skel, Pose::rest(2), t));
        const PosedGaussian s = evaluate_static(g, t);
        CHECK((r.position - s.position).norm() < 1e-15);
        CHECK((r.covariance - s.covariance).cwiseAbs().maxCoeff() < 1e-15);
        CHECK(r.opacity == s.opacity);

        // Zero spacetime coefficients reduce to LBS.
        for (Vec3& b : g.motion_coeffs) b.setZero();
        for (std::size_t k = 1; k < g.rot_coeffs.size(); ++k) g.rot_coeffs[k].setZero();
        CHECK(deform(g, w, posed).position == lbs);
    }
}

TEST_CASE("temporal continuity") {
    CounterRng rng(5);
    const Skeleton skel = test::two_bone_chain();
    const Pose pose = random_pose(rng, 2);
    for (int trial = 0; trial < 100; ++trial) {
        const SpacetimeGaussian g = test::random_gaussian(rng);
        const BoneWeights w = two_bone_mix(rng);
        // |d/dt sum b_k (t-mu)^k| <= sum k |b_k| for t, mu in [0,1].
        double lipschitz = 0.0;
        for (std::size_t k = 0; k < g.motion_coeffs.size(); ++k) {
            lipschitz += static_cast<double>(k + 1) * g.motion_coeffs[k].norm();
        }
        const double t = rng.uniform(0.0, 0.99);
        const double eps = 1e-3;
        const Vec3 a = deform_position(g, w, DeformContext::make(skel, pose, t));
        const Vec3 b = deform_position(g, w, DeformContext::make(skel, pose, t + eps));
        CHECK((b - a).norm() <= lipschitz * eps + 1e-15);
    }
}

TEST_CASE("deform gradients match finite differences") {
    CounterRng rng(404);
    const Skeleton skel = test::two_bone_chain();
    int failures = 0, total = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const SpacetimeGaussian g = test::random_gaussian(rng);
        const BoneWeights w = two_bone_mix(rng);
        const DeformContext ctx = DeformContext::make(skel, random_pose(rng, 2), rng.uniform());
        PosedGradient up;
        up.position = test::random_vec3(rng, -1, 1);
        for (int i = 0; i < 9; ++i) up.covariance.data()[i] = rng.uniform(-1, 1);
        up.opacity = rng.uniform(-1, 1);
        up.appearance_feat = VecX::Zero(g.appearance_feat.size());
        const VecX analytic = test::pack(deform_backward(g, w, ctx, up));
        const VecX numeric = test::central_difference(
            [&](const VecX& x) {
                SpacetimeGaussian h = g;
                h.unpack(x.data());
                const PosedGaussian p = deform(h, w, ctx);
                return up.position.dot(p.position) +
                       (up.covariance.array() * p.covariance.array()).sum() + up.opacity * p.opacity;
            },
            test::pack(g));
        for (Eigen::Index i = 0; i < analytic.size(); ++i) {
            ++total;
            if (!test::gradient_close(analytic[i], numeric[i], 1e-4, 1e-7)) ++failures;
        }
    }
    CHECK(failures == 0);
    CHECK(total > 1000);
}

TEST_CASE("deform_batch") {
    CounterRng rng(77);
    const Skeleton skel = test::two_bone_chain();
    const DeformContext ctx = DeformContext::make(skel, random_pose(rng, 2), 0.4);

    SUBCASE("empty") {
        CHECK(deform_batch({}, {}, ctx).empty());
    }
    SUBCASE("matches per-element deform") {
        std::vector<SpacetimeGaussian> gs;
        std::vector<BoneWeights> ws;
        for (int i = 0; i < 3000; ++i) {
            gs.push_back(test::random_gaussian(rng));
            ws.push_back(two_bone_mix(rng));
        }
        const auto batch = deform_batch(gs, ws, ctx);
        REQUIRE(batch.size() == gs.size());
        for (std::size_t i = 0; i < gs.size(); ++i) {
            const PosedGaussian p = deform(gs[i], ws[i], ctx);
            CHECK(batch[i].position == p.position);
            CHECK(batch[i].covariance == p.covariance);
            CHECK(batch[i].opacity == p.opacity);
        }
    }
    SUBCASE("size mismatch") {
        std::vector<SpacetimeGaussian> gs(2, SpacetimeGaussian::make({}));
        std::vector<BoneWeights> ws(1, BoneWeights::single(0));
        CHECK_THROWS_AS((void)deform_batch(gs, ws, ctx), ArgumentError);
    }
    SUBCASE("50k splats within the single-thread budget") {
        std::vector<SpacetimeGaussian> gs;
        std::vector<BoneWeights> ws;
        for (int i = 0; i < 50000; ++i) {
            gs.push_back(test::random_gaussian(rng));
            ws.push_back(two_bone_mix(rng));
        }
        const std::size_t saved = thread_count();
        set_thread_count(1);
        double best = 1e9;
        for (int rep = 0; rep < 3; ++rep) {
            const auto start = std::chrono::steady_clock::now();
            const auto out = deform_batch(gs, ws, ctx);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
            best = std::min(best, ms);
            CHECK(out.size() == gs.size());
        }
        set_thread_count(saved);
        MESSAGE("deform_batch 50k: " << best << " ms");
        CHECK(best < 50.0);
    }
}

TEST_CASE("screen velocity") {
    const Camera cam = test_camera();
    const Skeleton skel({Bone{"root", -1, Mat4::Identity(), std::nullopt}});
    const BoneWeights w = BoneWeights::single(0);

    SUBCASE("static splat") {
        SpacetimeGaussian g = SpacetimeGaussian::make({});
        const auto v = screen_velocity(g, w, DeformContext::rest(1, 0.6), DeformContext::rest(1, 0.5), cam);
        REQUIRE(v);
        CHECK(*v == Vec2::Zero());
    }
    SUBCASE("motion parallel to the image plane") {
        SpacetimeGaussian g = SpacetimeGaussian::make({});
        g.canonical_pos = Vec3(0, 0, 1);  // depth 5 in camera space
        Pose prev = Pose::rest(1), now = Pose::rest(1);
        now.root_translation = Vec3(0.1, 0, 0);
        const auto v = screen_velocity(g, w, DeformContext::make(skel, now, 0.5),
                                       DeformContext::make(skel, prev, 0.5), cam);
        REQUIRE(v);
        CHECK((*v)[0] == doctest::Approx(100.0 * 0.1 / 5.0).epsilon(1e-12));
        CHECK(std::abs((*v)[1]) < 1e-12);
    }
    SUBCASE("behind the camera") {
        SpacetimeGaussian g = SpacetimeGaussian::make({});
        g.canonical_pos = Vec3(0, 0, -5);
        CHECK_FALSE(screen_velocity(g, w, DeformContext::rest(1, 0.6), DeformContext::rest(1, 0.5), cam));
    }
    SUBCASE("small steps match the projection derivative") {
        CounterRng rng(9);
        for (int trial = 0; trial < 50; ++trial) {
            SpacetimeGaussian g = test::random_gaussian(rng);
            const double t = rng.uniform(0.1, 0.9);
            const double dt = 1e-6;
            const auto v = screen_velocity(g, w, DeformContext::rest(1, t + dt), DeformContext::rest(1, t), cam);
            REQUIRE(v);
            // Independent oracle: J_proj * d(mu)/dt * dt, with d(mu)/dt by central differences.
            const Vec3 mu = deform_position(g, w, DeformContext::rest(1, t + dt / 2));
            const double h = 1e-5;
            const Vec3 dmu = (deform_position(g, w, DeformContext::rest(1, t + dt / 2 + h)) -
                              deform_position(g, w, DeformContext::rest(1, t + dt / 2 - h))) /
                             (2 * h);
            const Vec3 pc = cam.to_camera(mu);
            const double z = pc.z();
            const Vec3 dpc = cam.rotation() * dmu;
            const Vec2 expected(cam.fx * (dpc.x() / z - pc.x() * dpc.z() / (z * z)) * dt,
                                cam.fy * (dpc.y() / z - pc.y() * dpc.z() / (z * z)) * dt);
            if (expected.norm() < 1e-9) continue;
            CHECK(((*v) - expected).norm() / expected.norm() < 1e-6);
        }
    }
}
