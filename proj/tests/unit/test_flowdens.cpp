#include "doctest.h"
#include "scene_support.hpp"

#include "stga/flowdens.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

using namespace stga;

namespace {

FlowField constant_flow(int h, int w, const Vec2& v) {
    FlowField f(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) f.set(y, x, v);
    }
    return f;
}

}  // namespace

TEST_CASE("dynamic detection") {
    Image a(4, 5, 3, 0.3);
    SUBCASE("identical images") {
        CHECK(detect_dynamic(a, a, 0.05).count() == 0);
    }
    SUBCASE("single erroneous pixel") {
        Image b = a;
        b.set_rgb(2, 3, Vec3::Constant(0.5));
        const Mask m = detect_dynamic(a, b, 0.1);
        CHECK(m.count() == 1);
        CHECK(m.at(2, 3));
    }
    SUBCASE("zero threshold") {
        Image b = a;
        b.at(1, 1, 2) = 0.3000001;
        b.at(0, 4, 0) = 0.9;
        const Mask m = detect_dynamic(a, b, 0.0);
        CHECK(m.count() == 2);
        CHECK(m.at(1, 1));
        CHECK(m.at(0, 4));
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS((void)detect_dynamic(a, Image(4, 4, 3), 0.1), ArgumentError);
    }
}

TEST_CASE("valid region") {
    SUBCASE("zero flow") {
        const std::vector<FlowField> h(6, FlowField(3, 3));
        CHECK(valid_region(h, 5, 1e-9).count() == 0);
    }
    SUBCASE("sustained motion") {
        const std::vector<FlowField> h(5, constant_flow(3, 3, Vec2(0.3, 0.4)));
        CHECK(valid_region(h, 4, 1.5).count() == 9);
        CHECK(accumulate_motion(h, 4)[0] == doctest::Approx(2.5).epsilon(1e-7));
    }
    SUBCASE("transient spike") {
        std::vector<FlowField> h{constant_flow(2, 2, Vec2(10, 0))};
        for (int k = 0; k < 4; ++k) h.push_back(FlowField(2, 2));
        CHECK(valid_region(h, 4, 12.0).count() == 0);
    }
    SUBCASE("window limits the history") {
        std::vector<FlowField> h{constant_flow(2, 2, Vec2(100, 0))};
        for (int k = 0; k < 3; ++k) h.push_back(constant_flow(2, 2, Vec2(1, 0)));
        CHECK(accumulate_motion(h, 2)[0] == 3.0);
        CHECK(accumulate_motion(h, 3)[0] == 103.0);
    }
    SUBCASE("larger threshold never grows the region") {
        CounterRng rng(1);
        std::vector<FlowField> h;
        for (int k = 0; k < 6; ++k) {
            FlowField f(8, 8);
            for (float& v : f.data) v = static_cast<float>(rng.uniform(-2, 2));
            h.push_back(f);
        }
        Mask prev = valid_region(h, 5, 0.1);
        for (double delta = 0.5; delta < 20.0; delta += 0.5) {
            const Mask m = valid_region(h, 5, delta);
            for (std::size_t i = 0; i < m.data.size(); ++i) CHECK((m.data[i] <= prev.data[i]));
            prev = m;
        }
    }
    SUBCASE("motion strength") {
        const std::vector<double> acc{0.0, 2.0, 4.0, 9.0};
        const auto w = motion_strength(acc, 2.0);
        CHECK(w == std::vector<double>{0.0, 0.5, 1.0, 1.0});
    }
}

TEST_CASE("flow-aligned sampling") {
    CounterRng rng(3);
    SUBCASE("zero noise offset") {
        const Vec3 off = flow_offset(Vec3(0.6, 0.8, 0), 1.0, 0.0, rng);
        CHECK(off == Vec3(0.6, 0.8, 0));
    }
    SUBCASE("zero step and noise") {
        CHECK(flow_offset(Vec3(0.6, 0.8, 0), 0.0, 0.0, rng) == Vec3::Zero());
    }
    SUBCASE("Monte-Carlo mean") {
        const Vec3 dir = Vec3(1, 2, -2).normalized();
        const double step = 0.01, spread = 0.0025;
        Vec3 mean = Vec3::Zero();
        const int n = 10000;
        for (int i = 0; i < n; ++i) mean += flow_offset(dir, step, spread, rng);
        mean /= n;
        CHECK((mean - step * dir).cwiseAbs().maxCoeff() <= 3.0 * spread / std::sqrt(double(n)));
    }
    SUBCASE("zero noise gives exact step and direction") {
        const Camera cam = test::square_camera(64, 80.0, 4.0);
        const Skeleton skel = test::two_bone_chain();
        Pose pose = Pose::rest(2);
        pose.rotations[1] = axis_angle_quat(Vec3(0.2, 0.3, 1).normalized(), 0.7);
        for (int trial = 0; trial < 200; ++trial) {
            const SpacetimeGaussian seed = test::random_gaussian(rng);
            BoneWeights w;
            w.count = 2;
            w.bones = {0, 1, 0, 0};
            w.weights[0] = rng.uniform(0.2, 0.8);
            w.weights[1] = 1.0 - w.weights[0];
            const double t = rng.uniform();
            const DeformContext ctx = DeformContext::make(skel, pose, t);
            const Vec2 flow(rng.uniform(-3, 3), rng.uniform(-3, 3));
            const double step = rng.uniform(0.001, 0.1);
            const auto g = sample_along_flow(seed, w, ctx, flow, cam, step, 0.0, rng);
            REQUIRE(g);
            const Vec3 off = deform_position(*g, w, ctx) - deform_position(seed, w, ctx);
            CHECK(std::abs(off.norm() - step) < 1e-12);
            const Vec3 expect = *lift_flow_direction(cam, flow, cam.to_camera(deform_position(seed, w, ctx)).z());
            CHECK((off / off.norm() - expect).norm() < 1e-10);
            // The lifted direction lies in a plane parallel to the image plane
            // and projects onto the flow direction.
            const Vec3 dc = cam.rotation() * expect;
            CHECK(std::abs(dc.z()) < 1e-12);
            CHECK((Vec2(dc.x(), dc.y()).normalized() - flow.normalized()).norm() < 1e-12);
            CHECK(g->temporal_center_pos == t);
            CHECK(g->temporal_center_rot == t);
            // Rotation is unchanged at t.
            CHECK((eval_rotation(*g, t).q - eval_rotation(seed, t).q).norm() < 1e-12);
        }
    }
    SUBCASE("zero flow is rejected") {
        const Camera cam = test::square_camera(32, 40.0, 4.0);
        const SpacetimeGaussian seed = SpacetimeGaussian::make({});
        CHECK_FALSE(sample_along_flow(seed, BoneWeights::single(0), DeformContext::rest(1, 0.5),
                                      Vec2::Zero(), cam, 0.01, 0.0, rng));
    }
}

TEST_CASE("temporal consistency") {
    const Camera cam = test::square_camera(64, 80.0, 4.0);
    SUBCASE("static point with zero flow") {
        const Vec3 p(0.1, 0.2, 0.0);
        CHECK(check_consistency(p, p, FlowField(64, 64), cam, cam, 2.0) == Consistency::Accept);
    }
    SUBCASE("moving with the flow") {
        // One pixel at depth 4 with focal 80 is 0.05 world units.
        const Vec3 p(0.1, 0.2, 0.0);
        CHECK(check_consistency(p, p + Vec3(0.05, 0, 0), constant_flow(64, 64, Vec2(1, 0)), cam, cam, 2.0) ==
              Consistency::Accept);
    }
    SUBCASE("moving against the flow") {
        const Vec3 p(0.1, 0.2, 0.0);
        CHECK(check_consistency(p, p - Vec3(0.25, 0, 0), constant_flow(64, 64, Vec2(5, 0)), cam, cam, 2.0) ==
              Consistency::Flag);
    }
    SUBCASE("behind the camera") {
        CHECK(check_consistency(Vec3(0, 0, -10), Vec3(0, 0, -10), FlowField(64, 64), cam, cam, 2.0) ==
              Consistency::Flag);
    }
    SUBCASE("two strikes") {
        int s = 0;
        s = update_strikes(s, Consistency::Flag);
        CHECK(s == 1);
        s = update_strikes(s, Consistency::Accept);
        CHECK(s == 0);
        s = update_strikes(update_strikes(s, Consistency::Flag), Consistency::Flag);
        CHECK(s == kConsistencyStrikes);
    }
}

TEST_CASE("flow-weighted contribution and pruning") {
    CHECK(flow_weighted_contribution(2.0, 0.7, 0.0) == 2.0);
    CHECK(flow_weighted_contribution(2.0, 1.0, 0.5) == 3.0);
    CHECK(flow_weighted_contribution(2.0, 0.0, 0.5) == 2.0);
    SUBCASE("monotone in W and gamma") {
        for (double w = 0.0; w < 1.0; w += 0.1) {
            CHECK(flow_weighted_contribution(1.3, w + 0.1, 0.5) >= flow_weighted_contribution(1.3, w, 0.5));
            CHECK(flow_weighted_contribution(1.3, 0.4, w + 0.1) >= flow_weighted_contribution(1.3, 0.4, w));
        }
    }
    SUBCASE("no removals under budget") {
        const std::vector<PruneCandidate> c(5, PruneCandidate{0.5, 1.0, 0.0, true});
        CHECK(prune(c, 0.005, 0.5, 10).size() == 5);
    }
    SUBCASE("motion protects the moving splat") {
        const std::vector<PruneCandidate> c{{0.5, 1.0, 0.0, false}, {0.5, 1.0, 1.0, false}};
        CHECK(prune(c, 0.005, 0.5, 1) == std::vector<std::size_t>{1});
    }
    SUBCASE("opacity floor dominates") {
        const std::vector<PruneCandidate> c{{0.0, 100.0, 1.0, true}, {0.5, 1.0, 0.0, true}};
        CHECK(prune(c, 0.005, 0.5, 10) == std::vector<std::size_t>{1});
    }
    SUBCASE("consistent high-motion splats are kept over budget") {
        const std::vector<PruneCandidate> c{{0.5, 0.1, 0.9, true}, {0.5, 5.0, 0.0, true}, {0.5, 4.0, 0.0, true}};
        CHECK(prune(c, 0.005, 0.5, 1) == std::vector<std::size_t>{0});
    }
}

TEST_CASE("density trigger") {
    DensifyConfig cfg;
    cfg.cell_size = 4;
    const Mask dyn(8, 8, true);
    SUBCASE("uniform density at target") {
        const Mask valid(8, 8, true);
        const std::vector<double> strength(64, 0.0);
        std::vector<Vec2> px;
        for (int c = 0; c < 4; ++c) {
            for (int k = 0; k < 3; ++k) px.emplace_back((c % 2) * 4 + 1, (c / 2) * 4 + 1);
        }
        const DensityReport r = density_report(px, dyn, valid, strength, cfg);
        CHECK(r.base_density == 3.0);
        CHECK(density_trigger(r).empty());
    }
    SUBCASE("empty cell inside the valid region") {
        const Mask valid(8, 8, true);
        const std::vector<double> strength(64, 0.0);
        const std::vector<Vec2> px{Vec2(1, 1), Vec2(5, 1), Vec2(1, 5)};
        const DensityReport r = density_report(px, dyn, valid, strength, cfg);
        CHECK(density_trigger(r) == std::vector<int>{3});
    }
    SUBCASE("cells outside the valid region are never triggered") {
        Mask valid(8, 8, false);
        valid.set(0, 0, true);
        const std::vector<double> strength(64, 1.0);
        const std::vector<Vec2> px{Vec2(1, 1), Vec2(5, 1), Vec2(5, 1), Vec2(5, 1)};
        const DensityReport r = density_report(px, dyn, valid, strength, cfg);
        CHECK(density_trigger(r) == std::vector<int>{0});
        CHECK(density_ratio(r) == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("coverage-normalized density ratio") {
    // Left half moving, right half static; the figure covers 8 moving and 4
    // static pixels.
    Mask valid(4, 4, false);
    Mask covered(4, 4, false);
    for (int y = 0; y < 4; ++y) {
        valid.set(y, 0, true);
        valid.set(y, 1, true);
        covered.set(y, 0, true);
        covered.set(y, 1, true);
    }
    covered.set(0, 2, true);
    covered.set(1, 2, true);
    covered.set(2, 2, true);
    covered.set(3, 2, true);
    std::vector<Vec2> px;
    for (int i = 0; i < 8; ++i) px.emplace_back(0.2, 1.0);  // 8 per 8 moving pixels
    for (int i = 0; i < 2; ++i) px.emplace_back(2.1, 3.0);  // 2 per 4 static pixels
    CHECK(coverage_density_ratio(px, valid, covered) == doctest::Approx(2.0));

    px.emplace_back(-3.0, 1.0);  // off-image: ignored
    CHECK(coverage_density_ratio(px, valid, covered) == doctest::Approx(2.0));

    // Same density per covered pixel reads as 1 regardless of covered area.
    std::vector<Vec2> even;
    for (int i = 0; i < 8; ++i) even.emplace_back(1.0, 2.0);
    for (int i = 0; i < 4; ++i) even.emplace_back(2.0, 0.0);
    CHECK(coverage_density_ratio(even, valid, covered) == doctest::Approx(1.0));

    CHECK(coverage_density_ratio(std::vector<Vec2>{Vec2(0, 0)}, valid, covered) == 0.0);
    CHECK_THROWS_AS((void)coverage_density_ratio(px, valid, Mask(3, 4)), ArgumentError);
}

TEST_CASE("flow refinement") {
    const std::vector<Vec2> est{Vec2(1, 0)}, traj{Vec2(0, 1)};
    CHECK(refine_flow(est, traj, 0.0)[0] == est[0]);
    CHECK(refine_flow(est, traj, 0.5)[0] == Vec2(0.5, 0.5));
    CHECK(flow_residual(refine_flow(est, traj, 1.0), traj) == 0.0);
    CounterRng rng(2);
    std::vector<Vec2> e, t;
    for (int i = 0; i < 50; ++i) {
        e.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3));
        t.emplace_back(rng.uniform(-3, 3), rng.uniform(-3, 3));
    }
    double prev = flow_residual(refine_flow(e, t, 0.0), t);
    for (double b = 0.05; b <= 1.0; b += 0.05) {
        const double r = flow_residual(refine_flow(e, t, b), t);
        CHECK(r < prev);
        prev = r;
    }
}

TEST_CASE(".flo round trip and layout") {
    CounterRng rng(7);
    FlowField f(5, 7);
    for (float& v : f.data) v = static_cast<float>(rng.uniform(-10, 10));
    const std::string path = "test_flowdens_roundtrip.flo";
    write_flo(path, f);
    const FlowField back = read_flo(path);
    CHECK(back.height == 5);
    CHECK(back.width == 7);
    CHECK(std::memcmp(back.data.data(), f.data.data(), f.data.size() * sizeof(float)) == 0);

    // Header bytes by hand.
    std::ifstream is(path, std::ios::binary);
    unsigned char header[12];
    is.read(reinterpret_cast<char*>(header), 12);
    float magic;
    std::memcpy(&magic, header, 4);
    CHECK(magic == 202021.25f);
    CHECK(header[4] == 7);
    CHECK(header[8] == 5);
    is.close();
    std::remove(path.c_str());

    std::ofstream bad("bad.flo", std::ios::binary);
    bad << "garbage-bytes";
    bad.close();
    CHECK_THROWS_AS((void)read_flo("bad.flo"), DataError);
    std::remove("bad.flo");
}

TEST_CASE("bilinear flow lookup") {
    FlowField f(2, 2);
    f.set(0, 0, Vec2(0, 0));
    f.set(0, 1, Vec2(2, 0));
    f.set(1, 0, Vec2(0, 4));
    f.set(1, 1, Vec2(2, 4));
    CHECK(*f.sample(Vec2(0.5, 0.5)) == Vec2(1, 2));
    CHECK(*f.sample(Vec2(1, 1)) == Vec2(2, 4));
    CHECK_FALSE(f.sample(Vec2(-1, 0)));
}
