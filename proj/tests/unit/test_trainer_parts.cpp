#include "doctest.h"

#include "scene_support.hpp"
#include "test_support.hpp"

#include "stga/losses.hpp"
#include "stga/metrics.hpp"
#include "stga/model.hpp"
#include "stga/optim.hpp"

#include <cmath>
#include <limits>

using namespace stga;
using namespace stga::test;

namespace {

Image constant_image(int h, int w, double v) { return Image(h, w, 3, v); }

Image random_image(CounterRng& rng, int h, int w) {
    Image img(h, w, 3);
    for (double& v : img.data) v = rng.uniform();
    return img;
}

}  // namespace

TEST_CASE("psnr examples") {
    CounterRng rng(1);
    const Image a = random_image(rng, 8, 8);
    CHECK(psnr(a, a) == kPsnrCap);
    // mse = 0.01 everywhere -> 20 dB
    Image b = a;
    for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] = a.data[i] + (i % 2 ? 0.1 : -0.1);
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK_THROWS_AS((void)psnr(a, Image(4, 4, 3)), ArgumentError);
}

TEST_CASE("ssim examples") {
    CounterRng rng(2);
    const Image a = random_image(rng, 20, 17);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-14));

    // Constant images: variances vanish, only the luminance term is left.
    const double c1 = 0.01 * 0.01;
    const double ma = 0.25, mb = 0.75;
    const double luminance = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    CHECK(ssim(constant_image(16, 16, ma), constant_image(16, 16, mb)) ==
          doctest::Approx(luminance).epsilon(1e-12));
    CHECK_THROWS_AS((void)ssim(a, Image(20, 16, 3)), ArgumentError);

    // symmetric, bounded
    const Image b = random_image(rng, 20, 17);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-14));
    CHECK(ssim(a, b) <= 1.0);
    CHECK(ssim(a, b) >= -1.0);
}

TEST_CASE("ssim gradient matches finite differences") {
    CounterRng rng(3);
    const Image a = random_image(rng, 9, 12);
    const Image b = random_image(rng, 9, 12);
    const SsimGrad g = ssim_with_grad(a, b);
    CHECK(g.value == doctest::Approx(ssim(a, b)).epsilon(1e-14));
    const VecX x = Eigen::Map<const VecX>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
    const VecX fd = central_difference(
        [&](const VecX& v) {
            Image p = a;
            for (Eigen::Index i = 0; i < v.size(); ++i) p.data[i] = v[i];
            return ssim(p, b);
        },
        x, 1e-5);
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
        CHECK(gradient_close(g.grad.data[i], fd[i], 1e-5, 1e-9));
    }
}

TEST_CASE("loss_rgb examples and gradient") {
    CounterRng rng(4);
    const Image a = random_image(rng, 12, 12);
    CHECK(loss_rgb(a, a, 0.2) == doctest::Approx(0.0).scale(1.0));
    CHECK(loss_rgb(constant_image(6, 6, 1.0), constant_image(6, 6, 0.0), 0.0) == 1.0);
    CHECK(loss_rgb(a, a, 1.0) == doctest::Approx(0.0).scale(1.0));
    CHECK_THROWS_AS((void)loss_rgb(a, Image(3, 3, 3), 0.2), ArgumentError);

    const Image b = random_image(rng, 12, 12);
    Image grad;
    const double l = loss_rgb(a, b, 0.2, &grad);
    CHECK(l == doctest::Approx(loss_rgb(a, b, 0.2)).epsilon(1e-14));
    const VecX x = Eigen::Map<const VecX>(a.data.data(), static_cast<Eigen::Index>(a.data.size()));
    const VecX fd = central_difference(
        [&](const VecX& v) {
            Image p = a;
            for (Eigen::Index i = 0; i < v.size(); ++i) p.data[i] = v[i];
            return loss_rgb(p, b, 0.2);
        },
        x, 1e-7);
    for (Eigen::Index i = 0; i < fd.size(); ++i) CHECK(gradient_close(grad.data[i], fd[i], 1e-4, 1e-9));
}

TEST_CASE("loss_flow examples") {
    const std::vector<Vec2> v{Vec2(1, 2), Vec2(-3, 0.5)};
    const std::vector<double> w{0.7, 0.3};
    CHECK(loss_flow(v, v, w) == 0.0);
    const std::vector<Vec2> one_v{Vec2(1, 0)}, one_f{Vec2(0, 0)};
    const std::vector<double> one_w{1.0};
    CHECK(loss_flow(one_v, one_f, one_w) == 1.0);

    // a zero-weight splat contributes nothing
    const std::vector<Vec2> v2{Vec2(1, 0), Vec2(50, 50)}, f2{Vec2(0, 0), Vec2(0, 0)};
    const std::vector<double> w2{1.0, 0.0};
    std::vector<Vec2> grad;
    CHECK(loss_flow(v2, f2, w2, &grad) == 1.0);
    CHECK(grad[1].isZero());
    CHECK(grad[0] == Vec2(1, 0));

    const std::vector<double> none{0.0, 0.0};
    CHECK(loss_flow(v2, f2, none) == 0.0);
    CHECK_THROWS_AS((void)loss_flow(v2, one_f, w2), ArgumentError);
}

TEST_CASE("loss_temp examples") {
    const Image a = constant_image(4, 4, 0.3);
    Mask none(4, 4);
    CHECK(loss_temp(a, a, none) == 0.0);

    Mask all(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) all.set(y, x, true);
    Image b = constant_image(4, 4, 0.9);
    CHECK(loss_temp(a, b, all) == 0.0);

    // every static pixel flickers by 0.1
    Image c = constant_image(4, 4, 0.4);
    CHECK(loss_temp(c, a, none) == doctest::Approx(0.1).epsilon(1e-12));
    // moving pixels are ignored
    Mask half(4, 4);
    for (int x = 0; x < 4; ++x) half.set(0, x, true);
    Image d = c;
    for (int x = 0; x < 4; ++x) d.set_rgb(0, x, Vec3(5, 5, 5));
    CHECK(loss_temp(d, a, half) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("loss_reg examples and gradient") {
    GaussianLayout layout;
    SpacetimeGaussian g = SpacetimeGaussian::make(layout);
    g.rot_coeffs[0] = Quat::Zero();
    g.base_opacity = -std::numeric_limits<double>::infinity();
    const std::vector<SpacetimeGaussian> zero{g};
    CHECK(loss_reg(zero) == 0.0);

    // doubling b_2 quadruples its term
    SpacetimeGaussian h = SpacetimeGaussian::make(layout);
    h.rot_coeffs[0] = Quat::Zero();
    h.base_opacity = -1000.0;
    h.motion_coeffs[1] = Vec3(0.1, -0.2, 0.3);
    const double t1 = loss_reg(std::vector<SpacetimeGaussian>{h});
    h.motion_coeffs[1] *= 2.0;
    CHECK(loss_reg(std::vector<SpacetimeGaussian>{h}) == doctest::Approx(4.0 * t1).epsilon(1e-12));
    CHECK(t1 == doctest::Approx(4.0 * 0.14).epsilon(1e-12));

    // a static splat only pays for opacity
    SpacetimeGaussian s = SpacetimeGaussian::make(layout);
    s.base_opacity = 0.3;
    CHECK(loss_reg(std::vector<SpacetimeGaussian>{s}) == doctest::Approx(sigmoid(0.3)).epsilon(1e-14));

    CounterRng rng(5);
    std::vector<SpacetimeGaussian> gs{random_gaussian(rng), random_gaussian(rng), random_gaussian(rng)};
    std::vector<SpacetimeGaussian> grads;
    for (const auto& x : gs) grads.push_back(SpacetimeGaussian::zeros_like(x));
    (void)loss_reg(gs, grads, 1.0);
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const VecX fd = central_difference(
            [&](const VecX& v) {
                auto copy = gs;
                copy[i].unpack(v.data());
                return loss_reg(copy);
            },
            pack(gs[i]), 1e-6);
        const VecX an = pack(grads[i]);
        for (Eigen::Index k = 0; k < fd.size(); ++k) CHECK(gradient_close(an[k], fd[k], 1e-6, 1e-9));
    }
}

TEST_CASE("loss breakdown assembly") {
    LossBreakdown b;
    b.rgb = 0.5;
    b.flow = 2.0;
    b.temp = 0.25;
    b.reg = 3.0;
    b.lambda = {0.1, 0.2, 0.01};
    b.assemble();
    CHECK(b.total == doctest::Approx(0.5 + 0.2 + 0.05 + 0.03).epsilon(1e-15));
}

TEST_CASE("adaptive weights") {
    const std::array<double, 3> r{0.1, 0.05, 0.01};
    auto l = adaptive_weights(1.0, {2.0, 1.0, 1.0}, r);
    CHECK(l[0] == doctest::Approx(0.05).epsilon(1e-15));
    l = adaptive_weights(1.0, {0.0, 1e-30, 1.0}, r);
    CHECK(l[0] == 10.0);
    CHECK(l[1] == 10.0);
    l = adaptive_weights(0.7, {0.7, 0.7, 0.7}, r);
    CHECK(l[0] == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(l[1] == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(l[2] == doctest::Approx(0.01).epsilon(1e-15));
}

TEST_CASE("adam first step and zero gradient") {
    std::vector<double> p{0.5};
    std::vector<double> g{1.0};
    AdamState st;
    st.resize(1);
    CHECK(adam_step(p, g, st, 0.01));
    CHECK(p[0] == doctest::Approx(0.5 - 0.01).epsilon(1e-9));

    std::vector<double> q{1.0, -2.0};
    std::vector<double> zero{0.0, 0.0};
    AdamState fresh;
    fresh.resize(2);
    CHECK(adam_step(q, zero, fresh, 0.1));
    CHECK(q == std::vector<double>{1.0, -2.0});
    CHECK(fresh.step == 1);
    CHECK(fresh.m == std::vector<double>{0.0, 0.0});
    CHECK(fresh.v == std::vector<double>{0.0, 0.0});
}

TEST_CASE("adam skips non-finite gradients") {
    std::vector<double> p{1.0, 2.0};
    std::vector<double> g{0.5, std::numeric_limits<double>::quiet_NaN()};
    AdamState st;
    CHECK_FALSE(adam_step(p, g, st, 0.1));
    CHECK(p == std::vector<double>{1.0, 2.0});
    CHECK(st.skipped == 1);
    CHECK(st.m == std::vector<double>{0.0, 0.0});
    std::vector<double> wrong{1.0};
    CHECK_THROWS_AS(adam_step(p, wrong, st, 0.1), ArgumentError);
}

TEST_CASE("adam matches a reference trace on a quadratic") {
    // f = 0.5 sum a_i x_i^2, lr 0.01; reference values from an independent
    // float64 implementation.
    const std::array<double, 3> a{1.0, 10.0, 0.1};
    std::vector<double> x{1.0, -2.0, 3.0};
    AdamState st;
    for (int t = 1; t <= 100; ++t) {
        std::vector<double> g{a[0] * x[0], a[1] * x[1], a[2] * x[2]};
        REQUIRE(adam_step(x, g, st, 0.01));
        if (t == 1) {
            CHECK(std::abs(x[0] - 0.9900000001) < 1e-10);
            CHECK(std::abs(x[1] - -1.990000000005) < 1e-10);
            CHECK(std::abs(x[2] - 2.990000000333333) < 1e-10);
        }
        if (t == 10) {
            CHECK(std::abs(x[0] - 0.9003496545137929) < 1e-10);
            CHECK(std::abs(x[1] - -1.9001677671094168) < 1e-10);
            CHECK(std::abs(x[2] - 2.900110330186149) < 1e-10);
        }
    }
    CHECK(std::abs(x[0] - 0.22444604847172522) < 1e-10);
    CHECK(std::abs(x[1] - -1.0984483741779925) < 1e-10);
    CHECK(std::abs(x[2] - 2.0624464299194445) < 1e-10);
}

TEST_CASE("adam per-element rates; zero rate freezes") {
    std::vector<double> p{1.0, 1.0};
    std::vector<double> g{1.0, 1.0};
    std::vector<double> lr{0.0, 0.1};
    AdamState st;
    CHECK(adam_update(p, g, st, 0, lr, 1));
    CHECK(p[0] == 1.0);
    CHECK(p[1] == doctest::Approx(0.9).epsilon(1e-9));
}

namespace {

Model model_from_scene(const GradScene& s, ColorMode mode) {
    Model m;
    m.layout = s.gaussians.front().layout();
    m.gaussians = s.gaussians;
    m.weights = s.weights;
    m.color_mode = mode;
    if (mode == ColorMode::Mlp) {
        m.mlp = *s.mlp;
    } else {
        m.layout.feature_width = sh_coefficient_count(2);
        CounterRng rng(77);
        for (auto& g : m.gaussians) {
            g.appearance_feat = VecX(m.layout.feature_width);
            for (Eigen::Index k = 0; k < g.appearance_feat.size(); ++k) g.appearance_feat[k] = 0.15 * rng.normal();
        }
    }
    return m;
}

VecX model_parameters(const Model& m) {
    std::vector<double> flat;
    for (const auto& g : m.gaussians) {
        const VecX p = pack(g);
        flat.insert(flat.end(), p.data(), p.data() + p.size());
    }
    flat.insert(flat.end(), m.mlp.parameters().data(), m.mlp.parameters().data() + m.mlp.parameters().size());
    return Eigen::Map<VecX>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

void set_model_parameters(Model& m, const VecX& x) {
    Eigen::Index k = 0;
    for (auto& g : m.gaussians) {
        g.unpack(x.data() + k);
        k += g.layout().parameter_count();
    }
    m.mlp.parameters() = x.segment(k, m.mlp.parameters().size());
}

VecX model_gradient_flat(const ModelGrad& g) {
    std::vector<double> flat;
    for (const auto& s : g.gaussians) {
        const VecX p = pack(s);
        flat.insert(flat.end(), p.data(), p.data() + p.size());
    }
    flat.insert(flat.end(), g.mlp.data(), g.mlp.data() + g.mlp.size());
    return Eigen::Map<VecX>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

double fraction_close(const VecX& an, const VecX& fd) {
    int ok = 0;
    for (Eigen::Index i = 0; i < an.size(); ++i) ok += gradient_close(an[i], fd[i], 1e-3, 1e-6) ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(an.size());
}

}  // namespace

TEST_CASE("model render and backward agree with finite differences") {
    for (ColorMode mode : {ColorMode::Mlp, ColorMode::SphericalHarmonics}) {
        for (int trial = 0; trial < 2; ++trial) {
            CounterRng rng(100 + trial);
            const GradScene s = random_grad_scene(rng, 8, 16, true);
            Model m = model_from_scene(s, mode);
            auto loss = [&](const Model& mm) {
                const ModelRender r = render_model(mm, s.skel, s.pose, s.t, s.cam, s.background);
                double acc = 0.0;
                for (std::size_t i = 0; i < r.out.image.data.size(); ++i) acc += r.out.image.data[i] * s.upstream.data[i];
                return acc;
            };
            const ModelRender fwd = render_model(m, s.skel, s.pose, s.t, s.cam, s.background);
            ModelGrad g = zero_grad(m);
            backward_model(m, fwd, s.cam, s.background, s.upstream, g);
            const VecX an = model_gradient_flat(g);
            const VecX fd = central_difference(
                [&](const VecX& x) {
                    Model copy = m;
                    set_model_parameters(copy, x);
                    return loss(copy);
                },
                model_parameters(m), 1e-5);
            CAPTURE(static_cast<int>(mode));
            CHECK(fraction_close(an, fd) >= 0.99);
        }
    }
}

TEST_CASE("model keep and float rounding") {
    CounterRng rng(9);
    const GradScene s = random_grad_scene(rng, 5, 16, true);
    Model m = model_from_scene(s, ColorMode::Mlp);
    const std::vector<std::size_t> idx{1, 3};
    Model k = m;
    k.keep(idx);
    REQUIRE(k.size() == 2);
    CHECK(pack(k.gaussians[1]) == pack(m.gaussians[3]));
    CHECK(k.weights[0].weights == m.weights[1].weights);

    m.round_to_float();
    for (const auto& g : m.gaussians) {
        const VecX p = pack(g);
        for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(p[i] == static_cast<double>(static_cast<float>(p[i])));
    }
}
