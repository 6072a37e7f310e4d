#include "stga/deform.hpp"
#include "stga/model.hpp"
#include "stga/renderer.hpp"
#include "stga/rng.hpp"
#include "stga/synth.hpp"

#include <benchmark/benchmark.h>

using namespace stga;

namespace {

Skeleton chain() {
    std::vector<Bone> bones(2);
    bones[0].name = "root";
    bones[0].tail = Vec3(0.5, 0.0, 0.0);
    bones[1].name = "child";
    bones[1].parent = 0;
    bones[1].rest = translation(Vec3(0.5, 0.0, 0.0));
    bones[1].tail = Vec3(0.5, 0.0, 0.0);
    return Skeleton(std::move(bones));
}

struct Cloud {
    Skeleton skel = chain();
    std::vector<SpacetimeGaussian> gaussians;
    SkinningWeights weights;
    Camera cam;
};

Cloud make_cloud(std::size_t n, int size) {
    Cloud c;
    CounterRng rng(7);
    std::vector<Vec3> pos;
    for (std::size_t i = 0; i < n; ++i) {
        SpacetimeGaussian g = SpacetimeGaussian::make({2, 1, 3});
        g.canonical_pos = Vec3(rng.uniform(-0.6, 1.2), rng.uniform(-0.6, 0.6), rng.uniform(-0.3, 0.3));
        g.motion_coeffs[0] = Vec3(rng.uniform(-0.1, 0.1), 0.0, 0.0);
        g.temporal_center_pos = g.temporal_center_rot = 0.5;
        g.log_scales = Vec3::Constant(std::log(0.01));
        g.base_opacity = 1.0;
        pos.push_back(g.canonical_pos);
        c.gaussians.push_back(std::move(g));
    }
    c.weights = assign_skinning_weights(pos, c.skel);
    c.cam = Camera::look_at(Vec3(0.3, 0.0, 3.0), Vec3(0.3, 0.0, 0.0), Vec3::UnitY(), size * 1.2, size * 1.2, size, size);
    return c;
}

std::vector<Splat2D> splats_of(const Cloud& c) {
    const DeformContext ctx = DeformContext::make(c.skel, Pose::rest(c.skel.size()), 0.3);
    const auto posed = deform_batch(c.gaussians, c.weights, ctx);
    std::vector<Splat2D> out;
    CounterRng rng(9);
    for (std::size_t i = 0; i < posed.size(); ++i) {
        if (auto s = project(posed[i], c.cam, static_cast<int>(i))) {
            s->color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
            out.push_back(*s);
        }
    }
    return out;
}

void BM_deform_batch(benchmark::State& state) {
    const Cloud c = make_cloud(static_cast<std::size_t>(state.range(0)), 64);
    const DeformContext ctx = DeformContext::make(c.skel, Pose::rest(c.skel.size()), 0.3);
    for (auto _ : state) benchmark::DoNotOptimize(deform_batch(c.gaussians, c.weights, ctx));
}
BENCHMARK(BM_deform_batch)->Arg(50000)->Unit(benchmark::kMillisecond);

void BM_render_tiled(benchmark::State& state) {
    const Cloud c = make_cloud(static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(1)));
    const auto splats = splats_of(c);
    for (auto _ : state) benchmark::DoNotOptimize(render(splats, c.cam, Vec3::Zero()));
}
BENCHMARK(BM_render_tiled)->Args({50000, 256})->Args({5000, 64})->Unit(benchmark::kMillisecond);

void BM_render_oracle(benchmark::State& state) {
    const Cloud c = make_cloud(static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(1)));
    const auto splats = splats_of(c);
    for (auto _ : state) benchmark::DoNotOptimize(render_oracle(splats, c.cam, Vec3::Zero()));
}
BENCHMARK(BM_render_oracle)->Args({50000, 256})->Unit(benchmark::kMillisecond)->Iterations(1);

void BM_render_backward(benchmark::State& state) {
    const Cloud c = make_cloud(static_cast<std::size_t>(state.range(0)), static_cast<int>(state.range(1)));
    const auto splats = splats_of(c);
    const RenderOutput out = render(splats, c.cam, Vec3::Zero());
    const Image up(c.cam.height, c.cam.width, 3, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(render_backward(splats, c.cam, Vec3::Zero(), out, up));
}
BENCHMARK(BM_render_backward)->Args({5000, 64})->Unit(benchmark::kMillisecond);

void BM_color_mlp(benchmark::State& state) {
    const Cloud c = make_cloud(static_cast<std::size_t>(state.range(0)), 64);
    const ColorMLP mlp(EncodingConfig{}, GaussianLayout{2, 1, 3}, c.skel.size(), {64, 64}, 1);
    std::vector<Vec3> pos;
    for (const auto& g : c.gaussians) pos.push_back(g.canonical_pos);
    const Pose pose = Pose::rest(c.skel.size());
    for (auto _ : state) benchmark::DoNotOptimize(mlp.forward_batch(c.gaussians, pos, pose, c.cam.center()));
}
BENCHMARK(BM_color_mlp)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_synth_frame(benchmark::State& state) {
    SynthOptions o;
    const SynthScene scene = make_scene(o);
    for (auto _ : state) benchmark::DoNotOptimize(render_scene_frame(scene, 3));
}
BENCHMARK(BM_synth_frame)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
