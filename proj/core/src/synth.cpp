#include "stga/synth.hpp"

#include "stga/parallel.hpp"
#include "stga/rng.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace stga {

namespace {

constexpr double kShC0 = 0.28209479177387814;
constexpr double kPi = std::numbers::pi;

struct Limb {
    const char* name;
    int parent;
    Vec3 offset;  // head in the parent frame
    Vec3 tail;    // in the bone frame
    double radius;
    Vec3 color;
};

// Torso, then (upper, lower) for left arm, right arm, left leg, right leg.
const std::array<Limb, 9> kLimbs{{
    {"torso", -1, Vec3(0.0, -0.1, 0.0), Vec3(0.0, 0.8, 0.0), 0.2, Vec3(0.85, 0.35, 0.25)},
    {"l_upper_arm", 0, Vec3(0.3, 0.72, 0.0), Vec3(0.12, -0.38, 0.0), 0.085, Vec3(0.25, 0.55, 0.85)},
    {"l_forearm", 1, Vec3(0.12, -0.38, 0.0), Vec3(0.05, -0.36, 0.0), 0.075, Vec3(0.3, 0.8, 0.9)},
    {"r_upper_arm", 0, Vec3(-0.3, 0.72, 0.0), Vec3(-0.12, -0.38, 0.0), 0.085, Vec3(0.9, 0.8, 0.25)},
    {"r_forearm", 3, Vec3(-0.12, -0.38, 0.0), Vec3(-0.05, -0.36, 0.0), 0.075, Vec3(0.95, 0.55, 0.2)},
    {"l_thigh", 0, Vec3(0.11, 0.0, 0.0), Vec3(0.02, -0.45, 0.0), 0.1, Vec3(0.35, 0.8, 0.35)},
    {"l_shin", 5, Vec3(0.02, -0.45, 0.0), Vec3(0.0, -0.42, 0.0), 0.09, Vec3(0.2, 0.55, 0.3)},
    {"r_thigh", 0, Vec3(-0.11, 0.0, 0.0), Vec3(-0.02, -0.45, 0.0), 0.1, Vec3(0.7, 0.4, 0.85)},
    {"r_shin", 7, Vec3(-0.02, -0.45, 0.0), Vec3(0.0, -0.42, 0.0), 0.09, Vec3(0.5, 0.3, 0.7)},
}};

const Vec3 kTarget(0.0, -0.08, 0.0);

Skeleton figure_skeleton() {
    std::vector<Bone> bones;
    for (const Limb& l : kLimbs) {
        Bone b;
        b.name = l.name;
        b.parent = l.parent;
        b.rest = translation(l.offset);
        b.tail = l.tail;
        bones.push_back(std::move(b));
    }
    return Skeleton(std::move(bones));
}

struct SurfacePoint {
    Vec3 position;
    double axial;  // signed distance along the segment from its head
    double angle;  // around the axis, [0, 2 pi)
};

// Stratified, jittered samples on a capsule around segment [a, b].
std::vector<SurfacePoint> capsule_points(const Vec3& a, const Vec3& b, double r, double spacing,
                                         CounterRng& rng) {
    const Vec3 axis = b - a;
    const double len = axis.norm();
    const Vec3 d = axis / len;
    Vec3 e1 = d.cross(Vec3::UnitZ());
    if (e1.norm() < 1e-6) e1 = d.cross(Vec3::UnitX());
    e1.normalize();
    const Vec3 e2 = d.cross(e1);
    const double jitter = 0.25 * spacing;
    std::vector<SurfacePoint> pts;

    const int rings = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    const int around = std::max(6, static_cast<int>(std::ceil(2.0 * kPi * r / spacing)));
    for (int i = 0; i < rings; ++i) {
        for (int j = 0; j < around; ++j) {
            const double u = std::clamp((i + 0.5) * len / rings + rng.uniform(-jitter, jitter), 0.0, len);
            double phi = (j + 0.5) * 2.0 * kPi / around + rng.uniform(-jitter, jitter) / r;
            phi = std::fmod(phi + 2.0 * kPi, 2.0 * kPi);
            pts.push_back({a + d * u + r * (std::cos(phi) * e1 + std::sin(phi) * e2), u, phi});
        }
    }
    // Hemispherical caps on a Fibonacci lattice.
    const int cap = std::max(8, static_cast<int>(std::ceil(2.0 * kPi * r * r / (spacing * spacing))));
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int side = 0; side < 2; ++side) {
        const Vec3 c = side == 0 ? a : b;
        const Vec3 outward = side == 0 ? Vec3(-d) : d;
        for (int i = 0; i < cap; ++i) {
            const double h = (i + 0.5) / cap;  // height along outward, (0, 1)
            const double rho = std::sqrt(1.0 - h * h);
            const double phi = std::fmod(golden * i + rng.uniform(-0.05, 0.05) + 2.0 * kPi, 2.0 * kPi);
            const Vec3 p = c + r * (h * outward + rho * (std::cos(phi) * e1 + std::sin(phi) * e2));
            pts.push_back({p, (p - a).dot(d), phi});
        }
    }
    return pts;
}

Pose script_pose(const SynthOptions& o, double t, double phase) {
    Pose pose = Pose::rest(kLimbs.size());
    if (o.motion == SynthMotion::Static) return pose;
    if (o.motion == SynthMotion::Translate) {
        pose.root_translation = Vec3(o.translate_step * t * (o.frames - 1), 0.0, 0.0);
        return pose;
    }
    const double w = 2.0 * kPi * (t + phase);
    const Vec3 z = Vec3::UnitZ();
    pose.rotations[1] = axis_angle_quat(z, 0.5 + 0.7 * std::sin(w));
    pose.rotations[2] = axis_angle_quat(z, 0.3 * (1.0 - std::cos(w)));
    pose.rotations[3] = axis_angle_quat(z, -(0.5 + 0.7 * std::sin(w + 0.5 * kPi)));
    pose.rotations[4] = axis_angle_quat(z, -0.3 * (1.0 - std::cos(w + 0.5 * kPi)));
    pose.rotations[5] = axis_angle_quat(z, 0.3 * std::sin(w));
    pose.rotations[6] = axis_angle_quat(z, -0.2 * (1.0 - std::cos(w)));
    pose.rotations[7] = axis_angle_quat(z, -0.3 * std::sin(w));
    pose.rotations[8] = axis_angle_quat(z, 0.2 * (1.0 - std::cos(w)));
    pose.root_translation = Vec3(0.05 * std::sin(w), 0.0, 0.0);
    return pose;
}

Camera script_camera(const SynthOptions& o, double t) {
    const double az = o.motion == SynthMotion::Default ? o.orbit_degrees * kPi / 180.0 * (2.0 * t - 1.0) : 0.0;
    const Vec3 eye = kTarget + o.distance * Vec3(std::sin(az), 0.0, std::cos(az));
    const double f = o.focal * o.size / 64.0;
    return Camera::look_at(eye, kTarget, Vec3::UnitY(), f, f, o.size, o.size);
}

std::vector<Vec3> point_colors(const Model& m) {
    std::vector<Vec3> colors(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const VecX& f = m.gaussians[i].appearance_feat;
        colors[i] = sh_color(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), Vec3::UnitZ(), 0);
    }
    return colors;
}

}  // namespace

SynthScene make_scene(const SynthOptions& options) {
    if (options.frames < 2) throw ArgumentError("synth: need at least 2 frames");
    if (options.size <= 0) throw ArgumentError("synth: image size must be positive");
    if (!(options.point_spacing > 0.0)) throw ArgumentError("synth: point spacing must be positive");
    SynthScene s;
    s.options = options;
    s.skeleton = figure_skeleton();
    CounterRng rng(options.seed, 0x5EED);
    const double phase = rng.uniform(0.0, 0.25);
    const double checker_shift = rng.uniform(0.0, 0.12);

    Model& m = s.points;
    m.layout = GaussianLayout{2, 0, 3};
    m.color_mode = ColorMode::SphericalHarmonics;
    m.sh_degree = 0;
    const double sway = options.motion == SynthMotion::Default ? options.sway : 0.0;
    const auto segments = s.skeleton.segments();
    const double torso_base = segments[0].first.y();
    const double torso_len = (segments[0].second - segments[0].first).norm();
    const double scale = std::log(0.6 * options.point_spacing);
    for (std::size_t b = 0; b < kLimbs.size(); ++b) {
        const auto pts = capsule_points(segments[b].first, segments[b].second, kLimbs[b].radius,
                                        options.point_spacing, rng);
        for (const SurfacePoint& p : pts) {
            SpacetimeGaussian g = SpacetimeGaussian::make(m.layout);
            g.canonical_pos = p.position;
            g.temporal_center_pos = 0.5;
            g.temporal_center_rot = 0.5;
            g.log_scales = Vec3::Constant(scale);
            g.base_opacity = logit(0.9);
            // Quadratic sway of the torso (growing with height) and both arms.
            double h = 0.0;
            if (b == 0) h = std::clamp((p.position.y() - torso_base) / torso_len, 0.0, 1.0);
            if (b >= 1 && b <= 4) h = 1.0;
            g.motion_coeffs[1] = Vec3(4.0 * sway * h * h, 0.0, 0.0);
            const int cu = static_cast<int>(std::floor((p.axial + checker_shift) / 0.12));
            const int cv = static_cast<int>(std::floor(p.angle / (kPi / 3.0)));
            const double shade = ((cu + cv) & 1) ? 1.0 : 0.55;
            const Vec3 color = kLimbs[b].color * shade;
            for (int c = 0; c < 3; ++c) g.appearance_feat[c] = (color[c] - 0.5) / kShC0;
            m.gaussians.push_back(std::move(g));
            m.weights.push_back(BoneWeights::single(static_cast<int>(b)));
        }
    }
    for (int k = 0; k < options.frames; ++k) {
        const double t = s.time(k);
        s.poses.push_back(script_pose(options, t, phase));
        s.cameras.push_back(script_camera(options, t));
    }
    return s;
}

Image render_scene_frame(const SynthScene& scene, int k) {
    const DeformContext ctx = DeformContext::make(scene.skeleton, scene.poses[k], scene.time(k));
    const auto posed = deform_batch(scene.points.gaussians, scene.points.weights, ctx);
    const auto colors = point_colors(scene.points);
    return render_oracle(posed, colors, scene.cameras[k], Vec3::Zero()).image;
}

FlowRaster rasterize_flow(const SynthScene& scene, int k) {
    if (k < 0 || k + 1 >= scene.options.frames) throw ArgumentError("rasterize_flow: frame has no successor");
    const Camera& cam = scene.cameras[k];
    const Camera& next = scene.cameras[k + 1];
    const DeformContext ctx = DeformContext::make(scene.skeleton, scene.poses[k], scene.time(k));
    const DeformContext ctx_next = DeformContext::make(scene.skeleton, scene.poses[k + 1], scene.time(k + 1));
    FlowRaster r;
    r.flow = FlowField(cam.height, cam.width);
    const std::size_t pixels = static_cast<std::size_t>(cam.height) * cam.width;
    r.depth.assign(pixels, std::numeric_limits<double>::infinity());
    r.depth_next.assign(pixels, std::numeric_limits<double>::infinity());
    constexpr double kRadius = 1.0;
    const Model& m = scene.points;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const Vec3 pc = cam.to_camera(deform_position(m.gaussians[i], m.weights[i], ctx));
        const Vec3 pn = next.to_camera(deform_position(m.gaussians[i], m.weights[i], ctx_next));
        if (pc.z() <= Camera::kNear || pn.z() <= Camera::kNear) continue;
        const Vec2 u = cam.project_camera(pc);
        const Vec2 v = next.project_camera(pn) - u;
        const int x0 = static_cast<int>(std::ceil(u.x() - kRadius)), x1 = static_cast<int>(std::floor(u.x() + kRadius));
        const int y0 = static_cast<int>(std::ceil(u.y() - kRadius)), y1 = static_cast<int>(std::floor(u.y() + kRadius));
        for (int y = std::max(0, y0); y <= std::min(cam.height - 1, y1); ++y) {
            for (int x = std::max(0, x0); x <= std::min(cam.width - 1, x1); ++x) {
                if ((Vec2(x, y) - u).squaredNorm() > kRadius * kRadius) continue;
                const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
                if (pc.z() < r.depth[p]) {
                    r.depth[p] = pc.z();
                    r.depth_next[p] = pn.z();
                    r.flow.set(y, x, v);
                }
            }
        }
    }
    return r;
}

FrameDataset generate(const SynthOptions& options) {
    const SynthScene scene = make_scene(options);
    FrameDataset d;
    d.skeleton = scene.skeleton;
    d.cameras = scene.cameras;
    d.poses = scene.poses;
    d.seed = options.seed;
    d.frames.resize(options.frames);
    parallel_for(static_cast<std::size_t>(options.frames),
                 [&](std::size_t k) {
                     // Stored as float32 on disk; keep the in-memory copy identical.
                     d.frames[k] = render_scene_frame(scene, static_cast<int>(k));
                     for (double& v : d.frames[k].data) v = static_cast<float>(v);
                 });
    d.flows.resize(options.frames - 1);
    parallel_for(static_cast<std::size_t>(options.frames - 1),
                 [&](std::size_t k) { d.flows[k] = rasterize_flow(scene, static_cast<int>(k)).flow; });
    if (options.holdout_every > 0) {
        for (int k = 0; k < options.frames; ++k) {
            if (k % options.holdout_every == options.holdout_offset) d.holdout.push_back(k);
        }
    }
    d.validate();
    return d;
}

Metrics eval_holdout(const Model& model, const FrameDataset& data, std::span<const int> frames,
                     const Vec3& background) {
    if (frames.empty()) throw ArgumentError("eval_holdout: no frames to evaluate");
    Metrics sum;
    for (int k : frames) {
        if (k < 0 || k >= data.frame_count()) throw DataError("eval_holdout: frame " + std::to_string(k) + " is missing");
        const ModelRender r = render_model(model, data.skeleton, data.poses[k], data.time(k), data.cameras[k], background);
        const Metrics m = evaluate(r.out.image, data.frames[k]);
        sum.psnr += m.psnr;
        sum.ssim += m.ssim;
    }
    const double n = static_cast<double>(frames.size());
    return Metrics{sum.psnr / n, sum.ssim / n};
}

}  // namespace stga
