#include "stga/flowdens.hpp"

#include "stga/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace stga {

std::optional<Vec2> FlowField::sample(const Vec2& p) const {
    if (width == 0 || height == 0) return std::nullopt;
    if (!(p.x() >= -0.5 && p.x() <= width - 0.5 && p.y() >= -0.5 && p.y() <= height - 0.5)) {
        return std::nullopt;
    }
    const double x = std::clamp(p.x(), 0.0, width - 1.0);
    const double y = std::clamp(p.y(), 0.0, height - 1.0);
    const int x0 = std::min(static_cast<int>(x), width - 1);
    const int y0 = std::min(static_cast<int>(y), height - 1);
    const int x1 = std::min(x0 + 1, width - 1);
    const int y1 = std::min(y0 + 1, height - 1);
    const double fx = x - x0, fy = y - y0;
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
           fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    binio::write(os, kFloMagic);
    binio::write(os, static_cast<std::int32_t>(flow.width));
    binio::write(os, static_cast<std::int32_t>(flow.height));
    os.write(reinterpret_cast<const char*>(flow.data.data()),
             static_cast<std::streamsize>(flow.data.size() * sizeof(float)));
    if (!os) throw DataError("write failed for " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    float magic = 0.0f;
    std::int32_t w = 0, h = 0;
    if (!binio::read(is, magic) || magic != kFloMagic) throw DataError(path.string() + ": bad .flo magic");
    if (!binio::read(is, w) || !binio::read(is, h) || w <= 0 || h <= 0 || w > 65536 || h > 65536) {
        throw DataError(path.string() + ": bad .flo dimensions");
    }
    FlowField flow(h, w);
    if (!is.read(reinterpret_cast<char*>(flow.data.data()),
                 static_cast<std::streamsize>(flow.data.size() * sizeof(float)))) {
        throw DataError(path.string() + ": truncated .flo payload");
    }
    for (float v : flow.data) {
        if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite flow value");
    }
    return flow;
}

void DensifyConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw ArgumentError(std::string("densify config: ") + name + " must be positive");
    };
    positive(error_threshold, "error_threshold");
    positive(step, "step");
    positive(spread, "spread");
    positive(flow_protection, "flow_protection");
    positive(window, "window");
    positive(motion_threshold, "motion_threshold");
    positive(consistency_tolerance, "consistency_tolerance");
    positive(density_scale, "density_scale");
    positive(cell_size, "cell_size");
    positive(opacity_floor, "opacity_floor");
    if (spread > step) throw ArgumentError("densify config: spread must not exceed step");
    if (refine_blend < 0.0 || refine_blend > 1.0) throw ArgumentError("densify config: refine_blend must be in [0, 1]");
    if (max_new_per_round < 0) throw ArgumentError("densify config: max_new_per_round must be >= 0");
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

bool Mask::contains(const Vec2& p) const {
    const long x = std::lround(p.x());
    const long y = std::lround(p.y());
    if (x < 0 || y < 0 || x >= width || y >= height) return false;
    return at(static_cast<int>(y), static_cast<int>(x));
}

Mask detect_dynamic(const Image& rendered, const Image& ground_truth, double tau) {
    if (!rendered.same_shape(ground_truth)) throw ArgumentError("detect_dynamic: image shapes differ");
    Mask mask(rendered.height, rendered.width);
    const int c = rendered.channels;
    for (int y = 0; y < rendered.height; ++y) {
        for (int x = 0; x < rendered.width; ++x) {
            double err = 0.0;
            for (int ch = 0; ch < c; ++ch) err += std::abs(rendered.at(y, x, ch) - ground_truth.at(y, x, ch));
            mask.set(y, x, err / c > tau);
        }
    }
    return mask;
}

std::vector<double> accumulate_motion(std::span<const FlowField> history, int window) {
    if (history.empty()) throw ArgumentError("accumulate_motion: empty flow history");
    const FlowField& last = history.back();
    std::vector<double> acc(static_cast<std::size_t>(last.height) * last.width, 0.0);
    const std::size_t samples = std::min<std::size_t>(static_cast<std::size_t>(std::max(window, 0)) + 1, history.size());
    for (std::size_t k = history.size() - samples; k < history.size(); ++k) {
        const FlowField& f = history[k];
        if (f.height != last.height || f.width != last.width) {
            throw ArgumentError("accumulate_motion: flow fields differ in size");
        }
        for (std::size_t i = 0; i < acc.size(); ++i) {
            acc[i] += std::hypot(static_cast<double>(f.data[2 * i]), static_cast<double>(f.data[2 * i + 1]));
        }
    }
    return acc;
}

Mask valid_region(std::span<const FlowField> history, int window, double delta) {
    const std::vector<double> acc = accumulate_motion(history, window);
    Mask mask(history.back().height, history.back().width);
    for (std::size_t i = 0; i < acc.size(); ++i) mask.data[i] = acc[i] > delta ? 1 : 0;
    return mask;
}

std::vector<double> motion_strength(std::span<const double> accumulated, double delta) {
    std::vector<double> w(accumulated.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::clamp(accumulated[i] / (2.0 * delta), 0.0, 1.0);
    return w;
}

Vec3 flow_offset(const Vec3& world_dir, double step, double spread, CounterRng& rng) {
    Vec3 offset = step * world_dir;
    if (spread > 0.0) {
        for (int k = 0; k < 3; ++k) offset[k] += rng.normal(0.0, spread);
    }
    return offset;
}

std::optional<Vec3> lift_flow_direction(const Camera& cam, const Vec2& flow, double depth) {
    const double n = flow.norm();
    if (!(n > 1e-6)) return std::nullopt;
    const Vec3 dir = cam.unproject_direction(flow / n, depth);
    const double dn = dir.norm();
    if (!(dn > 0.0)) return std::nullopt;
    return Vec3(dir / dn);
}

std::optional<SpacetimeGaussian> sample_along_flow(const SpacetimeGaussian& seed,
                                                   const BoneWeights& weights,
                                                   const DeformContext& ctx, const Vec2& flow,
                                                   const Camera& cam, double step, double spread,
                                                   CounterRng& rng) {
    const Vec3 mu = deform_position(seed, weights, ctx);
    const double depth = cam.to_camera(mu).z();
    if (depth <= Camera::kNear) return std::nullopt;
    const auto dir = lift_flow_direction(cam, flow, depth);
    if (!dir) return std::nullopt;
    const Vec3 offset = flow_offset(*dir, step, spread, rng);

    const Mat3 jac = lbs_jacobian(weights, ctx.transforms);
    if (!(std::abs(jac.determinant()) > 1e-8)) return std::nullopt;

    SpacetimeGaussian g = seed;
    // Position polynomial with its (zero) constant term, re-centered at t.
    std::vector<Vec3> poly{Vec3::Zero()};
    poly.insert(poly.end(), seed.motion_coeffs.begin(), seed.motion_coeffs.end());
    const std::vector<Vec3> shifted = recenter_polynomial(poly, seed.temporal_center_pos, ctx.t);
    for (std::size_t k = 0; k < g.motion_coeffs.size(); ++k) g.motion_coeffs[k] = shifted[k + 1];
    g.temporal_center_pos = ctx.t;
    g.canonical_pos = seed.canonical_pos + jac.lu().solve(Vec3(shifted[0] + offset));

    g.rot_coeffs = recenter_polynomial(seed.rot_coeffs, seed.temporal_center_rot, ctx.t);
    g.temporal_center_rot = ctx.t;
    return g;
}

Consistency check_consistency(const Vec3& prev_world, const Vec3& cur_world,
                              const FlowField& flow_prev, const Camera& cam_prev,
                              const Camera& cam_cur, double tolerance) {
    const auto p0 = cam_prev.project(prev_world);
    const auto p1 = cam_cur.project(cur_world);
    if (!p0 || !p1) return Consistency::Flag;
    const auto v = flow_prev.sample(*p0);
    if (!v) return Consistency::Flag;
    const Vec2 predicted = *p0 + *v;
    return (*p1 - predicted).norm() <= tolerance ? Consistency::Accept : Consistency::Flag;
}

std::vector<std::size_t> prune(std::span<const PruneCandidate> candidates, double opacity_floor,
                               double gamma, std::size_t budget) {
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].max_opacity >= opacity_floor) alive.push_back(i);
    }
    if (alive.size() <= budget) return alive;

    std::vector<std::size_t> removable;
    for (std::size_t i : alive) {
        const PruneCandidate& c = candidates[i];
        if (!(c.consistent && c.motion_strength > 0.8)) removable.push_back(i);
    }
    std::stable_sort(removable.begin(), removable.end(), [&](std::size_t a, std::size_t b) {
        const PruneCandidate& ca = candidates[a];
        const PruneCandidate& cb = candidates[b];
        return flow_weighted_contribution(ca.contribution, ca.motion_strength, gamma) <
               flow_weighted_contribution(cb.contribution, cb.motion_strength, gamma);
    });
    const std::size_t excess = std::min(alive.size() - budget, removable.size());
    std::vector<std::uint8_t> drop(candidates.size(), 0);
    for (std::size_t k = 0; k < excess; ++k) drop[removable[k]] = 1;
    std::vector<std::size_t> kept;
    for (std::size_t i : alive) {
        if (!drop[i]) kept.push_back(i);
    }
    return kept;
}

DensityReport density_report(std::span<const Vec2> splat_pixels, const Mask& dynamic,
                             const Mask& valid, std::span<const double> strength,
                             const DensifyConfig& config) {
    if (dynamic.height != valid.height || dynamic.width != valid.width ||
        strength.size() != valid.data.size()) {
        throw ArgumentError("density_report: mask sizes differ");
    }
    DensityReport r;
    r.cell_size = config.cell_size;
    r.cells_x = (valid.width + config.cell_size - 1) / config.cell_size;
    r.cells_y = (valid.height + config.cell_size - 1) / config.cell_size;
    const std::size_t cells = static_cast<std::size_t>(r.cells_x) * r.cells_y;
    r.current.assign(cells, 0.0);
    r.target.assign(cells, 0.0);
    r.strength.assign(cells, 0.0);
    r.moving.assign(cells, 0);
    r.dynamic = dynamic;
    r.valid = valid;

    for (const Vec2& p : splat_pixels) {
        const long x = std::lround(p.x());
        const long y = std::lround(p.y());
        if (x < 0 || y < 0 || x >= valid.width || y >= valid.height) continue;
        r.current[(y / config.cell_size) * r.cells_x + x / config.cell_size] += 1.0;
    }
    std::vector<int> valid_pixels(cells, 0);
    for (int y = 0; y < valid.height; ++y) {
        for (int x = 0; x < valid.width; ++x) {
            if (!valid.at(y, x)) continue;
            const std::size_t c = static_cast<std::size_t>(y / config.cell_size) * r.cells_x + x / config.cell_size;
            r.moving[c] = 1;
            r.strength[c] += strength[static_cast<std::size_t>(y) * valid.width + x];
            ++valid_pixels[c];
        }
    }
    std::vector<double> nonempty;
    for (std::size_t c = 0; c < cells; ++c) {
        if (valid_pixels[c] > 0) r.strength[c] /= valid_pixels[c];
        if (r.current[c] > 0.0) nonempty.push_back(r.current[c]);
    }
    if (!nonempty.empty()) {
        std::sort(nonempty.begin(), nonempty.end());
        const std::size_t m = nonempty.size();
        r.base_density = m % 2 ? nonempty[m / 2] : 0.5 * (nonempty[m / 2 - 1] + nonempty[m / 2]);
    }
    for (std::size_t c = 0; c < cells; ++c) {
        r.target[c] = r.base_density * (1.0 + config.density_scale * r.strength[c]);
    }
    return r;
}

std::vector<int> density_trigger(const DensityReport& report) {
    std::vector<int> cells;
    for (std::size_t c = 0; c < report.current.size(); ++c) {
        if (report.moving[c] && report.current[c] < report.target[c]) cells.push_back(static_cast<int>(c));
    }
    return cells;
}

double density_ratio(const DensityReport& report) {
    double moving = 0.0, still = 0.0;
    int n_moving = 0, n_still = 0;
    for (std::size_t c = 0; c < report.current.size(); ++c) {
        if (report.current[c] <= 0.0) continue;
        if (report.moving[c]) {
            moving += report.current[c];
            ++n_moving;
        } else {
            still += report.current[c];
            ++n_still;
        }
    }
    if (n_moving == 0 || n_still == 0) return 0.0;
    return (moving / n_moving) / (still / n_still);
}

double coverage_density_ratio(std::span<const Vec2> splat_pixels, const Mask& valid, const Mask& covered) {
    if (valid.height != covered.height || valid.width != covered.width) {
        throw ArgumentError("coverage_density_ratio: mask sizes differ");
    }
    double moving_splats = 0.0, still_splats = 0.0;
    for (const Vec2& p : splat_pixels) {
        const long x = std::lround(p.x());
        const long y = std::lround(p.y());
        if (x < 0 || y < 0 || x >= valid.width || y >= valid.height) continue;
        (valid.at(static_cast<int>(y), static_cast<int>(x)) ? moving_splats : still_splats) += 1.0;
    }
    double moving_px = 0.0, still_px = 0.0;
    for (std::size_t i = 0; i < valid.data.size(); ++i) {
        if (!covered.data[i]) continue;
        (valid.data[i] ? moving_px : still_px) += 1.0;
    }
    if (moving_px == 0.0 || still_px == 0.0 || moving_splats == 0.0 || still_splats == 0.0) return 0.0;
    return (moving_splats / moving_px) / (still_splats / still_px);
}

std::vector<Vec2> refine_flow(std::span<const Vec2> estimated, std::span<const Vec2> trajectory,
                              double beta) {
    if (estimated.size() != trajectory.size()) throw ArgumentError("refine_flow: size mismatch");
    if (beta < 0.0 || beta > 1.0) throw ArgumentError("refine_flow: beta must be in [0, 1]");
    std::vector<Vec2> out(estimated.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - beta) * estimated[i] + beta * trajectory[i];
    return out;
}

double flow_residual(std::span<const Vec2> refined, std::span<const Vec2> trajectory) {
    double r = 0.0;
    for (std::size_t i = 0; i < refined.size(); ++i) r += (refined[i] - trajectory[i]).squaredNorm();
    return r;
}

}  // namespace stga
