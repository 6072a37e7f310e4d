#include "stga/renderer.hpp"

#include "stga/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stga {

namespace {

// Splat data in depth order, laid out for the per-pixel loop.
struct Prepared {
    double mx, my;
    double ca, cb, cc;  // conic (inverse 2D covariance)
    double opacity;
    double r, g, b;
    double power_floor;  // below this exponent alpha is surely under kMinAlpha
};

Mat2 symmetric_inverse(const Mat2& m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Mat2 inv;
    inv(0, 0) = m(1, 1) / det;
    inv(1, 1) = m(0, 0) / det;
    inv(0, 1) = -m(0, 1) / det;
    inv(1, 0) = inv(0, 1);
    return inv;
}

std::vector<int> depth_order(std::span<const Splat2D> splats) {
    std::vector<int> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const Splat2D& sa = splats[a];
        const Splat2D& sb = splats[b];
        if (sa.depth != sb.depth) return sa.depth < sb.depth;
        if (sa.source != sb.source) return sa.source < sb.source;
        return a < b;
    });
    return order;
}

std::vector<Prepared> prepare(std::span<const Splat2D> splats, const std::vector<int>& order) {
    std::vector<Prepared> prep(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        const Splat2D& s = splats[order[i]];
        const Mat2 conic = symmetric_inverse(s.cov2d);
        prep[i] = Prepared{s.mean.x(), s.mean.y(), conic(0, 0), conic(0, 1), conic(1, 1),
                           s.opacity,  s.color[0], s.color[1],  s.color[2],
                           std::log(RenderSettings::kMinAlpha / s.opacity) - 1e-6};
    }
    return prep;
}

// Alpha of a prepared splat at pixel (px, py); 0 when below the visibility
// threshold. `unclamped` reports sigma * G for the backward pass.
inline double splat_alpha(const Prepared& p, double px, double py, double& gauss) {
    const double dx = px - p.mx;
    const double dy = py - p.my;
    const double power = -0.5 * (p.ca * dx * dx + p.cc * dy * dy) - p.cb * dx * dy;
    if (power < p.power_floor) {
        gauss = 0.0;
        return 0.0;
    }
    gauss = std::exp(power);
    const double alpha = std::min(RenderSettings::kMaxAlpha, p.opacity * gauss);
    return alpha < RenderSettings::kMinAlpha ? 0.0 : alpha;
}

struct PixelResult {
    double r = 0.0, g = 0.0, b = 0.0;
    double transmittance = 1.0;
    int contributors = 0;
    int end = 0;  // entries consumed
};

// Shared compositing loop. `entry(i)` maps the i-th list entry to a position in
// the prepared array and `weight(i, w)` receives each contributing alpha * T.
template <typename EntryFn, typename WeightFn>
inline PixelResult composite_pixel(const std::vector<Prepared>& prep, int count, EntryFn entry,
                                   double px, double py, bool early_out, WeightFn weight) {
    PixelResult res;
    double t = 1.0;
    int i = 0;
    for (; i < count; ++i) {
        const Prepared& p = prep[entry(i)];
        double gauss;
        const double alpha = splat_alpha(p, px, py, gauss);
        if (alpha == 0.0) continue;
        const double w = alpha * t;
        res.r += w * p.r;
        res.g += w * p.g;
        res.b += w * p.b;
        weight(i, w);
        t *= 1.0 - alpha;
        ++res.contributors;
        if (early_out && t < RenderSettings::kTransmittanceFloor) {
            ++i;
            break;
        }
    }
    res.transmittance = t;
    res.end = i;
    return res;
}

void finish_pixel(RenderOutput& out, int y, int x, const PixelResult& res, const Vec3& bg) {
    out.image.at(y, x, 0) = res.r + res.transmittance * bg[0];
    out.image.at(y, x, 1) = res.g + res.transmittance * bg[1];
    out.image.at(y, x, 2) = res.b + res.transmittance * bg[2];
    const std::size_t pix = static_cast<std::size_t>(y) * out.image.width + x;
    out.alpha[pix] = 1.0 - res.transmittance;
    out.contributors[pix] = res.contributors;
    out.state.final_transmittance[pix] = res.transmittance;
    out.state.last_entry[pix] = res.end;
}

RenderOutput make_output(const Camera& cam, std::size_t splat_count) {
    RenderOutput out;
    out.image = Image(cam.height, cam.width, 3);
    const std::size_t pixels = out.image.pixel_count();
    out.alpha.assign(pixels, 0.0);
    out.contributors.assign(pixels, 0);
    out.splat_weight.assign(splat_count, 0.0);
    out.state.last_entry.assign(pixels, 0);
    out.state.final_transmittance.assign(pixels, 1.0);
    return out;
}

struct PixelRange {
    int x0, x1, y0, y1;  // inclusive; empty when x0 > x1 or y0 > y1
};

std::optional<PixelRange> pixel_range(const Splat2D& s, int width, int height) {
    const auto ext = splat_extent(s);
    if (!ext) return std::nullopt;
    PixelRange r{static_cast<int>(std::max(0.0, std::ceil(s.mean.x() - ext->x()))),
                 static_cast<int>(std::min(width - 1.0, std::floor(s.mean.x() + ext->x()))),
                 static_cast<int>(std::max(0.0, std::ceil(s.mean.y() - ext->y()))),
                 static_cast<int>(std::min(height - 1.0, std::floor(s.mean.y() + ext->y())))};
    if (!(s.mean.x() - ext->x() <= width - 1.0) || !(s.mean.x() + ext->x() >= 0.0) ||
        !(s.mean.y() - ext->y() <= height - 1.0) || !(s.mean.y() + ext->y() >= 0.0) ||
        r.x0 > r.x1 || r.y0 > r.y1) {
        return std::nullopt;
    }
    return r;
}

}  // namespace

std::optional<Vec2> splat_extent(const Splat2D& s) {
    if (!(s.opacity >= RenderSettings::kMinAlpha)) return std::nullopt;
    // alpha >= 1/255  <=>  d^T cov^-1 d <= 2 ln(255 sigma).
    const double level = 2.0 * std::log(s.opacity / RenderSettings::kMinAlpha);
    const double margin = 1e-6;
    return Vec2(std::sqrt(level * s.cov2d(0, 0)) * (1.0 + 1e-9) + margin,
                std::sqrt(level * s.cov2d(1, 1)) * (1.0 + 1e-9) + margin);
}

std::optional<Splat2D> project(const PosedGaussian& posed, const Camera& cam, int source,
                               bool cull_offscreen) {
    const Vec3 pc = cam.to_camera(posed.position);
    if (pc.z() <= Camera::kNear) return std::nullopt;
    if (!(posed.opacity >= RenderSettings::kMinAlpha)) return std::nullopt;

    Splat2D s;
    s.mean = cam.project_camera(pc);
    s.depth = pc.z();
    s.opacity = posed.opacity;
    s.source = source;

    const Eigen::Matrix<double, 2, 3> t = cam.projection_jacobian(pc) * cam.rotation();
    const Eigen::Matrix<double, 2, 3> m = t * posed.covariance;
    const double c00 = m.row(0).dot(t.row(0));
    const double c01 = m.row(0).dot(t.row(1));
    const double c11 = m.row(1).dot(t.row(1));
    s.cov2d << c00 + RenderSettings::kCovarianceBlur, c01, c01, c11 + RenderSettings::kCovarianceBlur;

    if (cull_offscreen && !pixel_range(s, cam.width, cam.height)) return std::nullopt;
    return s;
}

PosedGradient project_backward(const PosedGaussian& posed, const Camera& cam,
                               const Splat2DGrad& grad) {
    const Vec3 pc = cam.to_camera(posed.position);
    const Mat3 w = cam.rotation();
    const Mat23 j = cam.projection_jacobian(pc);
    const Mat23 t = j * w;
    const Mat2& g = grad.cov2d;

    PosedGradient out;
    out.covariance = t.transpose() * g * t;
    const Mat23 dt = (g + g.transpose()) * t * posed.covariance;
    const Mat23 dj = dt * w.transpose();

    const double x = pc.x(), y = pc.y(), z = pc.z();
    const double iz2 = 1.0 / (z * z);
    const double iz3 = iz2 / z;
    Vec3 dpc = j.transpose() * grad.mean;
    dpc.x() += dj(0, 2) * (-cam.fx * iz2);
    dpc.y() += dj(1, 2) * (-cam.fy * iz2);
    dpc.z() += dj(0, 0) * (-cam.fx * iz2) + dj(0, 2) * (2.0 * cam.fx * x * iz3) +
               dj(1, 1) * (-cam.fy * iz2) + dj(1, 2) * (2.0 * cam.fy * y * iz3);
    out.position = w.transpose() * dpc;
    out.opacity = grad.opacity;
    return out;
}

RenderOutput render(std::span<const Splat2D> splats, const Camera& cam, const Vec3& background,
                    const RenderSettings& settings) {
    RenderOutput out = make_output(cam, splats.size());
    RenderState& st = out.state;
    st.tiled = true;
    st.tile_size = settings.tile_size;
    st.tiles_x = (cam.width + settings.tile_size - 1) / settings.tile_size;
    st.tiles_y = (cam.height + settings.tile_size - 1) / settings.tile_size;
    st.order = depth_order(splats);
    const std::vector<Prepared> prep = prepare(splats, st.order);

    // Bin sorted splats into tiles; lists inherit the global depth order.
    const int tile_count = st.tiles_x * st.tiles_y;
    std::vector<PixelRange> ranges(st.order.size());
    std::vector<char> visible(st.order.size(), 0);
    st.tile_offsets.assign(static_cast<std::size_t>(tile_count) + 1, 0);
    const int ts = settings.tile_size;
    for (std::size_t i = 0; i < st.order.size(); ++i) {
        const auto r = pixel_range(splats[st.order[i]], cam.width, cam.height);
        if (!r) continue;
        visible[i] = 1;
        ranges[i] = *r;
        for (int ty = r->y0 / ts; ty <= r->y1 / ts; ++ty) {
            for (int tx = r->x0 / ts; tx <= r->x1 / ts; ++tx) ++st.tile_offsets[ty * st.tiles_x + tx + 1];
        }
    }
    std::partial_sum(st.tile_offsets.begin(), st.tile_offsets.end(), st.tile_offsets.begin());
    st.tile_entries.assign(static_cast<std::size_t>(st.tile_offsets.back()), 0);
    {
        std::vector<int> cursor(st.tile_offsets.begin(), st.tile_offsets.end() - 1);
        for (std::size_t i = 0; i < st.order.size(); ++i) {
            if (!visible[i]) continue;
            const PixelRange& r = ranges[i];
            for (int ty = r.y0 / ts; ty <= r.y1 / ts; ++ty) {
                for (int tx = r.x0 / ts; tx <= r.x1 / ts; ++tx) {
                    st.tile_entries[cursor[ty * st.tiles_x + tx]++] = static_cast<int>(i);
                }
            }
        }
    }

    // Per-entry weight sums, reduced below in tile order.
    std::vector<double> entry_weight(st.tile_entries.size(), 0.0);
    parallel_for(static_cast<std::size_t>(tile_count), [&](std::size_t tile) {
        const int tx = static_cast<int>(tile) % st.tiles_x;
        const int ty = static_cast<int>(tile) / st.tiles_x;
        const int begin = st.tile_offsets[tile];
        const int count = st.tile_offsets[tile + 1] - begin;
        const int* entries = st.tile_entries.data() + begin;
        double* weights = entry_weight.data() + begin;
        const int y_end = std::min(cam.height, (ty + 1) * ts);
        const int x_end = std::min(cam.width, (tx + 1) * ts);
        for (int y = ty * ts; y < y_end; ++y) {
            for (int x = tx * ts; x < x_end; ++x) {
                const PixelResult res = composite_pixel(
                    prep, count, [entries](int i) { return entries[i]; }, x, y, settings.early_out,
                    [weights](int i, double w) { weights[i] += w; });
                finish_pixel(out, y, x, res, background);
            }
        }
    });
    for (std::size_t e = 0; e < st.tile_entries.size(); ++e) {
        out.splat_weight[st.order[st.tile_entries[e]]] += entry_weight[e];
    }
    return out;
}

RenderOutput render_oracle(std::span<const Splat2D> splats, const Camera& cam,
                           const Vec3& background) {
    RenderOutput out = make_output(cam, splats.size());
    out.state.tiled = false;
    out.state.order = depth_order(splats);
    const std::vector<Prepared> prep = prepare(splats, out.state.order);
    const int n = static_cast<int>(prep.size());
    const std::vector<int>& order = out.state.order;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const PixelResult res = composite_pixel(
                prep, n, [](int i) { return i; }, x, y, false,
                [&](int i, double w) { out.splat_weight[order[i]] += w; });
            finish_pixel(out, y, x, res, background);
        }
    }
    return out;
}

RenderOutput render_oracle(std::span<const PosedGaussian> posed, std::span<const Vec3> colors,
                           const Camera& cam, const Vec3& background) {
    if (posed.size() != colors.size()) {
        throw ArgumentError("render_oracle: color count does not match splat count");
    }
    std::vector<Splat2D> splats;
    splats.reserve(posed.size());
    for (std::size_t i = 0; i < posed.size(); ++i) {
        if (auto s = project(posed[i], cam, static_cast<int>(i), false)) {
            s->color = colors[i];
            splats.push_back(*s);
        }
    }
    return render_oracle(splats, cam, background);
}

namespace {

// Gradient accumulator per list entry: mean, conic (00, 01, 11), opacity, color.
struct EntryGrad {
    double mx = 0, my = 0;
    double c00 = 0, c01 = 0, c11 = 0;
    double opacity = 0;
    double r = 0, g = 0, b = 0;
};

template <typename EntryFn>
void backward_pixel(const std::vector<Prepared>& prep, EntryFn entry, int end, double px,
                    double py, double final_t, const Vec3& bg, const Vec3& up, EntryGrad* grads) {
    double t = final_t;
    double behind = 0.0;  // sum over later splats of (c . up) * alpha * T
    const double bg_term = final_t * bg.dot(up);
    for (int i = end - 1; i >= 0; --i) {
        const Prepared& p = prep[entry(i)];
        double gauss;
        const double alpha = splat_alpha(p, px, py, gauss);
        if (alpha == 0.0) continue;
        const double one_minus = 1.0 - alpha;
        t /= one_minus;
        const double w = alpha * t;
        const double c_dot = p.r * up[0] + p.g * up[1] + p.b * up[2];
        EntryGrad& eg = grads[i];
        eg.r += w * up[0];
        eg.g += w * up[1];
        eg.b += w * up[2];
        const double dalpha = t * c_dot - (behind + bg_term) / one_minus;
        behind += c_dot * w;
        if (p.opacity * gauss > RenderSettings::kMaxAlpha) continue;  // clamped
        eg.opacity += gauss * dalpha;
        const double dpower = p.opacity * gauss * dalpha;
        const double dx = px - p.mx;
        const double dy = py - p.my;
        eg.mx += dpower * (p.ca * dx + p.cb * dy);
        eg.my += dpower * (p.cb * dx + p.cc * dy);
        eg.c00 += dpower * (-0.5 * dx * dx);
        eg.c01 += dpower * (-0.5 * dx * dy);
        eg.c11 += dpower * (-0.5 * dy * dy);
    }
}

}  // namespace

std::vector<Splat2DGrad> render_backward(std::span<const Splat2D> splats, const Camera& cam,
                                         const Vec3& background, const RenderOutput& forward,
                                         const Image& upstream) {
    if (upstream.height != cam.height || upstream.width != cam.width || upstream.channels != 3) {
        throw ArgumentError("render_backward: upstream image shape mismatch");
    }
    const RenderState& st = forward.state;
    const std::vector<Prepared> prep = prepare(splats, st.order);
    std::vector<EntryGrad> by_sorted;

    if (st.tiled) {
        std::vector<EntryGrad> entry_grads(st.tile_entries.size());
        const int ts = st.tile_size;
        parallel_for(static_cast<std::size_t>(st.tiles_x) * st.tiles_y, [&](std::size_t tile) {
            const int tx = static_cast<int>(tile) % st.tiles_x;
            const int ty = static_cast<int>(tile) / st.tiles_x;
            const int begin = st.tile_offsets[tile];
            const int* entries = st.tile_entries.data() + begin;
            EntryGrad* grads = entry_grads.data() + begin;
            const int y_end = std::min(cam.height, (ty + 1) * ts);
            const int x_end = std::min(cam.width, (tx + 1) * ts);
            for (int y = ty * ts; y < y_end; ++y) {
                for (int x = tx * ts; x < x_end; ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
                    backward_pixel(prep, [entries](int i) { return entries[i]; },
                                   st.last_entry[pix], x, y, st.final_transmittance[pix],
                                   background, upstream.rgb(y, x), grads);
                }
            }
        });
        by_sorted.assign(prep.size(), EntryGrad{});
        for (std::size_t e = 0; e < st.tile_entries.size(); ++e) {
            EntryGrad& dst = by_sorted[st.tile_entries[e]];
            const EntryGrad& src = entry_grads[e];
            dst.mx += src.mx;
            dst.my += src.my;
            dst.c00 += src.c00;
            dst.c01 += src.c01;
            dst.c11 += src.c11;
            dst.opacity += src.opacity;
            dst.r += src.r;
            dst.g += src.g;
            dst.b += src.b;
        }
    } else {
        by_sorted.assign(prep.size(), EntryGrad{});
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
                backward_pixel(prep, [](int i) { return i; }, st.last_entry[pix], x, y,
                               st.final_transmittance[pix], background, upstream.rgb(y, x),
                               by_sorted.data());
            }
        }
    }

    std::vector<Splat2DGrad> out(splats.size());
    for (std::size_t i = 0; i < prep.size(); ++i) {
        const EntryGrad& eg = by_sorted[i];
        const Prepared& p = prep[i];
        Splat2DGrad& g = out[st.order[i]];
        g.mean = Vec2(eg.mx, eg.my);
        g.opacity = eg.opacity;
        g.color = Vec3(eg.r, eg.g, eg.b);
        Mat2 conic;
        conic << p.ca, p.cb, p.cb, p.cc;
        Mat2 dconic;
        dconic << eg.c00, eg.c01, eg.c01, eg.c11;
        g.cov2d = -conic * dconic * conic;
    }
    return out;
}

}  // namespace stga
