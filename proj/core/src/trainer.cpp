#include "stga/trainer.hpp"

#include "stga/metrics.hpp"
#include "stga/optim.hpp"
#include "stga/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

namespace stga {

namespace {

constexpr int kMaxBadIterations = 10;

Vec3 sample_capsule(const Vec3& a, const Vec3& b, double r, CounterRng& rng) {
    const Vec3 axis = b - a;
    const double len = axis.norm();
    auto random_dir = [&rng] {
        Vec3 v(rng.normal(), rng.normal(), rng.normal());
        return Vec3(v / std::max(v.norm(), 1e-12));
    };
    if (len < 1e-9) return a + r * random_dir();
    const Vec3 d = axis / len;
    // Cylinder side vs. the two caps, by area.
    if (rng.uniform() * (len + 2.0 * r) < len) {
        Vec3 e1 = d.cross(Vec3::UnitZ());
        if (e1.norm() < 1e-6) e1 = d.cross(Vec3::UnitX());
        e1.normalize();
        const Vec3 e2 = d.cross(e1);
        const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        return a + d * rng.uniform(0.0, len) + r * (std::cos(phi) * e1 + std::sin(phi) * e2);
    }
    const Vec3 u = random_dir();
    return (u.dot(d) > 0.0 ? b : a) + r * u;
}

// Per-element learning rates of one splat in pack() order.
std::vector<double> splat_rates(const GaussianLayout& layout, const TrainConfig& tc) {
    const bool stg = tc.mode != TrainMode::NoStg;
    std::vector<double> lr;
    auto push = [&lr](int n, double v) { lr.insert(lr.end(), static_cast<std::size_t>(n), v); };
    push(3, tc.lr.position);
    push(3 * layout.motion_order, stg ? tc.lr.polynomial : 0.0);
    push(1, 0.0);  // temporal center of the position polynomial
    push(4, tc.lr.rotation);
    push(4 * layout.rotation_order, stg ? tc.lr.rotation : 0.0);
    push(1, 0.0);  // temporal center of the rotation polynomial
    push(3, tc.lr.scale);
    push(1, tc.lr.opacity);
    push(1, 0.0);  // temporal sharpness
    push(layout.feature_width, tc.lr.feature);
    return lr;
}

std::vector<double> flatten(std::span<const SpacetimeGaussian> gs, std::size_t per) {
    std::vector<double> out(gs.size() * per);
    for (std::size_t i = 0; i < gs.size(); ++i) gs[i].pack(out.data() + i * per);
    return out;
}

void unflatten(std::span<SpacetimeGaussian> gs, const std::vector<double>& in, std::size_t per) {
    for (std::size_t i = 0; i < gs.size(); ++i) gs[i].unpack(in.data() + i * per);
}

Vec3 to_vec3(const std::array<double, 3>& a) { return Vec3(a[0], a[1], a[2]); }

std::size_t cell_of(const Vec2& p, const DensityReport& r, int width, int height) {
    const long x = std::lround(p.x());
    const long y = std::lround(p.y());
    if (x < 0 || y < 0 || x >= width || y >= height) return static_cast<std::size_t>(-1);
    return static_cast<std::size_t>((y / r.cell_size) * r.cells_x + x / r.cell_size);
}

double strength_at(const MotionMaps& mm, const Vec2& p) {
    const long x = std::lround(p.x());
    const long y = std::lround(p.y());
    if (x < 0 || y < 0 || x >= mm.valid.width || y >= mm.valid.height) return 0.0;
    return mm.strength[static_cast<std::size_t>(y) * mm.valid.width + x];
}

// Moves Adam moments and strike counters along with a structural edit:
// `keep` rows survive in order, then `added` fresh rows.
void remap_rows(std::vector<double>& v, std::span<const std::size_t> keep, std::size_t added, std::size_t per) {
    std::vector<double> out((keep.size() + added) * per, 0.0);
    for (std::size_t j = 0; j < keep.size(); ++j) {
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(keep[j] * per), per,
                    out.begin() + static_cast<std::ptrdiff_t>(j * per));
    }
    v = std::move(out);
}

class Trainer {
public:
    Trainer(const FrameDataset& data, const Config& config, Model model, const TrainHooks& hooks)
        : data_(data), cfg_(config), tc_(config.train), hooks_(hooks), background_(to_vec3(config.train.background)) {
        result_.model = std::move(model);
    }

    TrainResult run() {
        data_.validate();
        cfg_.validate();
        Model& m = result_.model;
        for (const BoneWeights& w : m.weights) {
            for (int b = 0; b < w.count; ++b) {
                if (w.bones[b] < 0 || static_cast<std::size_t>(w.bones[b]) >= data_.skeleton.size()) {
                    throw DataError("model skinning weights reference a bone the dataset skeleton lacks");
                }
            }
        }
        if (m.color_mode == ColorMode::Mlp && m.mlp.bone_count() != data_.skeleton.size()) {
            throw DataError("model color MLP expects a different bone count than the dataset skeleton");
        }
        frames_ = data_.training_frames();
        for (int k = 0; k < data_.frame_count(); ++k) maps_.push_back(motion_maps(data_, k, cfg_.densify));
        per_ = static_cast<std::size_t>(m.layout.parameter_count());
        rates_ = splat_rates(m.layout, tc_);
        gauss_state_.resize(m.size() * per_);
        mlp_state_.resize(static_cast<std::size_t>(m.mlp.parameters().size()));
        strikes_.assign(m.size(), 0);

        for (int it = 0; it < tc_.iterations; ++it) {
            step(it);
            const int done = it + 1;
            if (done % tc_.densify_interval == 0 && done >= tc_.densify_from && done <= tc_.densify_until &&
                done < tc_.iterations) {
                densify(it);
            }
        }
        result_.skipped_updates = gauss_state_.skipped + mlp_state_.skipped;
        return std::move(result_);
    }

private:
    void step(int it) {
        Model& m = result_.model;
        const int k = frames_[static_cast<std::size_t>(it) % frames_.size()];
        const int n_frames = data_.frame_count();
        const Camera& cam = data_.cameras[k];
        const ModelRender fwd = render_model(m, data_.skeleton, data_.poses[k], data_.time(k), cam, background_);
        const std::size_t n = m.size();

        LossBreakdown lb;
        Image g_rgb;
        lb.rgb = loss_rgb(fwd.out.image, data_.frames[k], tc_.lambda_ssim, &g_rgb);

        // Screen velocity of each visible splat against the k -> k+1 flow.
        const bool have_flow = k + 1 < n_frames;
        DeformContext ctx_next;
        std::vector<int> flow_ids;
        std::vector<Mat23> jac_k, jac_next;
        std::vector<Vec2> flow_grad;
        if (have_flow) {
            const Camera& cam_next = data_.cameras[k + 1];
            ctx_next = DeformContext::make(data_.skeleton, data_.poses[k + 1], data_.time(k + 1));
            std::vector<Vec2> vel, target;
            std::vector<double> weight;
            for (std::size_t j = 0; j < fwd.splats.size(); ++j) {
                const double w = fwd.out.splat_weight[j];
                if (!(w > 0.0)) continue;
                const int i = fwd.splat_of[j];
                const Vec3 pc = cam.to_camera(fwd.posed[i].position);
                const Vec2 u = cam.project_camera(pc);
                const auto f = data_.flows[k].sample(u);
                if (!f) continue;
                const Vec3 pn = cam_next.to_camera(deform_position(m.gaussians[i], m.weights[i], ctx_next));
                if (pn.z() <= Camera::kNear) continue;
                vel.push_back(cam_next.project_camera(pn) - u);
                target.push_back(*f);
                weight.push_back(w);
                flow_ids.push_back(i);
                jac_k.push_back(cam.projection_jacobian(pc) * cam.rotation());
                jac_next.push_back(cam_next.projection_jacobian(pn) * cam_next.rotation());
            }
            lb.flow = loss_flow(vel, target, weight, &flow_grad);
        }

        const bool have_temp = prev_frame_ >= 0 && prev_frame_ == k - 1;
        Image g_temp;
        if (have_temp) lb.temp = loss_temp(fwd.out.image, prev_image_, maps_[k].valid, &g_temp);

        lb.reg = loss_reg(m.gaussians);

        auto ema = [this](double& e, bool& seen, double v) {
            e = seen ? tc_.ema_decay * e + (1.0 - tc_.ema_decay) * v : v;
            seen = true;
        };
        if (std::isfinite(lb.rgb)) ema(ema_rgb_, seen_rgb_, lb.rgb);
        if (have_flow && std::isfinite(lb.flow)) ema(ema_[0], seen_[0], lb.flow);
        if (have_temp && std::isfinite(lb.temp)) ema(ema_[1], seen_[1], lb.temp);
        if (std::isfinite(lb.reg)) ema(ema_[2], seen_[2], lb.reg);
        lb.lambda = adaptive_weights(ema_rgb_, ema_, tc_.ratios);
        lb.assemble();

        if (it % tc_.log_interval == 0 || it + 1 == tc_.iterations) {
            LogRow row{it, lb, n, psnr(fwd.out.image, data_.frames[k]), ema_rgb_, ema_};
            result_.log.push_back(row);
            if (hooks_.on_log) hooks_.on_log(row);
        }

        prev_image_ = fwd.out.image;
        prev_frame_ = k;
        if (!std::isfinite(lb.total)) {
            if (++bad_ >= kMaxBadIterations) {
                throw NumericError("loss was non-finite for " + std::to_string(kMaxBadIterations) +
                                   " consecutive iterations (last at iteration " + std::to_string(it) + ")");
            }
            return;
        }
        bad_ = 0;

        Image dimage = g_rgb;
        if (have_temp) {
            for (std::size_t p = 0; p < dimage.data.size(); ++p) dimage.data[p] += lb.lambda[1] * g_temp.data[p];
        }
        std::vector<Vec3> extra;
        ModelGrad grad = zero_grad(m);
        if (!flow_ids.empty()) {
            extra.assign(n, Vec3::Zero());
            for (std::size_t q = 0; q < flow_ids.size(); ++q) {
                const Vec2 g = lb.lambda[0] * flow_grad[q];
                extra[flow_ids[q]] -= jac_k[q].transpose() * g;
            }
        }
        backward_model(m, fwd, cam, background_, dimage, grad, extra);
        for (std::size_t q = 0; q < flow_ids.size(); ++q) {
            const int i = flow_ids[q];
            PosedGradient pg;
            pg.position = jac_next[q].transpose() * (lb.lambda[0] * flow_grad[q]);
            pg.appearance_feat = VecX::Zero(m.gaussians[i].appearance_feat.size());
            if (pg.position.isZero()) continue;
            grad.gaussians[i] += deform_backward(m.gaussians[i], m.weights[i], ctx_next, pg);
        }
        (void)loss_reg(m.gaussians, grad.gaussians, lb.lambda[2]);

        ++adam_step_;
        std::vector<double> params = flatten(m.gaussians, per_);
        const std::vector<double> grads = flatten(grad.gaussians, per_);
        std::vector<double> lr(params.size());
        for (std::size_t i = 0; i < n; ++i) std::copy(rates_.begin(), rates_.end(), lr.begin() + static_cast<std::ptrdiff_t>(i * per_));
        if (adam_update(params, grads, gauss_state_, 0, lr, adam_step_, tc_.adam)) unflatten(m.gaussians, params, per_);
        VecX& mp = m.mlp.parameters();
        if (mp.size() > 0) {
            const double mlr[1] = {tc_.lr.mlp};
            (void)adam_update(std::span<double>(mp.data(), static_cast<std::size_t>(mp.size())),
                              std::span<const double>(grad.mlp.data(), static_cast<std::size_t>(grad.mlp.size())),
                              mlp_state_, 0, mlr, adam_step_, tc_.adam);
        }
        m.round_to_float();
    }

    void densify(int it) {
        Model& m = result_.model;
        const DensifyConfig& dc = cfg_.densify;
        const bool flow_ops = tc_.mode != TrainMode::NoFlow;
        DensifyStats stats;
        stats.iteration = it + 1;

        int kd = frames_[static_cast<std::size_t>(it) % frames_.size()];
        if (kd + 1 >= data_.frame_count()) kd = frames_[static_cast<std::size_t>(it + frames_.size() - 1) % frames_.size()];
        stats.frame = kd;
        const Camera& cam = data_.cameras[kd];
        const ModelRender fwd = render_model(m, data_.skeleton, data_.poses[kd], data_.time(kd), cam, background_);
        const MotionMaps& mm = maps_[kd];
        const std::size_t n = m.size();

        std::vector<double> contribution(n, 0.0);
        std::vector<Vec2> pixel(n, Vec2::Constant(-1.0));
        std::vector<int> visible;
        for (std::size_t j = 0; j < fwd.splats.size(); ++j) {
            const int i = fwd.splat_of[j];
            contribution[i] = fwd.out.splat_weight[j];
            pixel[i] = fwd.splats[j].mean;
            if (contribution[i] > kVisibleWeight) visible.push_back(i);
        }

        std::vector<SpacetimeGaussian> born;
        std::vector<BoneWeights> born_weights;
        if (flow_ops && kd + 1 < data_.frame_count()) {
            const Mask dynamic = detect_dynamic(fwd.out.image, data_.frames[kd], dc.error_threshold);
            std::vector<Vec2> pixels;
            for (int i : visible) pixels.push_back(pixel[i]);
            const DensityReport report = density_report(pixels, dynamic, mm.valid, mm.strength, dc);
            const std::vector<int> cells = density_trigger(report);
            stats.triggered_cells = cells.size();

            // Consistency of visible splats inside the valid region.
            const Camera& cam_next = data_.cameras[kd + 1];
            const DeformContext ctx_next = DeformContext::make(data_.skeleton, data_.poses[kd + 1], data_.time(kd + 1));
            for (int i : visible) {
                if (!mm.valid.contains(pixel[i])) continue;
                const Vec3 cur = deform_position(m.gaussians[i], m.weights[i], ctx_next);
                const Consistency c = check_consistency(fwd.posed[i].position, cur, data_.flows[kd], cam, cam_next,
                                                        dc.consistency_tolerance);
                strikes_[i] = update_strikes(strikes_[i], c);
                if (c == Consistency::Flag) ++stats.flagged;
            }

            // Seeds per triggered cell: visible splats inside R and the dynamic mask.
            std::vector<std::vector<int>> seeds(report.current.size());
            for (int i : visible) {
                if (!mm.valid.contains(pixel[i]) || !dynamic.contains(pixel[i])) continue;
                const std::size_t c = cell_of(pixel[i], report, cam.width, cam.height);
                if (c < seeds.size()) seeds[c].push_back(i);
            }
            const std::size_t cap = static_cast<std::size_t>(std::max(0, std::min(dc.max_new_per_round, tc_.max_splats)));
            CounterRng rng(tc_.seed, 0xD3A5000000ULL + static_cast<std::uint64_t>(it));
            for (int c : cells) {
                auto& list = seeds[static_cast<std::size_t>(c)];
                if (list.empty()) continue;
                std::stable_sort(list.begin(), list.end(), [&](int a, int b) { return contribution[a] > contribution[b]; });
                const int deficit = static_cast<int>(std::ceil(report.target[c] - report.current[c]));
                for (int s = 0; s < deficit && born.size() < cap; ++s) {
                    const int i = list[static_cast<std::size_t>(s) % list.size()];
                    const auto f = data_.flows[kd].sample(pixel[i]);
                    if (!f) continue;
                    auto cand = sample_along_flow(m.gaussians[i], m.weights[i], fwd.ctx, *f, cam, dc.step, dc.spread, rng);
                    if (!cand) continue;
                    const auto px = cam.project(deform_position(*cand, m.weights[i], fwd.ctx));
                    if (!px || !mm.valid.contains(*px) || !dynamic.contains(*px)) continue;
                    born.push_back(std::move(*cand));
                    born_weights.push_back(m.weights[i]);
                }
            }
        }

        std::vector<PruneCandidate> cands(n);
        for (std::size_t i = 0; i < n; ++i) {
            cands[i].max_opacity = max_temporal_opacity(m.gaussians[i]);
            cands[i].contribution = contribution[i];
            cands[i].motion_strength = flow_ops ? strength_at(mm, pixel[i]) : 0.0;
            cands[i].consistent = strikes_[i] == 0;
        }
        const std::size_t budget = static_cast<std::size_t>(tc_.max_splats) > born.size()
                                       ? static_cast<std::size_t>(tc_.max_splats) - born.size()
                                       : 0;
        std::vector<std::size_t> keep = prune(cands, dc.opacity_floor, flow_ops ? dc.flow_protection : 0.0, budget);
        if (flow_ops) {
            std::erase_if(keep, [&](std::size_t i) { return strikes_[i] >= kConsistencyStrikes; });
        }
        stats.removed = n - keep.size();
        stats.added = born.size();

        m.keep(keep);
        for (std::size_t b = 0; b < born.size(); ++b) {
            m.gaussians.push_back(std::move(born[b]));
            m.weights.push_back(born_weights[b]);
        }
        m.round_to_float();
        remap_rows(gauss_state_.m, keep, born.size(), per_);
        remap_rows(gauss_state_.v, keep, born.size(), per_);
        std::vector<int> strikes(keep.size() + born.size(), 0);
        for (std::size_t j = 0; j < keep.size(); ++j) strikes[j] = strikes_[keep[j]];
        strikes_ = std::move(strikes);
        result_.densify.push_back(stats);
    }

    const FrameDataset& data_;
    const Config& cfg_;
    const TrainConfig& tc_;
    const TrainHooks& hooks_;
    Vec3 background_;
    TrainResult result_;

    std::vector<int> frames_;
    std::vector<MotionMaps> maps_;
    std::size_t per_ = 0;
    std::vector<double> rates_;
    AdamState gauss_state_, mlp_state_;
    std::int64_t adam_step_ = 0;
    std::vector<int> strikes_;

    double ema_rgb_ = 0.0;
    bool seen_rgb_ = false;
    std::array<double, 3> ema_{0.0, 0.0, 0.0};
    std::array<bool, 3> seen_{false, false, false};
    Image prev_image_;
    int prev_frame_ = -1;
    int bad_ = 0;
};

}  // namespace

Model init_model(const Config& config, const Skeleton& skeleton) {
    config.validate();
    if (skeleton.empty()) throw ArgumentError("init_model: empty skeleton");
    const TrainConfig& tc = config.train;
    Model m;
    m.layout = tc.layout;
    m.sh_degree = tc.sh_degree;
    if (tc.mode == TrainMode::Sh) {
        m.color_mode = ColorMode::SphericalHarmonics;
        m.layout.feature_width = sh_coefficient_count(tc.sh_degree);
    }
    const auto segments = skeleton.segments();
    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto& [a, b] : segments) {
        total += (b - a).norm() + 2.0 * tc.init_radius;
        cumulative.push_back(total);
    }
    CounterRng rng(tc.seed, 0x1A17);
    std::vector<Vec3> positions;
    for (int i = 0; i < tc.init_count; ++i) {
        const double pick = rng.uniform() * total;
        const std::size_t s = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin(),
                                     static_cast<std::ptrdiff_t>(segments.size()) - 1));
        positions.push_back(sample_capsule(segments[s].first, segments[s].second, tc.init_radius, rng));
    }
    m.weights = assign_skinning_weights(positions, skeleton);
    for (const Vec3& p : positions) {
        SpacetimeGaussian g = SpacetimeGaussian::make(m.layout);
        g.canonical_pos = p;
        g.temporal_center_pos = 0.5;
        g.temporal_center_rot = 0.5;
        g.log_scales = Vec3::Constant(std::log(tc.init_scale));
        g.base_opacity = logit(tc.init_opacity);
        if (m.color_mode == ColorMode::Mlp) {
            for (Eigen::Index k = 0; k < g.appearance_feat.size(); ++k) g.appearance_feat[k] = 0.1 * rng.normal();
        } else {
            for (int c = 0; c < 3 && c < g.appearance_feat.size(); ++c) g.appearance_feat[c] = 0.1 * rng.normal();
        }
        m.gaussians.push_back(std::move(g));
    }
    if (m.color_mode == ColorMode::Mlp) {
        m.mlp = ColorMLP(config.encoding, m.layout, skeleton.size(), tc.hidden, tc.seed);
    }
    m.round_to_float();
    return m;
}

TrainResult train(const FrameDataset& data, const Config& config, Model model, const TrainHooks& hooks) {
    return Trainer(data, config, std::move(model), hooks).run();
}

TrainResult train(const FrameDataset& data, const Config& config, const TrainHooks& hooks) {
    data.validate();
    return train(data, config, init_model(config, data.skeleton), hooks);
}

void write_log_csv(const std::filesystem::path& path, const std::vector<LogRow>& rows) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path.string());
    os << "iteration,rgb,flow,temp,reg,lambda1,lambda2,lambda3,total,splat_count,psnr_train\n";
    os << std::setprecision(17);
    for (const LogRow& r : rows) {
        os << r.iteration << ',' << r.loss.rgb << ',' << r.loss.flow << ',' << r.loss.temp << ',' << r.loss.reg << ','
           << r.loss.lambda[0] << ',' << r.loss.lambda[1] << ',' << r.loss.lambda[2] << ',' << r.loss.total << ','
           << r.splat_count << ',' << r.psnr_train << '\n';
    }
    if (!os) throw DataError("write failed: " + path.string());
}

MotionMaps motion_maps(const FrameDataset& data, int k, const DensifyConfig& cfg) {
    const int last = std::min(k, data.frame_count() - 2);
    const int first = std::max(0, k - cfg.window);
    std::vector<FlowField> history;
    for (int j = first; j <= last; ++j) history.push_back(data.flows[j]);
    MotionMaps mm;
    if (history.empty()) {
        mm.valid = Mask(data.height(), data.width());
        mm.strength.assign(static_cast<std::size_t>(data.height()) * data.width(), 0.0);
        return mm;
    }
    mm.valid = valid_region(history, cfg.window, cfg.motion_threshold);
    const auto acc = accumulate_motion(history, cfg.window);
    mm.strength = motion_strength(acc, cfg.motion_threshold);
    return mm;
}

DensityReport model_density(const Model& model, const FrameDataset& data, int k, const DensifyConfig& cfg,
                            const Vec3& background) {
    const ModelRender r = render_model(model, data.skeleton, data.poses[k], data.time(k), data.cameras[k], background);
    std::vector<Vec2> pixels;
    for (std::size_t j = 0; j < r.splats.size(); ++j) {
        if (r.out.splat_weight[j] > kVisibleWeight) pixels.push_back(r.splats[j].mean);
    }
    const MotionMaps mm = motion_maps(data, k, cfg);
    const Mask dynamic = detect_dynamic(r.out.image, data.frames[k], cfg.error_threshold);
    return density_report(pixels, dynamic, mm.valid, mm.strength, cfg);
}

double mean_density_ratio(const Model& model, const FrameDataset& data, const DensifyConfig& cfg,
                          const Vec3& background) {
    double sum = 0.0;
    int count = 0;
    for (int k : data.training_frames()) {
        const ModelRender r =
            render_model(model, data.skeleton, data.poses[k], data.time(k), data.cameras[k], background);
        std::vector<Vec2> pixels;
        for (const Splat2D& s : r.splats) pixels.push_back(s.mean);
        Mask covered(data.height(), data.width());
        for (std::size_t p = 0; p < covered.data.size(); ++p) covered.data[p] = r.out.alpha[p] >= 0.5 ? 1 : 0;
        const double ratio = coverage_density_ratio(pixels, motion_maps(data, k, cfg).valid, covered);
        if (ratio > 0.0) {
            sum += ratio;
            ++count;
        }
    }
    return count ? sum / count : 0.0;
}

}  // namespace stga
