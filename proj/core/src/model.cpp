#include "stga/model.hpp"

#include <cmath>

namespace stga {

namespace {

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

void Model::round_to_float() {
    for (SpacetimeGaussian& g : gaussians) {
        const std::size_t n = g.layout().parameter_count();
        std::vector<double> p(n);
        g.pack(p.data());
        for (double& v : p) v = to_float(v);
        g.unpack(p.data());
    }
    for (BoneWeights& w : weights) {
        for (double& v : w.weights) v = to_float(v);
    }
    VecX& params = mlp.parameters();
    for (Eigen::Index i = 0; i < params.size(); ++i) params[i] = to_float(params[i]);
}

void Model::keep(std::span<const std::size_t> indices) {
    std::vector<SpacetimeGaussian> g;
    SkinningWeights w;
    g.reserve(indices.size());
    w.reserve(indices.size());
    for (std::size_t i : indices) {
        g.push_back(std::move(gaussians[i]));
        w.push_back(weights[i]);
    }
    gaussians = std::move(g);
    weights = std::move(w);
}

ModelRender render_model(const Model& model, const Skeleton& skel, const Pose& pose, double t,
                         const Camera& cam, const Vec3& background, const RenderSettings& settings) {
    ModelRender r;
    r.ctx = DeformContext::make(skel, pose, t);
    r.posed = deform_batch(model.gaussians, model.weights, r.ctx);
    const std::size_t n = model.size();
    std::vector<Vec3> positions(n);
    for (std::size_t i = 0; i < n; ++i) positions[i] = r.posed[i].position;

    if (model.color_mode == ColorMode::Mlp) {
        r.cache = model.mlp.forward_batch(model.gaussians, positions, pose, cam.center());
        r.colors = r.cache->colors;
    } else {
        r.colors = MatX(3, static_cast<Eigen::Index>(n));
        r.view_dirs.resize(n);
        r.view_dist.resize(n);
        const Vec3 center = cam.center();
        for (std::size_t i = 0; i < n; ++i) {
            const Vec3 u = positions[i] - center;
            r.view_dist[i] = u.norm();
            r.view_dirs[i] = r.view_dist[i] > 0.0 ? Vec3(u / r.view_dist[i]) : Vec3(0, 0, 1);
            const VecX& f = model.gaussians[i].appearance_feat;
            r.colors.col(static_cast<Eigen::Index>(i)) =
                sh_color(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), r.view_dirs[i],
                         model.sh_degree);
        }
    }

    r.splats.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (auto s = project(r.posed[i], cam, static_cast<int>(i))) {
            s->color = r.colors.col(static_cast<Eigen::Index>(i));
            r.splats.push_back(*s);
            r.splat_of.push_back(static_cast<int>(i));
        }
    }
    r.out = render(r.splats, cam, background, settings);
    return r;
}

ModelGrad zero_grad(const Model& model) {
    ModelGrad g;
    g.gaussians.reserve(model.size());
    for (const SpacetimeGaussian& s : model.gaussians) g.gaussians.push_back(SpacetimeGaussian::zeros_like(s));
    g.mlp = VecX::Zero(model.mlp.parameters().size());
    return g;
}

void backward_model(const Model& model, const ModelRender& fwd, const Camera& cam,
                    const Vec3& background, const Image& dimage, ModelGrad& grad,
                    std::span<const Vec3> extra_position) {
    const std::size_t n = model.size();
    if (!extra_position.empty() && extra_position.size() != n) {
        throw ArgumentError("backward_model: extra position gradient count does not match splat count");
    }
    const auto splat_grads = render_backward(fwd.splats, cam, background, fwd.out, dimage);

    std::vector<PosedGradient> posed(n);
    MatX dcolors = MatX::Zero(3, static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < fwd.splats.size(); ++j) {
        const int i = fwd.splat_of[j];
        const PosedGradient pg = project_backward(fwd.posed[i], cam, splat_grads[j]);
        posed[i].position = pg.position;
        posed[i].covariance = pg.covariance;
        posed[i].opacity = pg.opacity;
        dcolors.col(i) = splat_grads[j].color;
    }

    for (std::size_t i = 0; i < extra_position.size(); ++i) posed[i].position += extra_position[i];

    std::vector<ColorInputGrad> color_inputs;
    if (model.color_mode == ColorMode::Mlp) {
        std::vector<Vec3> positions(n);
        for (std::size_t i = 0; i < n; ++i) positions[i] = fwd.posed[i].position;
        color_inputs = model.mlp.backward_batch(model.gaussians, positions, *fwd.cache, dcolors, grad.mlp);
        for (std::size_t i = 0; i < n; ++i) posed[i].position += color_inputs[i].position;
    }

    for (std::size_t i = 0; i < n; ++i) {
        const SpacetimeGaussian& g = model.gaussians[i];
        const Eigen::Index col = static_cast<Eigen::Index>(i);
        posed[i].appearance_feat = VecX::Zero(g.appearance_feat.size());
        if (model.color_mode == ColorMode::SphericalHarmonics) {
            Vec3 up = dcolors.col(col);
            // Channels clipped to 0 or 1 pass no gradient.
            for (int c = 0; c < 3; ++c) {
                const double v = fwd.colors(c, col);
                if (v <= 0.0 || v >= 1.0) up[c] = 0.0;
            }
            if (up.squaredNorm() > 0.0) {
                const std::span<const double> coeffs(g.appearance_feat.data(),
                                                     static_cast<std::size_t>(g.appearance_feat.size()));
                const ShColorGrad sg = sh_color_backward(coeffs, fwd.view_dirs[i], model.sh_degree, up);
                posed[i].appearance_feat = sg.coeffs;
                if (fwd.view_dist[i] > 0.0) {
                    const Vec3& d = fwd.view_dirs[i];
                    posed[i].position += (sg.dir - d * d.dot(sg.dir)) / fwd.view_dist[i];
                }
            }
        }
        GaussianGrad gg = deform_backward(g, model.weights[i], fwd.ctx, posed[i]);
        if (model.color_mode == ColorMode::Mlp) {
            for (std::size_t k = 0; k < gg.motion_coeffs.size(); ++k) gg.motion_coeffs[k] += color_inputs[i].motion_coeffs[k];
            for (std::size_t k = 0; k < gg.rot_coeffs.size(); ++k) gg.rot_coeffs[k] += color_inputs[i].rot_coeffs[k];
            gg.appearance_feat += color_inputs[i].appearance_feat;
        }
        grad.gaussians[i] += gg;
    }
}

}  // namespace stga
