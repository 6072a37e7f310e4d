#include "stga/appearance.hpp"

#include "stga/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace stga {

VecX positional_encoding(std::span<const double> x, int frequencies) {
    VecX out(static_cast<Eigen::Index>(x.size()) * 2 * std::max(0, frequencies));
    Eigen::Index k = 0;
    for (double v : x) {
        double freq = std::numbers::pi;
        for (int l = 0; l < frequencies; ++l) {
            out[k++] = std::sin(freq * v);
            out[k++] = std::cos(freq * v);
            freq *= 2.0;
        }
    }
    return out;
}

namespace {

constexpr double kSh0 = 0.28209479177387814;
constexpr double kSh1 = 0.4886025119029199;
constexpr double kSh2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                            -1.0925484305920792, 0.5462742152960396};

// d(basis)/d(dir): 9 x 3.
Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Vec3& d) {
    const double x = d.x(), y = d.y(), z = d.z();
    Eigen::Matrix<double, 9, 3> j = Eigen::Matrix<double, 9, 3>::Zero();
    j(1, 1) = -kSh1;
    j(2, 2) = kSh1;
    j(3, 0) = -kSh1;
    j(4, 0) = kSh2[0] * y;
    j(4, 1) = kSh2[0] * x;
    j(5, 1) = kSh2[1] * z;
    j(5, 2) = kSh2[1] * y;
    j(6, 0) = kSh2[2] * -2.0 * x;
    j(6, 1) = kSh2[2] * -2.0 * y;
    j(6, 2) = kSh2[2] * 4.0 * z;
    j(7, 0) = kSh2[3] * z;
    j(7, 2) = kSh2[3] * x;
    j(8, 0) = kSh2[4] * 2.0 * x;
    j(8, 1) = kSh2[4] * -2.0 * y;
    return j;
}

Vec3 sh_raw(std::span<const double> coeffs, const Vec3& dir, int degree) {
    const auto basis = sh_basis(dir);
    const int n = (degree + 1) * (degree + 1);
    Vec3 c = Vec3::Zero();
    for (int k = 0; k < n; ++k) {
        for (int ch = 0; ch < 3; ++ch) c[ch] += basis[k] * coeffs[static_cast<std::size_t>(k * 3 + ch)];
    }
    return c;
}

}  // namespace

Eigen::Matrix<double, 9, 1> sh_basis(const Vec3& d) {
    const double x = d.x(), y = d.y(), z = d.z();
    Eigen::Matrix<double, 9, 1> b;
    b << kSh0, -kSh1 * y, kSh1 * z, -kSh1 * x, kSh2[0] * x * y, kSh2[1] * y * z,
        kSh2[2] * (2.0 * z * z - x * x - y * y), kSh2[3] * x * z, kSh2[4] * (x * x - y * y);
    return b;
}

Vec3 sh_color(std::span<const double> coeffs, const Vec3& dir, int degree) {
    if (degree < 0 || degree > 2) throw ArgumentError("sh_color: degree must be in [0, 2]");
    if (coeffs.size() < static_cast<std::size_t>(sh_coefficient_count(degree))) {
        throw ArgumentError("sh_color: too few coefficients for degree");
    }
    const Vec3 raw = sh_raw(coeffs, dir, degree);
    return (raw.array() + 0.5).min(1.0).max(0.0).matrix();
}

ShColorGrad sh_color_backward(std::span<const double> coeffs, const Vec3& dir, int degree,
                              const Vec3& upstream) {
    const int n = (degree + 1) * (degree + 1);
    ShColorGrad g;
    g.coeffs = VecX::Zero(static_cast<Eigen::Index>(coeffs.size()));
    const auto basis = sh_basis(dir);
    const auto jac = sh_basis_jacobian(dir);
    for (int k = 0; k < n; ++k) {
        double dk = 0.0;
        for (int ch = 0; ch < 3; ++ch) {
            g.coeffs[k * 3 + ch] = basis[k] * upstream[ch];
            dk += coeffs[static_cast<std::size_t>(k * 3 + ch)] * upstream[ch];
        }
        g.dir += jac.row(k).transpose() * dk;
    }
    return g;
}

ColorMLP::ColorMLP(const EncodingConfig& enc, const GaussianLayout& layout, std::size_t bone_count,
                   std::vector<int> hidden, std::uint64_t seed)
    : enc_(enc), layout_(layout), bones_(bone_count), hidden_(std::move(hidden)) {
    build_blocks();
    CounterRng rng(seed, 0xC0102);
    auto fill = [&](const Block& blk, double limit) {
        for (Eigen::Index i = 0; i < blk.rows * blk.cols; ++i) {
            params_[blk.offset + i] = rng.uniform(-limit, limit);
        }
    };
    fill(proj_w_, std::sqrt(3.0 / std::max(1, motion_input_dim())));
    for (std::size_t l = 0; l < w_.size(); ++l) {
        const double fan_in = static_cast<double>(w_[l].cols);
        const bool last = l + 1 == w_.size();
        fill(w_[l], (last ? 0.1 : 1.0) * std::sqrt(6.0 / fan_in));
    }
}

void ColorMLP::build_blocks() {
    Eigen::Index offset = 0;
    auto take = [&offset](Eigen::Index rows, Eigen::Index cols) {
        Block b{offset, rows, cols};
        offset += rows * cols;
        return b;
    };
    proj_w_ = take(enc_.motion_width, motion_input_dim());
    proj_b_ = take(enc_.motion_width, 1);
    const auto sizes = layer_sizes();
    w_.clear();
    b_.clear();
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        w_.push_back(take(sizes[l + 1], sizes[l]));
        b_.push_back(take(sizes[l + 1], 1));
    }
    params_ = VecX::Zero(offset);
}

std::vector<int> ColorMLP::layer_sizes() const {
    std::vector<int> sizes{input_dim()};
    sizes.insert(sizes.end(), hidden_.begin(), hidden_.end());
    sizes.push_back(3);
    return sizes;
}

int ColorMLP::motion_input_dim() const {
    return 3 * layout_.motion_order + 4 * (layout_.rotation_order + 1);
}

int ColorMLP::view_dim() const {
    if (enc_.view_frequencies <= 0) return 0;
    return enc_.view_encoding == ViewEncoding::SphericalHarmonics ? 9 : 6 * enc_.view_frequencies;
}

// Input layout: [gamma(mu) | f_mot | gamma(d) | latent | gamma(pose)].
int ColorMLP::input_dim() const {
    return position_dim() + enc_.motion_width + view_dim() + layout_.feature_width + pose_dim();
}

Eigen::Map<const MatX> ColorMLP::motion_projection() const {
    return {params_.data() + proj_w_.offset, proj_w_.rows, proj_w_.cols};
}
Eigen::Map<MatX> ColorMLP::motion_projection() {
    return {params_.data() + proj_w_.offset, proj_w_.rows, proj_w_.cols};
}
Eigen::Map<VecX> ColorMLP::motion_bias() { return {params_.data() + proj_b_.offset, proj_b_.rows}; }

Eigen::Map<const MatX> ColorMLP::weight(int l) const {
    return {params_.data() + w_[l].offset, w_[l].rows, w_[l].cols};
}
Eigen::Map<MatX> ColorMLP::weight(int l) {
    return {params_.data() + w_[l].offset, w_[l].rows, w_[l].cols};
}
Eigen::Map<VecX> ColorMLP::bias(int l) { return {params_.data() + b_[l].offset, b_[l].rows}; }
Eigen::Map<const VecX> ColorMLP::bias(int l) const {
    return {params_.data() + b_[l].offset, b_[l].rows};
}

namespace {

VecX motion_inputs(const SpacetimeGaussian& g) {
    VecX m(static_cast<Eigen::Index>(3 * g.motion_coeffs.size() + 4 * g.rot_coeffs.size()));
    Eigen::Index k = 0;
    for (const Vec3& b : g.motion_coeffs) {
        m.segment<3>(k) = b;
        k += 3;
    }
    for (const Quat& c : g.rot_coeffs) {
        m.segment<4>(k) = c;
        k += 4;
    }
    return m;
}

}  // namespace

VecX ColorMLP::motion_feature(const SpacetimeGaussian& g) const {
    const Eigen::Map<const VecX> bias_vec(params_.data() + proj_b_.offset, proj_b_.rows);
    return motion_projection() * motion_inputs(g) + bias_vec;
}

VecX ColorMLP::pose_features(const Pose& pose) const {
    if (enc_.pose_frequencies <= 0 || bones_ == 0) return VecX(0);
    if (pose.rotations.size() != bones_) {
        throw ArgumentError("ColorMLP: pose has " + std::to_string(pose.rotations.size()) +
                            " bones, expected " + std::to_string(bones_));
    }
    std::vector<double> flat;
    flat.reserve(bones_ * 4);
    for (const Quat& q : pose.rotations) flat.insert(flat.end(), q.data(), q.data() + 4);
    return positional_encoding(flat, enc_.pose_frequencies);
}

VecX ColorMLP::view_features(const Vec3& dir) const {
    if (view_dim() == 0) return VecX(0);
    if (enc_.view_encoding == ViewEncoding::SphericalHarmonics) return sh_basis(dir);
    return positional_encoding(dir, enc_.view_frequencies);
}

ColorCache ColorMLP::forward_directions(std::span<const SpacetimeGaussian> gaussians,
                                        std::span<const Vec3> positions, const Pose& pose,
                                        std::span<const Vec3> view_dirs) const {
    const auto n = static_cast<Eigen::Index>(gaussians.size());
    if (positions.size() != gaussians.size() || view_dirs.size() != gaussians.size()) {
        throw ArgumentError("ColorMLP: batch size mismatch");
    }
    const int pos_dim = position_dim();
    const int mw = enc_.motion_width;
    const int vdim = view_dim();
    const int fw = layout_.feature_width;
    const int local_dim = pos_dim + mw + vdim + fw;

    ColorCache cache;
    cache.view_dirs.assign(view_dirs.begin(), view_dirs.end());
    cache.view_distance.assign(gaussians.size(), 0.0);
    cache.input.resize(local_dim, n);

    MatX coeffs(motion_input_dim(), n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const SpacetimeGaussian& g = gaussians[static_cast<std::size_t>(i)];
        if (g.appearance_feat.size() != fw) throw ArgumentError("ColorMLP: feature width mismatch");
        coeffs.col(i) = motion_inputs(g);
        cache.input.col(i).head(pos_dim) =
            positional_encoding(positions[static_cast<std::size_t>(i)], enc_.position_frequencies);
        cache.input.col(i).segment(pos_dim + mw, vdim) =
            view_features(view_dirs[static_cast<std::size_t>(i)]);
        cache.input.col(i).segment(pos_dim + mw + vdim, fw) = g.appearance_feat;
    }
    const Eigen::Map<const VecX> proj_bias(params_.data() + proj_b_.offset, proj_b_.rows);
    cache.input.middleRows(pos_dim, mw) = (motion_projection() * coeffs).colwise() + proj_bias;
    cache.motion_inputs = std::move(coeffs);

    // Pose features are shared by the batch: fold them into the first bias.
    cache.pose_features = pose_features(pose);
    const auto w0 = weight(0);
    const VecX bias0 = w0.rightCols(pose_dim()) * cache.pose_features + bias(0);

    MatX act = (w0.leftCols(local_dim) * cache.input).colwise() + bias0;
    const std::size_t layers = w_.size();
    for (std::size_t l = 0; l < layers; ++l) {
        if (l > 0) act = (weight(static_cast<int>(l)) * act).colwise() + bias(static_cast<int>(l));
        if (l + 1 < layers) {
            act = act.cwiseMax(0.0);
            cache.activations.push_back(act);
        }
    }
    cache.colors = act.unaryExpr([](double v) { return sigmoid(v); });
    return cache;
}

ColorCache ColorMLP::forward_batch(std::span<const SpacetimeGaussian> gaussians,
                                   std::span<const Vec3> positions, const Pose& pose,
                                   const Vec3& camera_center) const {
    std::vector<Vec3> dirs(positions.size());
    std::vector<double> dist(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const Vec3 u = positions[i] - camera_center;
        dist[i] = u.norm();
        dirs[i] = dist[i] > 0.0 ? Vec3(u / dist[i]) : Vec3(0.0, 0.0, 1.0);
    }
    ColorCache cache = forward_directions(gaussians, positions, pose, dirs);
    cache.view_distance = std::move(dist);
    return cache;
}

std::vector<ColorInputGrad> ColorMLP::backward_batch(std::span<const SpacetimeGaussian> gaussians,
                                                     std::span<const Vec3> positions,
                                                     const ColorCache& cache, const MatX& dcolors,
                                                     VecX& param_grad) const {
    const auto n = static_cast<Eigen::Index>(gaussians.size());
    if (param_grad.size() != params_.size()) param_grad = VecX::Zero(params_.size());
    const int pos_dim = position_dim();
    const int mw = enc_.motion_width;
    const int vdim = view_dim();
    const int fw = layout_.feature_width;
    const int local_dim = pos_dim + mw + vdim + fw;
    const std::size_t layers = w_.size();

    // Through the output sigmoid.
    MatX delta =
        dcolors.cwiseProduct(cache.colors.cwiseProduct((1.0 - cache.colors.array()).matrix()));
    for (std::size_t li = layers; li-- > 1;) {
        const MatX& below = cache.activations[li - 1];
        Eigen::Map<MatX> gw(param_grad.data() + w_[li].offset, w_[li].rows, w_[li].cols);
        Eigen::Map<VecX> gb(param_grad.data() + b_[li].offset, b_[li].rows);
        gb += delta.rowwise().sum();
        gw.noalias() += delta * below.transpose();
        MatX prev = weight(static_cast<int>(li)).transpose() * delta;
        delta = prev.cwiseProduct((below.array() > 0.0).cast<double>().matrix());
    }
    {
        Eigen::Map<MatX> gw(param_grad.data() + w_[0].offset, w_[0].rows, w_[0].cols);
        Eigen::Map<VecX> gb(param_grad.data() + b_[0].offset, b_[0].rows);
        const VecX row_sum = delta.rowwise().sum();
        gb += row_sum;
        gw.leftCols(local_dim).noalias() += delta * cache.input.transpose();
        if (pose_dim() > 0) gw.rightCols(pose_dim()).noalias() += row_sum * cache.pose_features.transpose();
    }
    const MatX dinput = weight(0).leftCols(local_dim).transpose() * delta;

    // Motion projection.
    const MatX dfeat_mot = dinput.middleRows(pos_dim, mw);
    {
        Eigen::Map<MatX> gp(param_grad.data() + proj_w_.offset, proj_w_.rows, proj_w_.cols);
        Eigen::Map<VecX> gpb(param_grad.data() + proj_b_.offset, proj_b_.rows);
        gp.noalias() += dfeat_mot * cache.motion_inputs.transpose();
        gpb += dfeat_mot.rowwise().sum();
    }
    const MatX dcoeffs = motion_projection().transpose() * dfeat_mot;

    std::vector<ColorInputGrad> out(gaussians.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        const SpacetimeGaussian& g = gaussians[si];
        ColorInputGrad& gi = out[si];

        // gamma(mu): d sin(f x) = f cos(f x), d cos(f x) = -f sin(f x).
        const Vec3& mu = positions[si];
        Eigen::Index k = 0;
        for (int c = 0; c < 3; ++c) {
            double freq = std::numbers::pi;
            for (int l = 0; l < enc_.position_frequencies; ++l) {
                gi.position[c] += dinput(k, i) * freq * std::cos(freq * mu[c]) -
                                  dinput(k + 1, i) * freq * std::sin(freq * mu[c]);
                k += 2;
                freq *= 2.0;
            }
        }

        // View direction d = (mu - center) / |mu - center|.
        if (vdim > 0 && cache.view_distance[si] > 0.0) {
            const Vec3& d = cache.view_dirs[si];
            Vec3 ddir = Vec3::Zero();
            const auto dview = dinput.col(i).segment(pos_dim + mw, vdim);
            if (enc_.view_encoding == ViewEncoding::SphericalHarmonics) {
                ddir = sh_basis_jacobian(d).transpose() * dview;
            } else {
                Eigen::Index m = 0;
                for (int c = 0; c < 3; ++c) {
                    double freq = std::numbers::pi;
                    for (int l = 0; l < enc_.view_frequencies; ++l) {
                        ddir[c] += dview[m] * freq * std::cos(freq * d[c]) -
                                   dview[m + 1] * freq * std::sin(freq * d[c]);
                        m += 2;
                        freq *= 2.0;
                    }
                }
            }
            gi.position += (ddir - d * d.dot(ddir)) / cache.view_distance[si];
        }

        gi.motion_coeffs.resize(g.motion_coeffs.size());
        gi.rot_coeffs.resize(g.rot_coeffs.size());
        Eigen::Index m = 0;
        for (auto& b : gi.motion_coeffs) {
            b = dcoeffs.col(i).segment<3>(m);
            m += 3;
        }
        for (auto& c : gi.rot_coeffs) {
            c = dcoeffs.col(i).segment<4>(m);
            m += 4;
        }
        gi.appearance_feat = dinput.col(i).segment(pos_dim + mw + vdim, fw);
    }
    return out;
}

Vec3 color_forward(const SpacetimeGaussian& g, const PosedGaussian& posed, const Pose& pose,
                   const Vec3& view_dir, const ColorMLP& mlp) {
    const ColorCache cache = mlp.forward_directions(std::span(&g, 1), std::span(&posed.position, 1),
                                                    pose, std::span(&view_dir, 1));
    return cache.colors.col(0);
}

}  // namespace stga
