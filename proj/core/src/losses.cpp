#include "stga/losses.hpp"

#include "stga/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace stga {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double loss_rgb(const Image& render, const Image& gt, double lambda_ssim, Image* grad) {
    if (!render.same_shape(gt)) throw ArgumentError("loss_rgb: image shapes differ");
    const double n = static_cast<double>(render.data.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < render.data.size(); ++i) l1 += std::abs(render.data[i] - gt.data[i]);
    l1 /= n;
    double loss = (1.0 - lambda_ssim) * l1;
    if (grad) {
        *grad = Image(render.height, render.width, render.channels);
        for (std::size_t i = 0; i < render.data.size(); ++i) {
            grad->data[i] = (1.0 - lambda_ssim) * sign(render.data[i] - gt.data[i]) / n;
        }
    }
    if (lambda_ssim != 0.0) {
        if (grad) {
            const SsimGrad s = ssim_with_grad(render, gt);
            loss += lambda_ssim * (1.0 - s.value);
            for (std::size_t i = 0; i < grad->data.size(); ++i) grad->data[i] -= lambda_ssim * s.grad.data[i];
        } else {
            loss += lambda_ssim * (1.0 - ssim(render, gt));
        }
    }
    return loss;
}

double loss_flow(std::span<const Vec2> velocity, std::span<const Vec2> flow,
                 std::span<const double> weights, std::vector<Vec2>* grad) {
    if (velocity.size() != flow.size() || velocity.size() != weights.size()) {
        throw ArgumentError("loss_flow: size mismatch");
    }
    double wsum = 0.0, acc = 0.0;
    for (std::size_t i = 0; i < velocity.size(); ++i) {
        wsum += weights[i];
        acc += weights[i] * (velocity[i] - flow[i]).cwiseAbs().sum();
    }
    if (grad) grad->assign(velocity.size(), Vec2::Zero());
    if (!(wsum > 0.0)) return 0.0;
    if (grad) {
        for (std::size_t i = 0; i < velocity.size(); ++i) {
            const Vec2 d = velocity[i] - flow[i];
            (*grad)[i] = Vec2(sign(d.x()), sign(d.y())) * (weights[i] / wsum);
        }
    }
    return acc / wsum;
}

double loss_temp(const Image& render, const Image& previous, const Mask& moving, Image* grad) {
    if (!render.same_shape(previous) || moving.height != render.height || moving.width != render.width) {
        throw ArgumentError("loss_temp: shape mismatch");
    }
    if (grad) *grad = Image(render.height, render.width, render.channels);
    const std::size_t still = render.pixel_count() - moving.count();
    if (still == 0) return 0.0;
    const double norm = static_cast<double>(still) * render.channels;
    double acc = 0.0;
    for (int y = 0; y < render.height; ++y) {
        for (int x = 0; x < render.width; ++x) {
            if (moving.at(y, x)) continue;
            for (int c = 0; c < render.channels; ++c) {
                const double d = render.at(y, x, c) - previous.at(y, x, c);
                acc += std::abs(d);
                if (grad) grad->at(y, x, c) = sign(d) / norm;
            }
        }
    }
    return acc / norm;
}

double loss_reg(std::span<const SpacetimeGaussian> gaussians, std::span<SpacetimeGaussian> grads,
                double scale) {
    if (gaussians.empty()) return 0.0;
    if (!grads.empty() && grads.size() != gaussians.size()) throw ArgumentError("loss_reg: gradient size mismatch");
    const double n = static_cast<double>(gaussians.size());
    double opacity = 0.0, smooth = 0.0;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const SpacetimeGaussian& g = gaussians[i];
        const double s = sigmoid(g.base_opacity);
        opacity += s;
        for (std::size_t k = 0; k < g.motion_coeffs.size(); ++k) {
            const double kk = static_cast<double>((k + 1) * (k + 1));
            smooth += kk * g.motion_coeffs[k].squaredNorm();
        }
        for (std::size_t k = 1; k < g.rot_coeffs.size(); ++k) {
            smooth += static_cast<double>(k * k) * g.rot_coeffs[k].squaredNorm();
        }
        if (!grads.empty()) {
            SpacetimeGaussian& d = grads[i];
            d.base_opacity += scale * s * (1.0 - s) / n;
            for (std::size_t k = 0; k < g.motion_coeffs.size(); ++k) {
                d.motion_coeffs[k] += scale * 2.0 * static_cast<double>((k + 1) * (k + 1)) * g.motion_coeffs[k] / n;
            }
            for (std::size_t k = 1; k < g.rot_coeffs.size(); ++k) {
                d.rot_coeffs[k] += scale * 2.0 * static_cast<double>(k * k) * g.rot_coeffs[k] / n;
            }
        }
    }
    return opacity / n + smooth / n;
}

std::array<double, 3> adaptive_weights(double ema_rgb, const std::array<double, 3>& ema,
                                       const std::array<double, 3>& ratios) {
    std::array<double, 3> lambda{};
    const double rgb = std::max(ema_rgb, 1e-8);
    for (int i = 0; i < 3; ++i) {
        lambda[i] = std::clamp(ratios[i] * rgb / std::max(ema[i], 1e-8), 1e-4, 10.0);
    }
    return lambda;
}

}  // namespace stga
