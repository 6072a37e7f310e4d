#pragma once

#include "stga/flowdens.hpp"
#include "stga/gaussian.hpp"
#include "stga/image.hpp"

#include <array>
#include <span>
#include <vector>

namespace stga {

struct LossBreakdown {
    double rgb = 0.0;
    double flow = 0.0;
    double temp = 0.0;
    double reg = 0.0;
    std::array<double, 3> lambda{0.0, 0.0, 0.0};
    double total = 0.0;

    void assemble() { total = rgb + lambda[0] * flow + lambda[1] * temp + lambda[2] * reg; }
};

/// (1 - lambda_ssim) mean|r - g| + lambda_ssim (1 - SSIM(r, g)). When `grad`
/// is given it receives dL/d(render).
double loss_rgb(const Image& render, const Image& gt, double lambda_ssim, Image* grad = nullptr);

/// sum_i w_i |v_i - f_i|_1 / sum_i w_i; zero when all weights vanish. When
/// `grad` is given it receives dL/dv_i.
double loss_flow(std::span<const Vec2> velocity, std::span<const Vec2> flow,
                 std::span<const double> weights, std::vector<Vec2>* grad = nullptr);

/// Mean absolute difference (over channels and pixels outside `moving`) of two
/// consecutive renders; zero if every pixel is moving. `grad` (w.r.t. `render`)
/// treats the previous render as a constant.
double loss_temp(const Image& render, const Image& previous, const Mask& moving, Image* grad = nullptr);

/// mean sigmoid(opacity logit) + mean over splats of sum_k k^2 |b_k|^2 + sum_k k^2 |c_k|^2,
/// with b indexed from 1 and c from 0. `grads` (same size) are accumulated into with `scale`.
double loss_reg(std::span<const SpacetimeGaussian> gaussians,
                std::span<SpacetimeGaussian> grads = {}, double scale = 1.0);

/// lambda_i = r_i ema_rgb / ema_i clamped to [1e-4, 10]; EMAs floored at 1e-8.
[[nodiscard]] std::array<double, 3> adaptive_weights(double ema_rgb, const std::array<double, 3>& ema,
                                                     const std::array<double, 3>& ratios);

}  // namespace stga
