#pragma once

#include "stga/image.hpp"

namespace stga {

struct Metrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / mse) over all channels, capped at 99 dB.
[[nodiscard]] double psnr(const Image& a, const Image& b);

/// Mean SSIM: 11x11 Gaussian window (sigma 1.5) truncated and renormalized at the border,
/// C1 = 0.01^2, C2 = 0.03^2, per channel then averaged.
[[nodiscard]] double ssim(const Image& a, const Image& b);

/// SSIM and its gradient with respect to `a`.
struct SsimGrad {
    double value = 0.0;
    Image grad;
};
[[nodiscard]] SsimGrad ssim_with_grad(const Image& a, const Image& b);

[[nodiscard]] inline Metrics evaluate(const Image& rendered, const Image& reference) {
    return Metrics{psnr(rendered, reference), ssim(rendered, reference)};
}

}  // namespace stga
