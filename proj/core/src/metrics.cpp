#include "stga/metrics.hpp"

#include <array>
#include <cmath>

namespace stga {

namespace {

constexpr int kRadius = 5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kRadius + 1> gaussian_kernel() {
    std::array<double, 2 * kRadius + 1> k{};
    double sum = 0.0;
    for (int i = -kRadius; i <= kRadius; ++i) {
        k[i + kRadius] = std::exp(-(i * i) / (2.0 * 1.5 * 1.5));
        sum += k[i + kRadius];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable zero-padded filtering of one H x W plane (symmetric kernel, so
// self-adjoint). Window statistics divide by the in-image kernel mass.
std::vector<double> blur(const std::vector<double>& in, int h, int w) {
    static const auto k = gaussian_kernel();
    std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -kRadius; d <= kRadius; ++d) {
                const int xx = x + d;
                if (xx >= 0 && xx < w) s += k[d + kRadius] * in[static_cast<std::size_t>(y) * w + xx];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int d = -kRadius; d <= kRadius; ++d) {
                const int yy = y + d;
                if (yy >= 0 && yy < h) s += k[d + kRadius] * tmp[static_cast<std::size_t>(yy) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    return out;
}

std::vector<double> window_mean(const std::vector<double>& in, const std::vector<double>& mass, int h, int w) {
    std::vector<double> out = blur(in, h, w);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= mass[i];
    return out;
}

std::vector<double> plane(const Image& img, int ch) {
    std::vector<double> p(img.pixel_count());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = img.data[i * img.channels + ch];
    return p;
}

void check_shapes(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) throw ArgumentError(std::string(what) + ": image shapes differ");
    if (a.pixel_count() == 0) throw ArgumentError(std::string(what) + ": empty image");
}

SsimGrad ssim_impl(const Image& a, const Image& b, bool want_grad) {
    check_shapes(a, b, "ssim");
    const int h = a.height, w = a.width;
    const std::size_t n = a.pixel_count();
    const double count = static_cast<double>(n) * a.channels;
    SsimGrad res;
    if (want_grad) res.grad = Image(h, w, a.channels);
    const std::vector<double> mass = blur(std::vector<double>(n, 1.0), h, w);
    double total = 0.0;
    for (int ch = 0; ch < a.channels; ++ch) {
        const std::vector<double> pa = plane(a, ch), pb = plane(b, ch);
        std::vector<double> aa(n), bb(n), ab(n);
        for (std::size_t i = 0; i < n; ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const auto mu_a = window_mean(pa, mass, h, w), mu_b = window_mean(pb, mass, h, w);
        const auto e_aa = window_mean(aa, mass, h, w), e_bb = window_mean(bb, mass, h, w);
        const auto e_ab = window_mean(ab, mass, h, w);
        std::vector<double> d_mu(n), d_eaa(n), d_eab(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double a1 = 2.0 * ma * mb + kC1;
            const double a2 = 2.0 * (e_ab[i] - ma * mb) + kC2;
            const double b1 = ma * ma + mb * mb + kC1;
            const double b2 = (e_aa[i] - ma * ma) + (e_bb[i] - mb * mb) + kC2;
            const double s = a1 * a2 / (b1 * b2);
            total += s;
            if (want_grad) {
                d_mu[i] = s * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2) / count;
                d_eaa[i] = -s / b2 / count;
                d_eab[i] = 2.0 * s / a2 / count;
            }
        }
        if (want_grad) {
            for (std::size_t i = 0; i < n; ++i) {
                d_mu[i] /= mass[i];
                d_eaa[i] /= mass[i];
                d_eab[i] /= mass[i];
            }
            const auto g_mu = blur(d_mu, h, w), g_aa = blur(d_eaa, h, w), g_ab = blur(d_eab, h, w);
            for (std::size_t i = 0; i < n; ++i) {
                res.grad.data[i * a.channels + ch] = g_mu[i] + 2.0 * pa[i] * g_aa[i] + pb[i] * g_ab[i];
            }
        }
    }
    res.value = total / count;
    return res;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
    check_shapes(a, b, "psnr");
    double se = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(a.data.size());
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) { return ssim_impl(a, b, false).value; }

SsimGrad ssim_with_grad(const Image& a, const Image& b) { return ssim_impl(a, b, true); }

}  // namespace stga
