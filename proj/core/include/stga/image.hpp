#pragma once

#include "stga/types.hpp"

#include <cstddef>
#include <filesystem>
#include <vector>

namespace stga {

/// Row-major interleaved float image (H, W, C).
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    [[nodiscard]] std::size_t index(int y, int x, int ch = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + ch;
    }
    double& at(int y, int x, int ch = 0) { return data[index(y, x, ch)]; }
    [[nodiscard]] double at(int y, int x, int ch = 0) const { return data[index(y, x, ch)]; }
    [[nodiscard]] std::size_t pixel_count() const {
        return static_cast<std::size_t>(height) * width;
    }
    [[nodiscard]] bool same_shape(const Image& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    [[nodiscard]] Vec3 rgb(int y, int x) const {
        return Vec3(at(y, x, 0), at(y, x, 1), at(y, x, 2));
    }
    void set_rgb(int y, int x, const Vec3& c) {
        at(y, x, 0) = c[0];
        at(y, x, 1) = c[1];
        at(y, x, 2) = c[2];
    }
};

/// 8-bit PNG (values clamped to [0,1] and rounded). Throws DataError on I/O failure.
void write_png(const std::filesystem::path& path, const Image& img);

/// Raw float32 little-endian image: 16-byte header ["IMGF", u32 H, u32 W, u32 C]
/// followed by H*W*C floats.
void write_imgf(const std::filesystem::path& path, const Image& img);
[[nodiscard]] Image read_imgf(const std::filesystem::path& path);

}  // namespace stga
