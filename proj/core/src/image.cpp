#include "stga/image.hpp"

#include "stga/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include <png.h>

namespace stga {

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.channels != 1 && img.channels != 3 && img.channels != 4) {
        throw ArgumentError("write_png: unsupported channel count " + std::to_string(img.channels));
    }
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw DataError("cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng initialisation failed for " + path.string());
    }
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    const int color_type = img.channels == 1   ? PNG_COLOR_TYPE_GRAY
                           : img.channels == 3 ? PNG_COLOR_TYPE_RGB
                                               : PNG_COLOR_TYPE_RGBA;
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // Fixed compression keeps the file bytes reproducible.
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width * img.channels; ++x) {
            const double v = std::clamp(img.data[static_cast<std::size_t>(y) * img.width * img.channels + x], 0.0, 1.0);
            row[x] = static_cast<png_byte>(std::lround(v * 255.0));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_imgf(const std::filesystem::path& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write("IMGF", 4);
    binio::write(os, static_cast<std::uint32_t>(img.height));
    binio::write(os, static_cast<std::uint32_t>(img.width));
    binio::write(os, static_cast<std::uint32_t>(img.channels));
    for (double v : img.data) binio::write_f32(os, v);
    if (!os) throw DataError("write failed for " + path.string());
}

Image read_imgf(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    char magic[4];
    std::uint32_t h = 0, w = 0, c = 0;
    if (!is.read(magic, 4) || std::string(magic, 4) != "IMGF") {
        throw DataError(path.string() + ": bad IMGF magic");
    }
    if (!binio::read(is, h) || !binio::read(is, w) || !binio::read(is, c)) {
        throw DataError(path.string() + ": truncated IMGF header");
    }
    if (h > 65536 || w > 65536 || c == 0 || c > 16) {
        throw DataError(path.string() + ": implausible IMGF dimensions");
    }
    Image img(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (double& v : img.data) {
        if (!binio::read_f32(is, v)) throw DataError(path.string() + ": truncated IMGF payload");
    }
    return img;
}

}  // namespace stga
