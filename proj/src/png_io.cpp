// Grayscale PNG read/write via libpng, 8- or 16-bit.

#include "eml/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

namespace eml::io {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

Grid load_map_image(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw IoFailure("cannot open " + path.string());

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw UnsupportedFormat(path.string() + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoFailure("libpng init failed");
    }
    std::vector<png_byte> raw;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoFailure("libpng failed reading " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (color_type != PNG_COLOR_TYPE_GRAY || (bit_depth != 8 && bit_depth != 16)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw UnsupportedFormat(path.string() + " must be 8- or 16-bit grayscale");
    }
    if (bit_depth == 16) png_set_swap(png); // PNG stores big-endian

    const std::size_t rowbytes = std::size_t(w) * (bit_depth / 8);
    raw.resize(rowbytes * h);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Grid g(int(w), int(h));
    if (bit_depth == 8) {
        for (std::size_t i = 0; i < g.size(); ++i)
            g.values()[i] = double(raw[i]) / 255.0;
    } else {
        const auto* px = reinterpret_cast<const std::uint16_t*>(raw.data());
        for (std::size_t i = 0; i < g.size(); ++i)
            g.values()[i] = double(px[i]) / 65535.0;
    }
    return g;
}

void save_map_image(const Grid& map, const std::filesystem::path& path, int bit_depth) {
    if (bit_depth != 8 && bit_depth != 16)
        throw UnsupportedFormat("bit depth must be 8 or 16");
    for (double v : map.values()) {
        if (!std::isfinite(v))
            throw DegenerateInput("cannot save a map with non-finite values");
    }

    const auto [mn_it, mx_it] = std::minmax_element(map.values().begin(), map.values().end());
    const double mn = *mn_it, mx = *mx_it;
    const double scale = mx > mn ? 1.0 / (mx - mn) : 0.0;
    const double maxval = bit_depth == 8 ? 255.0 : 65535.0;

    std::vector<png_byte> raw;
    if (bit_depth == 8) {
        raw.resize(map.size());
        for (std::size_t i = 0; i < map.size(); ++i)
            raw[i] = png_byte(std::lround((map.values()[i] - mn) * scale * maxval));
    } else {
        raw.resize(map.size() * 2);
        auto* px = reinterpret_cast<std::uint16_t*>(raw.data());
        for (std::size_t i = 0; i < map.size(); ++i)
            px[i] = std::uint16_t(std::lround((map.values()[i] - mn) * scale * maxval));
    }

    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw IoFailure("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoFailure("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoFailure("libpng failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, png_uint_32(map.width()), png_uint_32(map.height()),
                 bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);

    const std::size_t rowbytes = std::size_t(map.width()) * (bit_depth / 8);
    std::vector<png_bytep> rows(map.height());
    for (int y = 0; y < map.height(); ++y) rows[y] = raw.data() + std::size_t(y) * rowbytes;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace eml::io
