#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "rgbdvos/errors.hpp"
#include "rgbdvos/image.hpp"

namespace rgbdvos {
namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

}  // namespace detail

// Decoded PNG with its raw sample layout preserved (16-bit stays 16-bit,
// palette stays indexed).
struct PngImage {
    int width = 0, height = 0;
    int channels = 0;   // samples per pixel after normalization below
    int bit_depth = 0;  // 8 or 16
    bool indexed = false;
    std::vector<std::uint16_t> samples;  // channels*W*H, 8-bit data widened
};

inline PngImage read_png(const std::filesystem::path& path) {
    auto file = detail::open_file(path, "rb");
    detail::PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw IoError("png_create_read_struct failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw IoError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(r.png))) throw IoError("failed to decode " + path.string());

    png_init_io(r.png, file.get());
    png_read_info(r.png, r.info);

    png_uint_32 w, h;
    int bit_depth, color_type;
    png_get_IHDR(r.png, r.info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);

    PngImage out;
    out.width = static_cast<int>(w);
    out.height = static_cast<int>(h);
    out.indexed = (color_type == PNG_COLOR_TYPE_PALETTE);

    if (out.indexed) {
        // Keep palette indices as labels.
        if (bit_depth < 8) png_set_packing(r.png);
        out.bit_depth = 8;
        out.channels = 1;
    } else {
        if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
        if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(r.png);
        out.bit_depth = bit_depth == 16 ? 16 : 8;
        out.channels = (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) ? 1 : 3;
    }
    png_read_update_info(r.png, r.info);

    std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
    std::vector<std::uint8_t> raw(rowbytes * out.height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[static_cast<std::size_t>(y)] = raw.data() + rowbytes * y;
    png_read_image(r.png, rows.data());
    png_read_end(r.png, nullptr);

    out.samples.resize(static_cast<std::size_t>(out.channels) * out.width * out.height);
    for (int y = 0; y < out.height; ++y) {
        const std::uint8_t* row = raw.data() + rowbytes * y;
        for (int i = 0; i < out.width * out.channels; ++i) {
            std::size_t dst = static_cast<std::size_t>(y) * out.width * out.channels + i;
            if (out.bit_depth == 16) {
                out.samples[dst] = static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
            } else {
                out.samples[dst] = row[i];
            }
        }
    }
    return out;
}

inline ImageRgb8 read_rgb8(const std::filesystem::path& path) {
    PngImage p = read_png(path);
    if (p.indexed) throw IoError("expected RGB png, got indexed: " + path.string());
    ImageRgb8 out(p.width, p.height);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x)
            for (int c = 0; c < 3; ++c) {
                std::uint16_t v = p.samples[(static_cast<std::size_t>(y) * p.width + x) * p.channels +
                                            (p.channels == 3 ? c : 0)];
                out.at(x, y, c) = static_cast<std::uint8_t>(p.bit_depth == 16 ? v >> 8 : v);
            }
    return out;
}

inline DepthU16 read_depth16(const std::filesystem::path& path) {
    PngImage p = read_png(path);
    if (p.channels != 1 || p.indexed)
        throw IoError("expected 16-bit grayscale png: " + path.string());
    DepthU16 out(p.width, p.height);
    for (int i = 0; i < p.width * p.height; ++i)
        out.px[static_cast<std::size_t>(i)] = p.samples[static_cast<std::size_t>(i)];
    return out;
}

// Accepts indexed or grayscale rasters; the sample value is the label.
inline LabelRaster read_labels(const std::filesystem::path& path) {
    PngImage p = read_png(path);
    if (p.channels != 1) throw IoError("expected indexed/gray label png: " + path.string());
    LabelRaster out(p.width, p.height);
    for (int i = 0; i < p.width * p.height; ++i) {
        std::uint16_t v = p.samples[static_cast<std::size_t>(i)];
        out.px[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(p.bit_depth == 16 ? v >> 8 : v);
    }
    return out;
}

inline void write_rgb8(const std::filesystem::path& path, const ImageRgb8& img) {
    auto file = detail::open_file(path, "wb");
    detail::PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw IoError("png_create_write_struct failed");
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw IoError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(w.png))) throw IoError("failed to encode " + path.string());

    png_init_io(w.png, file.get());
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(w.png, const_cast<png_bytep>(img.px.data() + static_cast<std::size_t>(3) * img.width * y));
    png_write_end(w.png, nullptr);
}

inline void write_depth16(const std::filesystem::path& path, const DepthU16& img) {
    auto file = detail::open_file(path, "wb");
    detail::PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw IoError("png_create_write_struct failed");
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw IoError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(w.png))) throw IoError("failed to encode " + path.string());

    png_init_io(w.png, file.get());
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    std::vector<std::uint8_t> row(static_cast<std::size_t>(2) * img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            std::uint16_t v = img.at(x, y);
            row[static_cast<std::size_t>(2 * x)] = static_cast<std::uint8_t>(v >> 8);
            row[static_cast<std::size_t>(2 * x + 1)] = static_cast<std::uint8_t>(v & 0xff);
        }
        png_write_row(w.png, row.data());
    }
    png_write_end(w.png, nullptr);
}

// Fixed distinguishable palette for label rasters: label 0 black, others from
// a bit-reversal color table (DAVIS-style).
inline std::vector<std::uint8_t> label_palette() {
    std::vector<std::uint8_t> pal(256 * 3, 0);
    for (int i = 1; i < 256; ++i) {
        int r = 0, g = 0, b = 0, id = i;
        for (int bit = 7; bit >= 0 && id; --bit) {
            r |= ((id >> 0) & 1) << bit;
            g |= ((id >> 1) & 1) << bit;
            b |= ((id >> 2) & 1) << bit;
            id >>= 3;
        }
        pal[static_cast<std::size_t>(3 * i)] = static_cast<std::uint8_t>(r);
        pal[static_cast<std::size_t>(3 * i + 1)] = static_cast<std::uint8_t>(g);
        pal[static_cast<std::size_t>(3 * i + 2)] = static_cast<std::uint8_t>(b);
    }
    return pal;
}

inline void write_labels(const std::filesystem::path& path, const LabelRaster& img) {
    auto file = detail::open_file(path, "wb");
    detail::PngWriter w;
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!w.png) throw IoError("png_create_write_struct failed");
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw IoError("png_create_info_struct failed");
    if (setjmp(png_jmpbuf(w.png))) throw IoError("failed to encode " + path.string());

    png_init_io(w.png, file.get());
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_PALETTE,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    static const std::vector<std::uint8_t> pal = label_palette();
    std::vector<png_color> colors(256);
    for (int i = 0; i < 256; ++i)
        colors[static_cast<std::size_t>(i)] = {pal[static_cast<std::size_t>(3 * i)],
                                               pal[static_cast<std::size_t>(3 * i + 1)],
                                               pal[static_cast<std::size_t>(3 * i + 2)]};
    png_set_PLTE(w.png, w.info, colors.data(), 256);
    png_write_info(w.png, w.info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(w.png, const_cast<png_bytep>(img.px.data() + static_cast<std::size_t>(img.width) * y));
    png_write_end(w.png, nullptr);
}

}  // namespace rgbdvos
