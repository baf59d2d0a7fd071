#pragma once

#include <cstdint>
#include <vector>

#include "rgbdvos/errors.hpp"
#include "rgbdvos/tensor.hpp"

namespace rgbdvos {

// Interleaved 8-bit RGB raster.
struct ImageRgb8 {
    int width = 0, height = 0;
    std::vector<std::uint8_t> px;  // size 3*H*W, row-major, r g b

    ImageRgb8() = default;
    ImageRgb8(int w, int h) : width(w), height(h), px(static_cast<std::size_t>(3 * w * h), 0) {}

    std::uint8_t& at(int x, int y, int ch) {
        return px[static_cast<std::size_t>(3 * (y * width + x) + ch)];
    }
    std::uint8_t at(int x, int y, int ch) const {
        return px[static_cast<std::size_t>(3 * (y * width + x) + ch)];
    }
};

// 16-bit depth raster, integer millimeters, 0 = missing.
struct DepthU16 {
    int width = 0, height = 0;
    std::vector<std::uint16_t> px;

    DepthU16() = default;
    DepthU16(int w, int h) : width(w), height(h), px(static_cast<std::size_t>(w * h), 0) {}

    std::uint16_t& at(int x, int y) { return px[static_cast<std::size_t>(y * width + x)]; }
    std::uint16_t at(int x, int y) const { return px[static_cast<std::size_t>(y * width + x)]; }
};

// 8-bit label raster: 0 = background, k = object k.
struct LabelRaster {
    int width = 0, height = 0;
    std::vector<std::uint8_t> px;

    LabelRaster() = default;
    LabelRaster(int w, int h) : width(w), height(h), px(static_cast<std::size_t>(w * h), 0) {}

    std::uint8_t& at(int x, int y) { return px[static_cast<std::size_t>(y * width + x)]; }
    std::uint8_t at(int x, int y) const { return px[static_cast<std::size_t>(y * width + x)]; }

    int max_label() const {
        int m = 0;
        for (auto v : px) m = std::max(m, static_cast<int>(v));
        return m;
    }
};

// RGB raster as a {3,H,W} tensor scaled to [0,1].
inline Tensor rgb_to_tensor(const ImageRgb8& img) {
    Tensor t({3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) t.at(c, y, x) = img.at(x, y, c) / 255.0;
    return t;
}

// Zero-pads an RGB image on the right/bottom to a multiple of `m`.
inline ImageRgb8 pad_to_multiple(const ImageRgb8& img, int m) {
    int W = (img.width + m - 1) / m * m;
    int H = (img.height + m - 1) / m * m;
    if (W == img.width && H == img.height) return img;
    ImageRgb8 out(W, H);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, c);
    return out;
}

inline DepthU16 pad_to_multiple(const DepthU16& img, int m) {
    int W = (img.width + m - 1) / m * m;
    int H = (img.height + m - 1) / m * m;
    if (W == img.width && H == img.height) return img;
    DepthU16 out(W, H);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(x, y);
    return out;
}

inline LabelRaster pad_to_multiple(const LabelRaster& img, int m) {
    int W = (img.width + m - 1) / m * m;
    int H = (img.height + m - 1) / m * m;
    if (W == img.width && H == img.height) return img;
    LabelRaster out(W, H);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(x, y);
    return out;
}

}  // namespace rgbdvos
