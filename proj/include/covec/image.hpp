#pragma once

#include <cstdint>
#include <vector>

#include "covec/common.hpp"

namespace covec {

// 8-bit raster image, row-major with interleaved channels. Dimensions are
// constrained to multiples of 8 so every codec and the patch embedder can
// tile it exactly.
struct RawImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 1;
    std::vector<std::uint8_t> pixels;

    static RawImage create(std::uint32_t w, std::uint32_t h, std::uint32_t c, std::uint8_t fill = 0) {
        RawImage img;
        img.width = w;
        img.height = h;
        img.channels = c;
        img.pixels.assign(static_cast<std::size_t>(w) * h * c, fill);
        img.validate();
        return img;
    }

    void validate() const {
        if (width == 0 || height == 0) throw ShapeError("image: zero dimension");
        if (width % 8 != 0 || height % 8 != 0)
            throw ShapeError("image: dimensions must be multiples of 8, got " + std::to_string(width) +
                             "x" + std::to_string(height));
        if (channels != 1 && channels != 3) throw ShapeError("image: channels must be 1 or 3");
        if (pixels.size() != static_cast<std::size_t>(width) * height * channels)
            throw ShapeError("image: pixel buffer size does not match dimensions");
    }

    std::uint8_t& at(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    std::uint8_t at(std::uint32_t x, std::uint32_t y, std::uint32_t c = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    bool same_dims(const RawImage& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    bool operator==(const RawImage& o) const {
        return same_dims(o) && pixels == o.pixels;
    }
};

inline std::uint8_t clamp_u8(double v) {
    if (v <= 0.0) return 0;
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(v + 0.5);
}

}  // namespace covec
