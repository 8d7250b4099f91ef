#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "covec/image.hpp"

namespace covec {

namespace detail {

inline void be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t read_be32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void png_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::vector<std::uint8_t>& body) {
    be32(out, static_cast<std::uint32_t>(body.size()));
    std::vector<std::uint8_t> crc_input(type, type + 4);
    crc_input.insert(crc_input.end(), body.begin(), body.end());
    out.insert(out.end(), crc_input.begin(), crc_input.end());
    const auto crc = static_cast<std::uint32_t>(
        crc32(0, crc_input.data(), static_cast<uInt>(crc_input.size())));
    be32(out, crc);
}

inline int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

// Writes an 8-bit grayscale or RGB PNG, non-interlaced, filter 0 scanlines.
inline void png_write(const RawImage& img, const std::string& path) {
    img.validate();
    const std::size_t bpp = img.channels;
    std::vector<std::uint8_t> raw;
    raw.reserve((static_cast<std::size_t>(img.width) * bpp + 1) * img.height);
    for (std::uint32_t y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter type none
        const std::uint8_t* row = img.pixels.data() + static_cast<std::size_t>(y) * img.width * bpp;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(img.width) * bpp);
    }
    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_size);
    if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw IoError("png: deflate failed");
    comp.resize(comp_size);

    std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<std::uint8_t> ihdr;
    detail::be32(ihdr, img.width);
    detail::be32(ihdr, img.height);
    ihdr.push_back(8);                                     // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);             // gray / truecolor
    ihdr.push_back(0);                                     // compression
    ihdr.push_back(0);                                     // filter method
    ihdr.push_back(0);                                     // no interlace
    detail::png_chunk(out, "IHDR", ihdr);
    detail::png_chunk(out, "IDAT", comp);
    detail::png_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("png: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("png: write failed: " + path);
}

// Reads an 8-bit grayscale or RGB PNG (no interlace, no palette). All five
// scanline filters are handled; chunk CRCs are verified.
inline RawImage png_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("png: cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw IoError("png: bad signature: " + path);

    std::uint32_t width = 0, height = 0, channels = 0;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool saw_ihdr = false, saw_iend = false;
    while (pos + 12 <= bytes.size() && !saw_iend) {
        const std::uint32_t len = detail::read_be32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw IoError("png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* body = bytes.data() + pos + 8;
        const std::uint32_t stored_crc = detail::read_be32(body + len);
        const auto computed_crc = static_cast<std::uint32_t>(
            crc32(0, bytes.data() + pos + 4, static_cast<uInt>(len + 4)));
        if (stored_crc != computed_crc) throw IoError("png: chunk CRC mismatch");

        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("png: bad IHDR");
            width = detail::read_be32(body);
            height = detail::read_be32(body + 4);
            const int depth = body[8], color = body[9], interlace = body[12];
            if (depth != 8) throw IoError("png: only 8-bit depth supported");
            if (interlace != 0) throw IoError("png: interlaced images not supported");
            if (color == 0) channels = 1;
            else if (color == 2) channels = 3;
            else throw IoError("png: only grayscale and RGB color types supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), body, body + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            saw_iend = true;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || !saw_iend || idat.empty()) throw IoError("png: missing required chunks");

    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    std::vector<std::uint8_t> raw((stride + 1) * height);
    uLongf raw_size = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_size != raw.size())
        throw IoError("png: inflate failed");

    RawImage img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.pixels.assign(stride * height, 0);
    const std::size_t pixel_bytes = channels;
    for (std::uint32_t y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
        std::uint8_t* dst = img.pixels.data() + static_cast<std::size_t>(y) * stride;
        const std::uint8_t* up = y ? dst - stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= pixel_bytes ? dst[i - pixel_bytes] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= pixel_bytes) ? up[i - pixel_bytes] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw IoError("png: unknown scanline filter");
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    img.validate();
    return img;
}

}  // namespace covec
