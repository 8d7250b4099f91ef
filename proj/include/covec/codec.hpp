#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "covec/bitio.hpp"
#include "covec/dct.hpp"
#include "covec/image.hpp"

namespace covec {

enum class CodecId : std::uint8_t { blocky = 0, latentq = 1, texgen = 2 };

inline constexpr int kCodecCount = 3;
inline constexpr int kLevelCount = 4;  // level 0 = lowest bitrate
inline constexpr int kConditionCount = kCodecCount * kLevelCount;

inline const char* codec_name(CodecId id) {
    switch (id) {
        case CodecId::blocky: return "blocky";
        case CodecId::latentq: return "latentq";
        case CodecId::texgen: return "texgen";
    }
    return "?";
}

inline CodecId codec_from_name(const std::string& name) {
    if (name == "blocky" || name == "0") return CodecId::blocky;
    if (name == "latentq" || name == "1") return CodecId::latentq;
    if (name == "texgen" || name == "2") return CodecId::texgen;
    throw ConfigError("unknown codec: " + name);
}

// (codec, level) pair identifying which compressor produced an input, or the
// reserved identity condition for uncompressed inputs.
struct CodecCondition {
    int codec = -1;
    int level = -1;

    static CodecCondition identity() { return CodecCondition{}; }

    static CodecCondition make(int codec, int level) {
        if (codec < 0 || codec >= kCodecCount)
            throw ConfigError("codec condition: codec index " + std::to_string(codec) + " out of range");
        if (level < 0 || level >= kLevelCount)
            throw ConfigError("codec condition: level index " + std::to_string(level) + " out of range");
        return CodecCondition{codec, level};
    }

    bool is_identity() const { return codec < 0; }

    // Slot in the m*n one-hot layout: codec * n + level.
    int onehot_index() const {
        if (is_identity()) throw ConfigError("codec condition: identity has no one-hot slot");
        return codec * kLevelCount + level;
    }

    bool operator==(const CodecCondition&) const = default;
};

struct CompressedArtifact {
    CodecId codec_id = CodecId::blocky;
    int level = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 1;
    std::vector<std::uint8_t> payload;  // entropy-coded body, header excluded
    std::uint64_t bit_count = 0;        // total stored bits: header + payload

    double bpp() const {
        return static_cast<double>(bit_count) / (static_cast<double>(width) * height);
    }

    CodecCondition condition() const { return CodecCondition::make(static_cast<int>(codec_id), level); }
};

inline constexpr std::size_t kArtifactHeaderBytes = 16;

namespace detail {

// Base quantization table (JPEG luminance layout); scaled per level.
inline const std::array<int, 64>& blocky_quant_base() {
    static const std::array<int, 64> q = {
        16, 11, 10, 16, 24,  40,  51,  61,   //
        12, 12, 14, 19, 26,  58,  60,  55,   //
        14, 13, 16, 24, 40,  57,  69,  56,   //
        14, 17, 22, 29, 51,  87,  80,  62,   //
        18, 22, 37, 56, 68,  109, 103, 77,   //
        24, 35, 55, 64, 81,  104, 113, 92,   //
        49, 64, 78, 87, 103, 121, 120, 101,  //
        72, 92, 95, 98, 112, 100, 103, 99};
    return q;
}

// Level schedules, calibrated once on the standard synthetic corpus so the
// lowest level lands under 0.1 bpp and the highest near 0.3 bpp.
inline constexpr double kBlockyScale[kLevelCount] = {96.0, 32.0, 18.0, 13.0};
inline constexpr double kBlockyTableMax = 512.0;
// The latent is quantized once at the finest step; coarser levels carry the
// same indices halved kLatentqShift[l] times. Nested indices make per-symbol
// code lengths non-decreasing in level, so bit counts are monotone by
// construction.
inline constexpr double kLatentqFineStep = 9.0;
inline constexpr int kLatentqShift[kLevelCount] = {3, 2, 1, 0};
// Texgen block means use the same nested-index scheme as the latent codec.
inline constexpr double kTexgenMeanFineStep = 1.0;
inline constexpr int kTexgenMeanShift[kLevelCount] = {6, 4, 3, 0};
// Synthesized detail fades as the level rises: strong hallucinated texture
// at the lowest bitrate, subtle at the highest.
inline constexpr double kTexgenAmplitude[kLevelCount] = {6.0, 4.0, 3.0, 2.0};
inline constexpr double kTexgenNoise[kLevelCount] = {3.0, 2.0, 2.0, 2.0};
inline constexpr int kTexgenOrientBits[kLevelCount] = {2, 3, 4, 6};

// Round-half-to-even halving; nesting step for latent indices. The map is
// nondecreasing with unit increments, so index differences never grow when
// a level is halved.
inline std::int64_t halve_even(std::int64_t q) {
    if (q % 2 == 0) return q / 2;
    const std::int64_t down = (q >= 0) ? q / 2 : q / 2 - 1;  // floor for odd q
    return (down % 2 == 0) ? down : down + 1;
}

inline std::uint64_t hash_coords(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = a * 0x9e3779b97f4a7c15ull + b * 0xc2b2ae3d27d4eb4full + c * 0x165667b19e3779f9ull;
    return splitmix64(s);
}

// Scaled quantization table entries are clamped to [1, 255] as in baseline
// JPEG, so the DC plane keeps a usable dynamic range even at the coarsest
// level.
inline std::array<double, 64> blocky_table(int level) {
    const auto& qbase = blocky_quant_base();
    std::array<double, 64> t;
    for (int i = 0; i < 64; ++i)
        t[static_cast<std::size_t>(i)] =
            std::clamp(qbase[static_cast<std::size_t>(i)] * kBlockyScale[level], 1.0, kBlockyTableMax);
    return t;
}

inline void encode_blocky(const RawImage& img, int level, BitWriter& bw) {
    const std::array<double, 64> qtab = blocky_table(level);
    const auto& zig = zigzag_order();
    for (std::uint32_t ch = 0; ch < img.channels; ++ch) {
        std::int64_t prev_dc = 0;
        for (std::uint32_t by = 0; by < img.height / 8; ++by)
            for (std::uint32_t bx = 0; bx < img.width / 8; ++bx) {
                double block[64], coeffs[64];
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        block[y * 8 + x] =
                            static_cast<double>(img.at(bx * 8 + static_cast<std::uint32_t>(x),
                                                       by * 8 + static_cast<std::uint32_t>(y), ch)) -
                            128.0;
                dct8_forward(block, coeffs);
                std::int64_t q[64];
                for (int i = 0; i < 64; ++i)
                    q[i] = std::llround(coeffs[zig[static_cast<std::size_t>(i)]] /
                                        qtab[static_cast<std::size_t>(zig[static_cast<std::size_t>(i)])]);
                bw.put_sexp(q[0] - prev_dc);
                prev_dc = q[0];
                int nnz = 0;
                for (int i = 1; i < 64; ++i) nnz += q[i] != 0;
                bw.put_uexp(static_cast<std::uint64_t>(nnz));
                int run = 0;
                for (int i = 1; i < 64; ++i) {
                    if (q[i] == 0) {
                        ++run;
                    } else {
                        bw.put_uexp(static_cast<std::uint64_t>(run));
                        bw.put_sexp(q[i]);
                        run = 0;
                    }
                }
            }
    }
}

inline RawImage decode_blocky(const CompressedArtifact& art, BitReader& br) {
    RawImage img = RawImage::create(art.width, art.height, art.channels);
    const std::array<double, 64> qtab = blocky_table(art.level);
    const auto& zig = zigzag_order();
    for (std::uint32_t ch = 0; ch < art.channels; ++ch) {
        std::int64_t prev_dc = 0;
        for (std::uint32_t by = 0; by < art.height / 8; ++by)
            for (std::uint32_t bx = 0; bx < art.width / 8; ++bx) {
                std::int64_t q[64] = {};
                q[0] = prev_dc + br.get_sexp();
                prev_dc = q[0];
                const std::uint64_t nnz = br.get_uexp();
                if (nnz > 63) throw IoError("corrupt payload: coefficient count out of range");
                int pos = 0;
                for (std::uint64_t k = 0; k < nnz; ++k) {
                    pos += static_cast<int>(br.get_uexp()) + 1;
                    if (pos > 63) throw IoError("corrupt payload: coefficient run overflow");
                    const std::int64_t v = br.get_sexp();
                    if (v == 0) throw IoError("corrupt payload: zero-valued coefficient");
                    q[pos] = v;
                }
                double coeffs[64], block[64];
                for (int i = 0; i < 64; ++i)
                    coeffs[zig[static_cast<std::size_t>(i)]] =
                        static_cast<double>(q[i]) *
                        qtab[static_cast<std::size_t>(zig[static_cast<std::size_t>(i)])];
                dct8_inverse(coeffs, block);
                for (int y = 0; y < 8; ++y)
                    for (int x = 0; x < 8; ++x)
                        img.at(bx * 8 + static_cast<std::uint32_t>(x), by * 8 + static_cast<std::uint32_t>(y),
                               ch) = clamp_u8(block[y * 8 + x] + 128.0);
            }
    }
    return img;
}

inline void encode_latentq(const RawImage& img, int level, BitWriter& bw) {
    const int shift = kLatentqShift[level];
    const std::uint32_t lw = img.width / 4, lh = img.height / 4;
    for (std::uint32_t ch = 0; ch < img.channels; ++ch) {
        // Quantized latent deltas in raster order, then zero-run coded.
        std::vector<std::int64_t> deltas;
        deltas.reserve(static_cast<std::size_t>(lw) * lh);
        std::int64_t prev = 0;
        for (std::uint32_t ly = 0; ly < lh; ++ly)
            for (std::uint32_t lx = 0; lx < lw; ++lx) {
                double acc = 0;
                for (std::uint32_t y = 0; y < 4; ++y)
                    for (std::uint32_t x = 0; x < 4; ++x) acc += img.at(lx * 4 + x, ly * 4 + y, ch);
                std::int64_t q = std::llround((acc / 16.0 - 128.0) / kLatentqFineStep);
                for (int s = 0; s < shift; ++s) q = halve_even(q);
                deltas.push_back(q - prev);
                prev = q;
            }
        std::uint64_t nonzero = 0;
        for (std::int64_t d : deltas) nonzero += d != 0;
        bw.put_uexp(nonzero);
        std::uint64_t run = 0;
        for (std::int64_t d : deltas) {
            if (d == 0) {
                ++run;
            } else {
                bw.put_uexp(run);
                bw.put_sexp(d);
                run = 0;
            }
        }
    }
}

inline RawImage decode_latentq(const CompressedArtifact& art, BitReader& br) {
    const double step = kLatentqFineStep * static_cast<double>(1 << kLatentqShift[art.level]);
    const std::uint32_t lw = art.width / 4, lh = art.height / 4;
    RawImage img = RawImage::create(art.width, art.height, art.channels);
    std::vector<double> latent(static_cast<std::size_t>(lw) * lh);
    for (std::uint32_t ch = 0; ch < art.channels; ++ch) {
        std::vector<std::int64_t> deltas(latent.size(), 0);
        const std::uint64_t nonzero = br.get_uexp();
        if (nonzero > deltas.size()) throw IoError("corrupt payload: latent count out of range");
        std::size_t pos = 0;
        for (std::uint64_t k = 0; k < nonzero; ++k) {
            pos += br.get_uexp();
            if (pos >= deltas.size()) throw IoError("corrupt payload: latent run overflow");
            const std::int64_t v = br.get_sexp();
            if (v == 0) throw IoError("corrupt payload: zero-valued latent delta");
            deltas[pos++] = v;
        }
        std::int64_t prev = 0;
        for (std::size_t i = 0; i < latent.size(); ++i) {
            prev += deltas[i];
            latent[i] = static_cast<double>(prev) * step + 128.0;
        }
        // Bilinear synthesis; latent samples sit at the centers of their
        // 4x4 cells, edges clamped.
        for (std::uint32_t y = 0; y < art.height; ++y)
            for (std::uint32_t x = 0; x < art.width; ++x) {
                const double u = (static_cast<double>(x) - 1.5) / 4.0;
                const double v = (static_cast<double>(y) - 1.5) / 4.0;
                const std::int32_t x0 = static_cast<std::int32_t>(std::floor(u));
                const std::int32_t y0 = static_cast<std::int32_t>(std::floor(v));
                const double fx = u - x0, fy = v - y0;
                auto sample = [&](std::int32_t sx, std::int32_t sy) {
                    sx = std::clamp(sx, 0, static_cast<std::int32_t>(lw) - 1);
                    sy = std::clamp(sy, 0, static_cast<std::int32_t>(lh) - 1);
                    return latent[static_cast<std::size_t>(sy) * lw + static_cast<std::size_t>(sx)];
                };
                const double top = sample(x0, y0) * (1 - fx) + sample(x0 + 1, y0) * fx;
                const double bot = sample(x0, y0 + 1) * (1 - fx) + sample(x0 + 1, y0 + 1) * fx;
                img.at(x, y, ch) = clamp_u8(top * (1 - fy) + bot * fy);
            }
    }
    return img;
}

inline void encode_texgen(const RawImage& img, int level, BitWriter& bw) {
    const int mean_shift = kTexgenMeanShift[level];
    const int orient_bits = kTexgenOrientBits[level];
    const int bins = 1 << orient_bits;
    const double pi = 3.14159265358979323846264338327950288;
    for (std::uint32_t ch = 0; ch < img.channels; ++ch) {
        std::int64_t prev_mean = 0;
        for (std::uint32_t by = 0; by < img.height / 8; ++by)
            for (std::uint32_t bx = 0; bx < img.width / 8; ++bx) {
                double mean = 0;
                for (std::uint32_t y = 0; y < 8; ++y)
                    for (std::uint32_t x = 0; x < 8; ++x) mean += img.at(bx * 8 + x, by * 8 + y, ch);
                mean /= 64.0;
                // Dominant orientation from the block's structure tensor.
                double sxx = 0, syy = 0, sxy = 0;
                for (std::uint32_t y = 1; y < 7; ++y)
                    for (std::uint32_t x = 1; x < 7; ++x) {
                        const double gx = (static_cast<double>(img.at(bx * 8 + x + 1, by * 8 + y, ch)) -
                                           img.at(bx * 8 + x - 1, by * 8 + y, ch)) /
                                          2.0;
                        const double gy = (static_cast<double>(img.at(bx * 8 + x, by * 8 + y + 1, ch)) -
                                           img.at(bx * 8 + x, by * 8 + y - 1, ch)) /
                                          2.0;
                        sxx += gx * gx;
                        syy += gy * gy;
                        sxy += gx * gy;
                    }
                // Edge normal angle; stripes run perpendicular to it.
                double angle = 0.5 * std::atan2(2.0 * sxy, sxx - syy);
                if (angle < 0) angle += pi;
                int bin = static_cast<int>(angle * bins / pi);
                bin = std::clamp(bin, 0, bins - 1);
                std::int64_t qmean = std::llround(mean / kTexgenMeanFineStep);
                for (int sh = 0; sh < mean_shift; ++sh) qmean = halve_even(qmean);
                bw.put_sexp(qmean - prev_mean);
                prev_mean = qmean;
                bw.put_bits(static_cast<std::uint64_t>(bin), static_cast<unsigned>(orient_bits));
            }
    }
}

inline RawImage decode_texgen(const CompressedArtifact& art, BitReader& br) {
    const double mean_step = kTexgenMeanFineStep * static_cast<double>(1 << kTexgenMeanShift[art.level]);
    const int orient_bits = kTexgenOrientBits[art.level];
    const int bins = 1 << orient_bits;
    const double pi = 3.14159265358979323846264338327950288;
    RawImage img = RawImage::create(art.width, art.height, art.channels);
    const std::uint32_t gw = art.width / 8, gh = art.height / 8;
    std::vector<double> means(static_cast<std::size_t>(gw) * gh);
    std::vector<double> thetas(means.size());
    for (std::uint32_t ch = 0; ch < art.channels; ++ch) {
        std::int64_t prev_mean = 0;
        for (std::size_t i = 0; i < means.size(); ++i) {
            prev_mean += br.get_sexp();
            means[i] = static_cast<double>(prev_mean) * mean_step;
            const int bin = static_cast<int>(br.get_bits(static_cast<unsigned>(orient_bits)));
            thetas[i] = (bin + 0.5) * pi / bins;
        }
        // The mean field is rendered smoothly (bilinear across block centers)
        // and the oriented texture is laid on top; synthesized detail, no
        // blocking.
        auto mean_at = [&](std::int32_t bx, std::int32_t by) {
            bx = std::clamp(bx, 0, static_cast<std::int32_t>(gw) - 1);
            by = std::clamp(by, 0, static_cast<std::int32_t>(gh) - 1);
            return means[static_cast<std::size_t>(by) * gw + static_cast<std::size_t>(bx)];
        };
        for (std::uint32_t y = 0; y < art.height; ++y)
            for (std::uint32_t x = 0; x < art.width; ++x) {
                const double u = (static_cast<double>(x) - 3.5) / 8.0;
                const double v = (static_cast<double>(y) - 3.5) / 8.0;
                const std::int32_t x0 = static_cast<std::int32_t>(std::floor(u));
                const std::int32_t y0 = static_cast<std::int32_t>(std::floor(v));
                const double fx = u - x0, fy = v - y0;
                const double top = mean_at(x0, y0) * (1 - fx) + mean_at(x0 + 1, y0) * fx;
                const double bot = mean_at(x0, y0 + 1) * (1 - fx) + mean_at(x0 + 1, y0 + 1) * fx;
                const double base = top * (1 - fy) + bot * fy;

                const std::uint32_t bx = x / 8, by = y / 8;
                const double theta = thetas[static_cast<std::size_t>(by) * gw + bx];
                const std::uint64_t h = hash_coords(bx, by, ch);
                const double phase = static_cast<double>(h >> 40) * 0x1.0p-24 * 2.0 * pi;
                const double t = x * std::cos(theta) + y * std::sin(theta);
                const std::uint64_t nh = hash_coords(x, y, ch + 17);
                const double noise =
                    (static_cast<double>(nh >> 40) * 0x1.0p-24 - 0.5) * kTexgenNoise[art.level];
                const double val = base +
                                   kTexgenAmplitude[art.level] * std::sin(2.0 * pi * t / 3.2 + phase) +
                                   noise;
                img.at(x, y, ch) = clamp_u8(val);
            }
    }
    return img;
}

}  // namespace detail

// Compresses an image with one of the three surrogate families. Pure
// function: identical inputs produce bit-identical payloads.
inline CompressedArtifact encode(const RawImage& img, CodecId codec, int level) {
    img.validate();
    if (level < 0 || level >= kLevelCount)
        throw ConfigError("encode: level " + std::to_string(level) + " out of range");
    CompressedArtifact art;
    art.codec_id = codec;
    art.level = level;
    art.width = img.width;
    art.height = img.height;
    art.channels = img.channels;
    BitWriter bw;
    switch (codec) {
        case CodecId::blocky: detail::encode_blocky(img, level, bw); break;
        case CodecId::latentq: detail::encode_latentq(img, level, bw); break;
        case CodecId::texgen: detail::encode_texgen(img, level, bw); break;
        default: throw ConfigError("encode: invalid codec id");
    }
    art.payload = bw.take();
    art.bit_count = 8 * (kArtifactHeaderBytes + art.payload.size());
    return art;
}

// Total function over artifacts produced by encode(); malformed payloads
// raise IoError.
inline RawImage decode(const CompressedArtifact& art) {
    if (art.level < 0 || art.level >= kLevelCount) throw IoError("decode: level out of range");
    BitReader br(art.payload);
    RawImage img;
    switch (art.codec_id) {
        case CodecId::blocky: img = detail::decode_blocky(art, br); break;
        case CodecId::latentq: img = detail::decode_latentq(art, br); break;
        case CodecId::texgen: img = detail::decode_texgen(art, br); break;
        default: throw IoError("decode: invalid codec id");
    }
    // The payload must be exactly the coded bits padded to a byte.
    if ((br.bits_consumed() + 7) / 8 != art.payload.size())
        throw IoError("corrupt payload: length mismatch");
    return img;
}

inline double bits_per_pixel(const CompressedArtifact& art) { return art.bpp(); }

// .cga container: 16-byte header (magic, codec, level, channels, dims,
// little-endian) followed by the payload.
inline std::vector<std::uint8_t> serialize_artifact(const CompressedArtifact& art) {
    std::vector<std::uint8_t> out;
    out.reserve(kArtifactHeaderBytes + art.payload.size());
    const char magic[4] = {'C', 'G', 'A', '1'};
    out.insert(out.end(), magic, magic + 4);
    out.push_back(static_cast<std::uint8_t>(art.codec_id));
    out.push_back(static_cast<std::uint8_t>(art.level));
    out.push_back(static_cast<std::uint8_t>(art.channels));
    out.push_back(0);
    for (std::uint32_t v : {art.width, art.height})
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    out.insert(out.end(), art.payload.begin(), art.payload.end());
    return out;
}

inline CompressedArtifact parse_artifact(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kArtifactHeaderBytes || std::memcmp(bytes.data(), "CGA1", 4) != 0)
        throw IoError("cga: bad magic or truncated header");
    CompressedArtifact art;
    const std::uint8_t codec = bytes[4];
    if (codec >= kCodecCount) throw IoError("cga: codec id out of range");
    art.codec_id = static_cast<CodecId>(codec);
    art.level = bytes[5];
    if (art.level >= kLevelCount) throw IoError("cga: level out of range");
    art.channels = bytes[6];
    auto le32 = [&](std::size_t off) {
        return static_cast<std::uint32_t>(bytes[off]) | (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
               (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
               (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
    };
    art.width = le32(8);
    art.height = le32(12);
    if (art.width == 0 || art.height == 0 || art.width % 8 || art.height % 8 ||
        (art.channels != 1 && art.channels != 3))
        throw IoError("cga: invalid dimensions in header");
    art.payload.assign(bytes.begin() + kArtifactHeaderBytes, bytes.end());
    art.bit_count = 8 * bytes.size();
    return art;
}

inline void save_cga(const CompressedArtifact& art, const std::string& path) {
    const std::vector<std::uint8_t> bytes = serialize_artifact(art);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cga: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("cga: write failed: " + path);
}

inline CompressedArtifact load_cga(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cga: cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_artifact(bytes);
}

}  // namespace covec
