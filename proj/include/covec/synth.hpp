#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "covec/image.hpp"
#include "covec/png_io.hpp"

namespace covec {

inline constexpr int kClassCount = 8;
inline constexpr int kGlyphCount = 8;
inline constexpr int kGlyphSlots = 4;
inline constexpr std::uint32_t kSynthImageSize = 64;

// Default corpus used by the harness, the codec calibration and the
// acceptance runs.
inline constexpr std::uint64_t kDefaultSeed = 7;
inline constexpr int kDefaultCorpusCount = 512;

enum class Split { train, probe_fit, eval };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::probe_fit: return "probe_fit";
        case Split::eval: return "eval";
    }
    return "?";
}

struct SynthItem {
    RawImage image;
    int class_id = 0;
    std::array<int, kGlyphSlots> glyphs{};
    Split split = Split::train;
};

struct SynthCorpus {
    std::uint64_t seed = 0;
    int count = 0;
    std::vector<SynthItem> items;

    std::vector<std::size_t> split_indices(Split s) const {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < items.size(); ++i)
            if (items[i].split == s) idx.push_back(i);
        return idx;
    }
};

namespace detail {

// 8x8 glyph bitmaps, one byte per row, MSB = leftmost pixel.
inline const std::array<std::array<std::uint8_t, 8>, kGlyphCount>& glyph_bitmaps() {
    static const std::array<std::array<std::uint8_t, 8>, kGlyphCount> glyphs = {{
        {0xff, 0x81, 0x81, 0x81, 0x81, 0x81, 0x81, 0xff},  // box outline
        {0x18, 0x18, 0x18, 0x18, 0x18, 0x18, 0x18, 0x18},  // vertical bar
        {0x00, 0x00, 0x00, 0xff, 0xff, 0x00, 0x00, 0x00},  // horizontal bar
        {0x80, 0x40, 0x20, 0x10, 0x08, 0x04, 0x02, 0x01},  // diagonal
        {0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80},  // anti-diagonal
        {0x18, 0x18, 0x18, 0xff, 0xff, 0x18, 0x18, 0x18},  // cross
        {0xcc, 0xcc, 0x33, 0x33, 0xcc, 0xcc, 0x33, 0x33},  // checker
        {0xff, 0xff, 0x18, 0x18, 0x18, 0x18, 0x18, 0x18},  // tee
    }};
    return glyphs;
}

inline void draw_class_motif(RawImage& img, int class_id, Rng& rng) {
    const auto size = static_cast<int>(img.width);
    const int bg = static_cast<int>(rng.uniform(25.0, 60.0));
    const int fg = static_cast<int>(rng.uniform(170.0, 230.0));
    const int phase = static_cast<int>(rng.below(24));
    const double cx = size / 2.0 + rng.uniform(-4.0, 4.0);
    const double cy = size / 2.0 + rng.uniform(-4.0, 4.0);
    const double radius = 20.0 + rng.uniform(-3.0, 3.0);
    const double fx = rng.uniform(0.4, 1.0), fy = rng.uniform(0.4, 1.0);
    const double ph1 = rng.uniform(0.0, 6.28), ph2 = rng.uniform(0.0, 6.28);

    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            int v = bg;
            const double dx = x - cx, dy = y - cy;
            const double dist = std::sqrt(dx * dx + dy * dy);
            switch (class_id) {
                case 0: v = ((y + phase) % 24 < 12) ? fg : bg; break;  // horizontal stripes
                case 1: v = ((x + phase) % 24 < 12) ? fg : bg; break;  // vertical stripes
                case 2: v = ((x + y + phase) % 24 < 12) ? fg : bg; break;  // diagonal stripes
                case 3: v = (((x + phase) / 24 + (y + phase) / 24) % 2 == 0) ? fg : bg; break;  // checker
                case 4: v = dist < radius ? fg : bg; break;                                     // disc
                case 5: v = (dist > radius - 5 && dist < radius + 5) ? fg : bg; break;          // ring
                case 6:
                    v = bg + static_cast<int>((fg - bg) * std::max(0.0, 1.0 - dist / (size * 0.7)));
                    break;  // radial gradient
                case 7: {
                    const double wave = std::sin(fx * 2.0 * 3.14159265358979 * x / size + ph1) +
                                        std::sin(fy * 2.0 * 3.14159265358979 * y / size + ph2);
                    v = wave > 0 ? fg : bg;
                    break;  // low-frequency blobs
                }
                default: break;
            }
            v += static_cast<int>(rng.uniform(-4.0, 4.0));
            img.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y)) =
                static_cast<std::uint8_t>(std::clamp(v, 0, 255));
        }
}

// Glyph grid in the central 32x32 region: four 16x16 cells, each an 8x8
// bitmap scaled by 2.
inline void draw_glyphs(RawImage& img, const std::array<int, kGlyphSlots>& glyphs, Rng& rng) {
    const auto& bitmaps = glyph_bitmaps();
    const int dark = static_cast<int>(rng.uniform(70.0, 90.0));
    const int bright = static_cast<int>(rng.uniform(150.0, 170.0));
    const std::uint32_t origin = img.width / 2 - 16;
    for (int slot = 0; slot < kGlyphSlots; ++slot) {
        const std::uint32_t ox = origin + static_cast<std::uint32_t>(slot % 2) * 16;
        const std::uint32_t oy = origin + static_cast<std::uint32_t>(slot / 2) * 16;
        const auto& bm = bitmaps[static_cast<std::size_t>(glyphs[static_cast<std::size_t>(slot)])];
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) {
                const bool on = (bm[static_cast<std::size_t>(y / 2)] >> (7 - x / 2)) & 1;
                int v = (on ? bright : dark) + static_cast<int>(rng.uniform(-4.0, 4.0));
                img.at(ox + static_cast<std::uint32_t>(x), oy + static_cast<std::uint32_t>(y)) =
                    static_cast<std::uint8_t>(std::clamp(v, 0, 255));
            }
    }
}

}  // namespace detail

// Seeded procedural corpus: every image carries a coarse class (its motif)
// and a fine label (the four-glyph string in its center). Regeneration with
// the same seed is bit-identical.
inline SynthCorpus gen_synth_corpus(std::uint64_t seed, int count) {
    if (count < 30 * kClassCount)
        throw ConfigError("gen_synth_corpus: count too small, need at least " +
                          std::to_string(30 * kClassCount) + " for 30 images per class");
    if (count % 32 != 0)
        throw ConfigError("gen_synth_corpus: count must be a multiple of 32 for balanced splits");
    SynthCorpus corpus;
    corpus.seed = seed;
    corpus.count = count;
    corpus.items.reserve(static_cast<std::size_t>(count));
    Rng master(seed);
    for (int i = 0; i < count; ++i) {
        Rng rng = master.fork(static_cast<std::uint64_t>(i) + 1);
        SynthItem item;
        item.class_id = i % kClassCount;
        for (auto& g : item.glyphs) g = static_cast<int>(rng.below(kGlyphCount));
        if (i < count / 2) item.split = Split::train;
        else if (i < 3 * count / 4) item.split = Split::probe_fit;
        else item.split = Split::eval;
        item.image = RawImage::create(kSynthImageSize, kSynthImageSize, 1);
        detail::draw_class_motif(item.image, item.class_id, rng);
        detail::draw_glyphs(item.image, item.glyphs, rng);
        corpus.items.push_back(std::move(item));
    }
    return corpus;
}

inline std::string glyph_string(const std::array<int, kGlyphSlots>& glyphs) {
    std::string s;
    for (int g : glyphs) s += static_cast<char>('0' + g);
    return s;
}

// PNG directory plus labels CSV.
inline void export_corpus(const SynthCorpus& corpus, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "images");
    std::ofstream labels(fs::path(dir) / "labels.csv");
    if (!labels) throw IoError("export_corpus: cannot write labels.csv under " + dir);
    labels << "image,class_id,glyphs,split\n";
    char name[32];
    for (std::size_t i = 0; i < corpus.items.size(); ++i) {
        const SynthItem& item = corpus.items[i];
        std::snprintf(name, sizeof(name), "%05zu.png", i);
        png_write(item.image, (fs::path(dir) / "images" / name).string());
        labels << "images/" << name << ',' << item.class_id << ',' << glyph_string(item.glyphs) << ','
               << split_name(item.split) << '\n';
    }
    if (!labels) throw IoError("export_corpus: labels.csv write failed");
}

}  // namespace covec
