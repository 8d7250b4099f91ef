#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "covec/codec.hpp"
#include "covec/image.hpp"
#include "covec/tape.hpp"

namespace covec {

struct EncoderConfig {
    int patch = 8;
    int dim = 64;
    int heads = 4;
    int depth = 2;
    int codecs = kCodecCount;
    int levels = kLevelCount;
    int channels = 1;
    int mlp_ratio = 4;

    int cond_dim() const { return codecs * levels; }
    int head_dim() const { return dim / heads; }
    int pairs() const { return dim / 2; }
    int patch_len() const { return patch * patch * channels; }

    void validate() const {
        if (patch <= 0 || dim <= 0 || heads <= 0 || depth <= 0 || mlp_ratio <= 0)
            throw ConfigError("encoder config: all extents must be positive");
        if (dim % 2 != 0 || dim % (2 * heads) != 0)
            throw ConfigError("encoder config: dim must be even and divisible by 2*heads");
        if (codecs <= 0 || levels <= 0) throw ConfigError("encoder config: empty codec grid");
        if (channels != 1 && channels != 3) throw ConfigError("encoder config: channels must be 1 or 3");
    }

    bool operator==(const EncoderConfig&) const = default;
};

// Sublayer output projections start small so the residual stream dominates;
// the encoder then responds smoothly to input perturbations.
inline constexpr double kOutputProjGain = 0.3;

// Fraction of each patch-embedding column drawn from smooth (low spatial
// frequency) patch patterns rather than white noise. Pretrained vision
// encoders weight coarse structure far more than per-pixel detail; the
// seeded stand-in mirrors that.
inline constexpr double kPatchLowFreqShare = 0.9;

namespace detail {

// Patch-embedding init: each column mixes a random combination of the
// lowest 2-D cosine modes of the patch with a white residual.
template <typename T>
Tensor<T> lowfreq_patch_init(const EncoderConfig& cfg, Rng& rng) {
    const int p = cfg.patch;
    const auto rows = static_cast<std::size_t>(cfg.patch_len());
    const auto cols = static_cast<std::size_t>(cfg.dim);
    const double pi = 3.14159265358979323846264338327950288;
    // Modes with u+v <= 2 (six of them), unit-normalized over the patch.
    std::vector<std::vector<double>> modes;
    for (int u = 0; u <= 2; ++u)
        for (int v = 0; u + v <= 2; ++v) {
            std::vector<double> m(static_cast<std::size_t>(p) * static_cast<std::size_t>(p));
            double norm = 0;
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x) {
                    const double val = std::cos((2 * x + 1) * u * pi / (2.0 * p)) *
                                       std::cos((2 * y + 1) * v * pi / (2.0 * p));
                    m[static_cast<std::size_t>(y * p + x)] = val;
                    norm += val * val;
                }
            for (auto& val : m) val /= std::sqrt(norm);
            modes.push_back(std::move(m));
        }
    Tensor<T> w = Tensor<T>::zeros({rows, cols});
    const double smooth_gain = std::sqrt(kPatchLowFreqShare);
    const double white_gain = std::sqrt(1.0 - kPatchLowFreqShare) / std::sqrt(static_cast<double>(rows));
    for (std::size_t c = 0; c < cols; ++c) {
        std::vector<double> coeff(modes.size());
        for (auto& v : coeff) v = rng.normal() * smooth_gain / std::sqrt(static_cast<double>(modes.size()));
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t pix = r / static_cast<std::size_t>(cfg.channels);
            double val = rng.normal() * white_gain;
            for (std::size_t k = 0; k < modes.size(); ++k) val += coeff[k] * modes[k][pix];
            w.data[r * cols + c] = static_cast<T>(val);
        }
    }
    return w;
}

}  // namespace detail

template <typename T>
struct BlockWeights {
    Tensor<T> ln1_gain, ln1_bias;
    Tensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor<T> ln2_gain, ln2_bias;
    Tensor<T> w1, b1, w2, b2;
};

// All encoder parameters. The condition table and phase projection are the
// adaptor; both start at zero so a fresh conditioned encoder reproduces the
// unconditioned one exactly.
template <typename T>
struct EncoderWeights {
    EncoderConfig config;
    Tensor<T> patch_weight;  // patch_len x dim
    Tensor<T> patch_bias;    // 1 x dim
    std::vector<BlockWeights<T>> blocks;
    Tensor<T> final_gain, final_bias;  // 1 x dim
    Tensor<T> cond_table;              // (codecs*levels) x dim
    Tensor<T> phase_proj;              // dim x dim/2

    static EncoderWeights seeded(const EncoderConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        EncoderWeights w;
        w.config = cfg;
        Rng rng(seed);
        auto init = [&rng](std::size_t rows, std::size_t cols, double gain = 1.0) {
            Tensor<T> t = Tensor<T>::zeros({rows, cols});
            const double scale = gain / std::sqrt(static_cast<double>(rows));
            for (auto& v : t.data) v = static_cast<T>(rng.normal() * scale);
            return t;
        };
        auto small = [&rng](std::size_t cols) {
            Tensor<T> t = Tensor<T>::zeros({1, cols});
            for (auto& v : t.data) v = static_cast<T>(rng.normal() * 0.2);
            return t;
        };
        const auto d = static_cast<std::size_t>(cfg.dim);
        const auto hidden = static_cast<std::size_t>(cfg.dim * cfg.mlp_ratio);
        w.patch_weight = detail::lowfreq_patch_init<T>(cfg, rng);
        w.patch_bias = small(d);
        for (int b = 0; b < cfg.depth; ++b) {
            BlockWeights<T> blk;
            blk.ln1_gain = Tensor<T>::full({1, d}, T(1));
            blk.ln1_bias = Tensor<T>::zeros({1, d});
            blk.wq = init(d, d);
            blk.bq = small(d);
            blk.wk = init(d, d);
            blk.bk = small(d);
            blk.wv = init(d, d);
            blk.bv = small(d);
            blk.wo = init(d, d, kOutputProjGain);
            blk.bo = small(d);
            blk.ln2_gain = Tensor<T>::full({1, d}, T(1));
            blk.ln2_bias = Tensor<T>::zeros({1, d});
            blk.w1 = init(d, hidden);
            blk.b1 = small(hidden);
            blk.w2 = init(hidden, d, kOutputProjGain);
            blk.b2 = small(d);
            w.blocks.push_back(std::move(blk));
        }
        w.final_gain = Tensor<T>::full({1, d}, T(1));
        w.final_bias = Tensor<T>::zeros({1, d});
        w.cond_table = Tensor<T>::zeros({static_cast<std::size_t>(cfg.cond_dim()), d});
        w.phase_proj = Tensor<T>::zeros({d, d / 2});
        return w;
    }

    template <typename F>
    void for_each_param(F&& f) {
        f("patch_weight", patch_weight);
        f("patch_bias", patch_bias);
        for (std::size_t i = 0; i < blocks.size(); ++i) {
            const std::string p = "block" + std::to_string(i) + ".";
            auto& b = blocks[i];
            f((p + "ln1_gain").c_str(), b.ln1_gain);
            f((p + "ln1_bias").c_str(), b.ln1_bias);
            f((p + "wq").c_str(), b.wq);
            f((p + "bq").c_str(), b.bq);
            f((p + "wk").c_str(), b.wk);
            f((p + "bk").c_str(), b.bk);
            f((p + "wv").c_str(), b.wv);
            f((p + "bv").c_str(), b.bv);
            f((p + "wo").c_str(), b.wo);
            f((p + "bo").c_str(), b.bo);
            f((p + "ln2_gain").c_str(), b.ln2_gain);
            f((p + "ln2_bias").c_str(), b.ln2_bias);
            f((p + "w1").c_str(), b.w1);
            f((p + "b1").c_str(), b.b1);
            f((p + "w2").c_str(), b.w2);
            f((p + "b2").c_str(), b.b2);
        }
        f("final_gain", final_gain);
        f("final_bias", final_bias);
        f("cond_table", cond_table);
        f("phase_proj", phase_proj);
    }

    template <typename F>
    void for_each_param(F&& f) const {
        const_cast<EncoderWeights*>(this)->for_each_param(
            [&](const char* name, Tensor<T>& t) { f(name, static_cast<const Tensor<T>&>(t)); });
    }

    // Adaptor parameters only: the condition table and phase projection.
    template <typename F>
    void for_each_adaptor_param(F&& f) {
        f("cond_table", cond_table);
        f("phase_proj", phase_proj);
    }
};

// Patches in raster order, each flattened in storage order and scaled to
// [0, 1]. Pure data preparation; no gradient flows into pixels.
template <typename T>
Tensor<T> patch_matrix(const RawImage& img, const EncoderConfig& cfg) {
    img.validate();
    if (static_cast<int>(img.channels) != cfg.channels)
        throw ShapeError("patchify: image channels do not match encoder config");
    if (img.width % static_cast<std::uint32_t>(cfg.patch) != 0 ||
        img.height % static_cast<std::uint32_t>(cfg.patch) != 0)
        throw ShapeError("patchify: image dimensions not divisible by patch size");
    const std::uint32_t px = img.width / static_cast<std::uint32_t>(cfg.patch);
    const std::uint32_t py = img.height / static_cast<std::uint32_t>(cfg.patch);
    Tensor<T> out = Tensor<T>::zeros(
        {static_cast<std::size_t>(px) * py, static_cast<std::size_t>(cfg.patch_len())});
    std::size_t row = 0;
    for (std::uint32_t gy = 0; gy < py; ++gy)
        for (std::uint32_t gx = 0; gx < px; ++gx, ++row) {
            std::size_t col = 0;
            for (int y = 0; y < cfg.patch; ++y)
                for (int x = 0; x < cfg.patch; ++x)
                    for (std::uint32_t c = 0; c < img.channels; ++c)
                        out.data[row * static_cast<std::size_t>(cfg.patch_len()) + col++] =
                            static_cast<T>(img.at(gx * static_cast<std::uint32_t>(cfg.patch) +
                                                      static_cast<std::uint32_t>(x),
                                                  gy * static_cast<std::uint32_t>(cfg.patch) +
                                                      static_cast<std::uint32_t>(y),
                                                  c)) /
                            T(255);
        }
    return out;
}

// Flatten-and-project front end: one token per patch.
template <typename T>
Tensor<T> patchify(Tape<T>& tape, const EncoderWeights<T>& w, const RawImage& img) {
    const Tensor<T> x = patch_matrix<T>(img, w.config);
    const Tensor<T> ones = Tensor<T>::full({x.rows(), 1}, T(1));
    Tensor<T> tokens = tape.matmul(x, w.patch_weight);
    return tape.add(tokens, tape.matmul(ones, w.patch_bias));
}

// One-hot row for a condition; the identity condition is the zero row, so
// its embedding is exactly the zero vector.
template <typename T>
Tensor<T> condition_onehot(const CodecCondition& cond, int codecs, int levels) {
    Tensor<T> row = Tensor<T>::zeros({1, static_cast<std::size_t>(codecs) * levels});
    if (!cond.is_identity()) {
        if (cond.codec >= codecs || cond.level >= levels)
            throw ConfigError("condition out of range for encoder config");
        row.data[static_cast<std::size_t>(cond.codec * levels + cond.level)] = T(1);
    }
    return row;
}

// Embedding lookup realized as one-hot x table so gradients reach the table.
template <typename T>
Tensor<T> condition_embed(Tape<T>& tape, const CodecCondition& cond, const Tensor<T>& table, int codecs,
                          int levels) {
    if (table.rows() != static_cast<std::size_t>(codecs) * levels)
        throw ShapeError("condition_embed: table has wrong row count");
    return tape.matmul(condition_onehot<T>(cond, codecs, levels), table);
}

// Base rotary angles: angle[p][i] = p * 10000^(-2i/dim) for pair i.
template <typename T>
Tensor<T> base_rope_angles(std::size_t positions, int dim) {
    Tensor<T> angles = Tensor<T>::zeros({positions, static_cast<std::size_t>(dim / 2)});
    for (std::size_t p = 0; p < positions; ++p)
        for (int i = 0; i < dim / 2; ++i)
            angles.data[p * static_cast<std::size_t>(dim / 2) + static_cast<std::size_t>(i)] =
                static_cast<T>(static_cast<double>(p) *
                               std::pow(10000.0, -2.0 * i / static_cast<double>(dim)));
    return angles;
}

// Conditional rotary angles: the condition embedding is projected to one
// offset per pair and added to the base angles, shared across positions.
// A zero embedding reproduces the plain angles exactly.
template <typename T>
Tensor<T> conditional_rope_angles(Tape<T>& tape, std::size_t positions, const Tensor<T>& cond_embedding,
                                  const Tensor<T>& phase_proj, int dim) {
    if (phase_proj.rows() != static_cast<std::size_t>(dim) ||
        phase_proj.cols() != static_cast<std::size_t>(dim / 2))
        throw ShapeError("conditional_rope_angles: phase projection must be dim x dim/2");
    const Tensor<T> offset = tape.matmul(cond_embedding, phase_proj);  // 1 x dim/2
    const Tensor<T> ones = Tensor<T>::full({positions, 1}, T(1));
    return tape.add(base_rope_angles<T>(positions, dim), tape.matmul(ones, offset));
}

namespace detail {

// Column selector picking head h's slice; constant, so per-head views stay
// inside plain matmuls.
template <typename T>
Tensor<T> head_selector(int dim, int head_dim, int head) {
    Tensor<T> s = Tensor<T>::zeros({static_cast<std::size_t>(dim), static_cast<std::size_t>(head_dim)});
    for (int j = 0; j < head_dim; ++j)
        s.data[static_cast<std::size_t>(head * head_dim + j) * static_cast<std::size_t>(head_dim) +
               static_cast<std::size_t>(j)] = T(1);
    return s;
}

}  // namespace detail

// Full forward pass. The same path serves the plain encoder (identity
// condition) and the conditioned one; they differ only through the one-hot
// row feeding the condition table.
template <typename T>
Tensor<T> encode_features(Tape<T>& tape, const EncoderWeights<T>& w, const RawImage& img,
                          const CodecCondition& cond) {
    const EncoderConfig& cfg = w.config;
    cfg.validate();
    Tensor<T> tokens = patchify(tape, w, img);
    const std::size_t n = tokens.rows();
    const Tensor<T> ones = Tensor<T>::full({n, 1}, T(1));

    const Tensor<T> c_emb = condition_embed(tape, cond, w.cond_table, cfg.codecs, cfg.levels);
    const Tensor<T> angles = conditional_rope_angles(tape, n, c_emb, w.phase_proj, cfg.dim);

    // Rotary embedding applied to the token stream itself; the conditional
    // offset reaches every downstream layer through the normalizations.
    tokens = tape.rotate_pairs(tokens, angles);

    const Tensor<T> scale = Tensor<T>::scalar(T(1) / std::sqrt(static_cast<T>(cfg.head_dim())));
    std::vector<Tensor<T>> selectors;
    for (int h = 0; h < cfg.heads; ++h) selectors.push_back(detail::head_selector<T>(cfg.dim, cfg.head_dim(), h));

    for (const BlockWeights<T>& blk : w.blocks) {
        // attention sublayer
        Tensor<T> x = tape.layernorm(tokens, blk.ln1_gain, blk.ln1_bias);
        Tensor<T> q = tape.add(tape.matmul(x, blk.wq), tape.matmul(ones, blk.bq));
        Tensor<T> k = tape.add(tape.matmul(x, blk.wk), tape.matmul(ones, blk.bk));
        Tensor<T> v = tape.add(tape.matmul(x, blk.wv), tape.matmul(ones, blk.bv));
        // Rotate q, k and v. The offset cancels between q and k inside the
        // attention logits, so the value path is rotated as well to give the
        // condition a causal route into the features.
        q = tape.rotate_pairs(q, angles);
        k = tape.rotate_pairs(k, angles);
        v = tape.rotate_pairs(v, angles);
        Tensor<T> attn_out;
        for (int h = 0; h < cfg.heads; ++h) {
            const Tensor<T> qh = tape.matmul(q, selectors[static_cast<std::size_t>(h)]);
            const Tensor<T> kh = tape.matmul(k, selectors[static_cast<std::size_t>(h)]);
            const Tensor<T> vh = tape.matmul(v, selectors[static_cast<std::size_t>(h)]);
            const Tensor<T> logits = tape.mul(tape.matmul(qh, kh, false, true), scale);
            const Tensor<T> weights = tape.softmax(logits);
            const Tensor<T> oh = tape.matmul(weights, vh);
            const Tensor<T> scattered = tape.matmul(oh, selectors[static_cast<std::size_t>(h)], false, true);
            attn_out = (h == 0) ? scattered : tape.add(attn_out, scattered);
        }
        attn_out = tape.add(tape.matmul(attn_out, blk.wo), tape.matmul(ones, blk.bo));
        tokens = tape.add(tokens, attn_out);

        // MLP sublayer
        Tensor<T> y = tape.layernorm(tokens, blk.ln2_gain, blk.ln2_bias);
        y = tape.gelu(tape.add(tape.matmul(y, blk.w1), tape.matmul(ones, blk.b1)));
        y = tape.add(tape.matmul(y, blk.w2), tape.matmul(ones, blk.b2));
        tokens = tape.add(tokens, y);
    }
    return tape.layernorm(tokens, w.final_gain, w.final_bias);
}

// Evaluation-only forward pass on a throwaway tape.
template <typename T>
Tensor<T> encode_features(const EncoderWeights<T>& w, const RawImage& img,
                          const CodecCondition& cond = CodecCondition::identity()) {
    Tape<T> tape;
    return encode_features(tape, w, img, cond);
}

// ---- checkpoint io --------------------------------------------------------
//
// Versioned binary record: magic "CVEW", u32 version, the eight config
// fields as little-endian i32, then every parameter's values as
// little-endian f32 in declared field order.

inline constexpr char kCheckpointMagic[4] = {'C', 'V', 'E', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        const int c = is.get();
        if (c == EOF) throw IoError("checkpoint: truncated file");
        v |= static_cast<std::uint32_t>(c) << (8 * i);
    }
    return v;
}

inline void write_f32(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
    const std::uint32_t bits = read_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace detail

template <typename T>
void save_checkpoint(const EncoderWeights<T>& w, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open for writing: " + path);
    f.write(kCheckpointMagic, 4);
    detail::write_u32(f, kCheckpointVersion);
    const EncoderConfig& c = w.config;
    for (int field : {c.patch, c.dim, c.heads, c.depth, c.codecs, c.levels, c.channels, c.mlp_ratio})
        detail::write_u32(f, static_cast<std::uint32_t>(field));
    w.for_each_param([&](const char*, const Tensor<T>& t) {
        for (const T& v : t.data) detail::write_f32(f, static_cast<float>(v));
    });
    if (!f) throw IoError("checkpoint: write failed: " + path);
}

template <typename T>
EncoderWeights<T> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("checkpoint: cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (f.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw IoError("checkpoint: bad magic: " + path);
    const std::uint32_t version = detail::read_u32(f);
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    EncoderConfig cfg;
    for (int* field : {&cfg.patch, &cfg.dim, &cfg.heads, &cfg.depth, &cfg.codecs, &cfg.levels,
                       &cfg.channels, &cfg.mlp_ratio})
        *field = static_cast<int>(detail::read_u32(f));
    cfg.validate();
    EncoderWeights<T> w = EncoderWeights<T>::seeded(cfg, 0);
    w.for_each_param([&](const char*, Tensor<T>& t) {
        for (T& v : t.data) v = static_cast<T>(detail::read_f32(f));
    });
    if (f.peek() != EOF) throw IoError("checkpoint: trailing bytes: " + path);
    return w;
}

}  // namespace covec
