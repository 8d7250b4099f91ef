#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "covec/codec.hpp"
#include "covec/encoder.hpp"
#include "covec/synth.hpp"

namespace covec {

enum class TaskId { coarse_class, fine_glyph };

inline const char* task_name(TaskId t) {
    return t == TaskId::coarse_class ? "coarse-class" : "fine-glyph";
}

inline TaskId task_from_name(const std::string& s) {
    if (s == "coarse-class") return TaskId::coarse_class;
    if (s == "fine-glyph") return TaskId::fine_glyph;
    throw ConfigError("unknown task: " + s);
}

struct TaskResult {
    TaskId task = TaskId::coarse_class;
    double accuracy = 0;
    int n = 0;
};

// Multinomial linear classifier over standardized features, fit by
// full-batch gradient descent to a gradient tolerance. Ties in argmax break
// toward the lowest class index.
struct ProbeHead {
    int classes = 0;
    std::vector<double> feat_mean, feat_scale;
    std::vector<double> weights;  // (features + 1) x classes, bias in last row

    int predict(std::span<const float> feature) const {
        const std::size_t f = feat_mean.size();
        if (feature.size() != f) throw ShapeError("probe: feature width mismatch");
        std::vector<double> logits(static_cast<std::size_t>(classes), 0.0);
        for (std::size_t j = 0; j < f; ++j) {
            const double z = (static_cast<double>(feature[j]) - feat_mean[j]) * feat_scale[j];
            for (int c = 0; c < classes; ++c)
                logits[static_cast<std::size_t>(c)] += z * weights[j * static_cast<std::size_t>(classes) +
                                                                  static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < classes; ++c)
            logits[static_cast<std::size_t>(c)] +=
                weights[f * static_cast<std::size_t>(classes) + static_cast<std::size_t>(c)];
        int best = 0;
        for (int c = 1; c < classes; ++c)
            if (logits[static_cast<std::size_t>(c)] > logits[static_cast<std::size_t>(best)]) best = c;
        return best;
    }
};

// `seed` is part of the contract (fits are reproducible per seed) though the
// optimizer itself starts from zeros and is fully deterministic.
inline ProbeHead fit_linear_probe(const std::vector<std::vector<float>>& features,
                                  const std::vector<int>& labels, int classes,
                                  std::uint64_t seed = kDefaultSeed) {
    (void)seed;
    if (features.empty() || features.size() != labels.size())
        throw ConfigError("fit_linear_probe: features/labels size mismatch or empty");
    std::set<int> present(labels.begin(), labels.end());
    if (present.size() < 2) throw ConfigError("fit_linear_probe: need at least 2 distinct classes");
    if (*present.begin() < 0 || *present.rbegin() >= classes)
        throw ConfigError("fit_linear_probe: label outside [0, classes)");

    const std::size_t n = features.size();
    const std::size_t f = features[0].size();
    for (const auto& row : features)
        if (row.size() != f) throw ShapeError("fit_linear_probe: ragged feature rows");

    ProbeHead head;
    head.classes = classes;
    head.feat_mean.assign(f, 0.0);
    head.feat_scale.assign(f, 1.0);
    for (const auto& row : features)
        for (std::size_t j = 0; j < f; ++j) head.feat_mean[j] += row[j];
    for (std::size_t j = 0; j < f; ++j) head.feat_mean[j] /= static_cast<double>(n);
    std::vector<double> var(f, 0.0);
    for (const auto& row : features)
        for (std::size_t j = 0; j < f; ++j) {
            const double d = row[j] - head.feat_mean[j];
            var[j] += d * d;
        }
    for (std::size_t j = 0; j < f; ++j) {
        const double sd = std::sqrt(var[j] / static_cast<double>(n));
        head.feat_scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
    }

    // Standardized design matrix with a bias column.
    const std::size_t cols = f + 1;
    std::vector<double> x(n * cols);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j)
            x[i * cols + j] = (features[i][j] - head.feat_mean[j]) * head.feat_scale[j];
        x[i * cols + f] = 1.0;
    }

    const auto kc = static_cast<std::size_t>(classes);
    std::vector<double> w(cols * kc, 0.0), grad(cols * kc), probs(kc);
    const double lambda = 1e-3, lr = 0.5, tol = 1e-5;
    const int max_iters = 3000;
    for (int iter = 0; iter < max_iters; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -1e300;
            for (std::size_t c = 0; c < kc; ++c) {
                double z = 0;
                for (std::size_t j = 0; j < cols; ++j) z += x[i * cols + j] * w[j * kc + c];
                probs[c] = z;
                mx = std::max(mx, z);
            }
            double sum = 0;
            for (std::size_t c = 0; c < kc; ++c) {
                probs[c] = std::exp(probs[c] - mx);
                sum += probs[c];
            }
            for (std::size_t c = 0; c < kc; ++c) {
                const double err = probs[c] / sum - (static_cast<int>(c) == labels[i] ? 1.0 : 0.0);
                for (std::size_t j = 0; j < cols; ++j) grad[j * kc + c] += x[i * cols + j] * err;
            }
        }
        double gmax = 0;
        for (std::size_t j = 0; j < cols; ++j)
            for (std::size_t c = 0; c < kc; ++c) {
                double g = grad[j * kc + c] / static_cast<double>(n);
                if (j < f) g += lambda * w[j * kc + c];  // bias row unregularized
                grad[j * kc + c] = g;
                gmax = std::max(gmax, std::abs(g));
            }
        if (gmax < tol) break;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grad[i];
    }
    head.weights = std::move(w);
    return head;
}

// ---- feature pooling --------------------------------------------------------

// Coarse-task feature: mean over the motif tokens, i.e. everything outside
// the central glyph grid (whose content is random with respect to the class).
inline std::vector<float> pool_motif_tokens(const Tensor<float>& fm, const EncoderConfig& cfg) {
    const auto grid = static_cast<std::size_t>(kSynthImageSize) / static_cast<std::size_t>(cfg.patch);
    if (fm.rows() != grid * grid)
        throw ShapeError("pool_motif_tokens: feature map is not from a standard corpus image");
    const std::size_t g0 = (kSynthImageSize / 2 - 16) / static_cast<std::size_t>(cfg.patch);
    const std::size_t g1 = g0 + 32 / static_cast<std::size_t>(cfg.patch);
    std::vector<float> out(fm.cols(), 0.0f);
    std::size_t used = 0;
    for (std::size_t ty = 0; ty < grid; ++ty)
        for (std::size_t tx = 0; tx < grid; ++tx) {
            if (ty >= g0 && ty < g1 && tx >= g0 && tx < g1) continue;
            for (std::size_t c = 0; c < fm.cols(); ++c) out[c] += fm.at(ty * grid + tx, c);
            ++used;
        }
    for (auto& v : out) v /= static_cast<float>(used);
    return out;
}

// Fine-task features: one pooled vector per glyph slot (the 2x2 patch block
// covering that 16x16 cell of the central grid).
inline std::array<std::vector<float>, kGlyphSlots> pool_glyph_slots(const Tensor<float>& fm,
                                                                    const EncoderConfig& cfg) {
    const auto grid = static_cast<std::size_t>(kSynthImageSize) / static_cast<std::size_t>(cfg.patch);
    if (fm.rows() != grid * grid)
        throw ShapeError("pool_glyph_slots: feature map is not from a standard corpus image");
    const std::size_t origin = (kSynthImageSize / 2 - 16) / static_cast<std::size_t>(cfg.patch);
    const std::size_t cell = 16 / static_cast<std::size_t>(cfg.patch);
    std::array<std::vector<float>, kGlyphSlots> out;
    for (int slot = 0; slot < kGlyphSlots; ++slot) {
        std::vector<float> pooled(fm.cols(), 0.0f);
        const std::size_t ty0 = origin + static_cast<std::size_t>(slot / 2) * cell;
        const std::size_t tx0 = origin + static_cast<std::size_t>(slot % 2) * cell;
        for (std::size_t ty = ty0; ty < ty0 + cell; ++ty)
            for (std::size_t tx = tx0; tx < tx0 + cell; ++tx)
                for (std::size_t c = 0; c < fm.cols(); ++c) pooled[c] += fm.at(ty * grid + tx, c);
        for (auto& v : pooled) v /= static_cast<float>(cell * cell);
        out[static_cast<std::size_t>(slot)] = std::move(pooled);
    }
    return out;
}

// Probes for both tasks, fit on uncompressed features of the probe-fit split
// of the given encoder, then frozen.
struct FittedProbes {
    ProbeHead coarse;
    ProbeHead fine;
    std::vector<std::size_t> fit_indices;
};

inline FittedProbes fit_probes(const EncoderWeights<float>& w, const SynthCorpus& corpus,
                               std::uint64_t seed = kDefaultSeed) {
    FittedProbes out;
    out.fit_indices = corpus.split_indices(Split::probe_fit);
    if (out.fit_indices.empty()) throw ConfigError("fit_probes: empty probe-fit split");
    std::vector<std::vector<float>> coarse_feats, fine_feats;
    std::vector<int> coarse_labels, fine_labels;
    for (std::size_t idx : out.fit_indices) {
        const SynthItem& item = corpus.items[idx];
        const Tensor<float> fm = encode_features(w, item.image);
        coarse_feats.push_back(pool_motif_tokens(fm, w.config));
        coarse_labels.push_back(item.class_id);
        auto slots = pool_glyph_slots(fm, w.config);
        for (int s = 0; s < kGlyphSlots; ++s) {
            fine_feats.push_back(std::move(slots[static_cast<std::size_t>(s)]));
            fine_labels.push_back(item.glyphs[static_cast<std::size_t>(s)]);
        }
    }
    out.coarse = fit_linear_probe(coarse_feats, coarse_labels, kClassCount, seed);
    out.fine = fit_linear_probe(fine_feats, fine_labels, kGlyphCount, seed);
    return out;
}

// Scores both tasks from one feature map.
inline void score_image(const Tensor<float>& fm, const EncoderConfig& cfg, const SynthItem& item,
                        const FittedProbes& probes, int& coarse_correct, int& fine_correct) {
    if (probes.coarse.predict(pool_motif_tokens(fm, cfg)) == item.class_id) ++coarse_correct;
    auto slots = pool_glyph_slots(fm, cfg);
    for (int s = 0; s < kGlyphSlots; ++s)
        if (probes.fine.predict(slots[static_cast<std::size_t>(s)]) == item.glyphs[static_cast<std::size_t>(s)])
            ++fine_correct;
}

// Condition fed to the encoder during evaluation: identity for the plain
// encoder, the true (codec, level) for the conditioned one.
enum class CondPolicy { identity, true_condition };

// Accuracy of the frozen probe on (possibly compressed) eval images.
inline TaskResult eval_task(const EncoderWeights<float>& w, CondPolicy policy, const SynthCorpus& corpus,
                            const FittedProbes& probes, TaskId task,
                            std::optional<std::pair<CodecId, int>> codec_level) {
    const std::vector<std::size_t> eval_idx = corpus.split_indices(Split::eval);
    if (eval_idx.empty()) throw ConfigError("eval_task: empty eval split");
    {
        std::set<std::size_t> fit(probes.fit_indices.begin(), probes.fit_indices.end());
        for (std::size_t i : eval_idx)
            if (fit.count(i)) throw ConfigError("eval_task: probe-fit and eval splits overlap");
    }
    int correct = 0, total = 0;
    for (std::size_t idx : eval_idx) {
        const SynthItem& item = corpus.items[idx];
        RawImage input = item.image;
        CodecCondition cond = CodecCondition::identity();
        if (codec_level) {
            input = decode(encode(item.image, codec_level->first, codec_level->second));
            if (policy == CondPolicy::true_condition)
                cond = CodecCondition::make(static_cast<int>(codec_level->first), codec_level->second);
        }
        const Tensor<float> fm = encode_features(w, input, cond);
        if (task == TaskId::coarse_class) {
            correct += probes.coarse.predict(pool_motif_tokens(fm, w.config)) == item.class_id;
            total += 1;
        } else {
            auto slots = pool_glyph_slots(fm, w.config);
            for (int s = 0; s < kGlyphSlots; ++s)
                correct += probes.fine.predict(slots[static_cast<std::size_t>(s)]) ==
                           item.glyphs[static_cast<std::size_t>(s)];
            total += kGlyphSlots;
        }
    }
    TaskResult r;
    r.task = task;
    r.n = total;
    r.accuracy = static_cast<double>(correct) / static_cast<double>(total);
    return r;
}

}  // namespace covec
