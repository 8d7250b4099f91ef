#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "covec/codec.hpp"
#include "covec/encoder.hpp"
#include "covec/png_io.hpp"

namespace covec {

enum class TrainableSet { adaptor_only, full_encoder };

inline const char* trainable_name(TrainableSet t) {
    return t == TrainableSet::adaptor_only ? "adaptor-only" : "full-encoder";
}

inline TrainableSet trainable_from_name(const std::string& s) {
    if (s == "adaptor-only") return TrainableSet::adaptor_only;
    if (s == "full-encoder") return TrainableSet::full_encoder;
    throw ConfigError("unknown trainable set: " + s);
}

struct TrainConfig {
    int steps = 2000;
    int batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = kDefaultSeed;
    TrainableSet trainable = TrainableSet::full_encoder;
    double heldout_fraction = 0.125;

    void validate() const {
        if (steps < 0) throw ConfigError("train config: steps must be >= 0");
        if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
        if (!(lr > 0)) throw ConfigError("train config: lr must be positive");
        if (!(heldout_fraction > 0) || heldout_fraction >= 0.5)
            throw ConfigError("train config: heldout fraction must be in (0, 0.5)");
    }
};

struct TrainRecord {
    int step = 0;
    double loss = 0;
    double seconds = 0;
};

// One corpus entry: a clean image and one compressed rendition of it.
struct ManifestEntry {
    std::string image_path;
    int codec_id = 0;
    int level = 0;
    std::string artifact_path;
};

inline void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& e : entries)
        j.push_back({{"image_path", e.image_path},
                     {"codec_id", e.codec_id},
                     {"level", e.level},
                     {"artifact_path", e.artifact_path}});
    std::ofstream f(path);
    if (!f) throw IoError("manifest: cannot open for writing: " + path);
    f << j.dump(2) << '\n';
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("manifest: cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest: parse error in " + path + ": " + e.what());
    }
    if (!j.is_array()) throw IoError("manifest: expected a JSON array");
    std::vector<ManifestEntry> entries;
    for (const auto& item : j) {
        ManifestEntry e;
        e.image_path = item.at("image_path").get<std::string>();
        e.codec_id = item.at("codec_id").get<int>();
        e.level = item.at("level").get<int>();
        e.artifact_path = item.at("artifact_path").get<std::string>();
        CodecCondition::make(e.codec_id, e.level);  // range check
        entries.push_back(std::move(e));
    }
    return entries;
}

// Mean squared difference between two feature maps; the training objective.
template <typename T>
double distill_loss(const Tensor<T>& student, const Tensor<T>& teacher) {
    Tape<T> tape;
    return static_cast<double>(tape.mse(student, teacher).data[0]);
}

// The adaptor is bilinear: the angle offset is (one-hot x table) x
// projection. With both factors zero its gradient vanishes identically, so
// training would never leave the identity point. Seeding the projection
// breaks the saddle while the zero table still guarantees an exact identity
// start (a zero embedding zeroes the offset regardless of the projection).
template <typename T>
void seed_adaptor_projection(EncoderWeights<T>& w, std::uint64_t seed) {
    Rng rng = Rng(seed).fork(0x50484153);  // "PHAS"
    const double scale = 1.0 / std::sqrt(static_cast<double>(w.config.dim));
    for (auto& v : w.phase_proj.data) v = static_cast<T>(rng.normal() * scale);
}

template <typename T>
struct DistillBatchItem {
    const RawImage* input = nullptr;        // decoded compressed image
    CodecCondition cond;                    // which codec produced it
    const Tensor<T>* teacher = nullptr;     // frozen features of the clean image
};

// Adam-backed distillation trainer. The teacher is never touched: only its
// precomputed features enter the loss, as constants.
template <typename T>
class DistillTrainer {
public:
    DistillTrainer(EncoderWeights<T> student, TrainableSet trainable, double lr)
        : weights_(std::move(student)), trainable_(trainable), lr_(static_cast<T>(lr)) {
        collect(weights_, params_);
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->numel(), T(0));
            v_[i].assign(params_[i]->numel(), T(0));
        }
    }

    const EncoderWeights<T>& weights() const { return weights_; }

    // One gradient step on the batch-averaged loss; returns that loss.
    double step(const std::vector<DistillBatchItem<T>>& batch) {
        if (batch.empty()) throw ConfigError("train step: empty batch");
        Tape<T> tape;
        EncoderWeights<T> taped = weights_;
        std::vector<Tensor<T>*> taped_params;
        collect(taped, taped_params);
        for (Tensor<T>* p : taped_params) *p = tape.param(*p);

        Tensor<T> loss;
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const DistillBatchItem<T>& item = batch[i];
            Tensor<T> features = encode_features(tape, taped, *item.input, item.cond);
            Tensor<T> item_loss = tape.mse(features, *item.teacher);
            loss = (i == 0) ? item_loss : tape.add(loss, item_loss);
        }
        loss = tape.mul(loss, Tensor<T>::scalar(T(1) / static_cast<T>(batch.size())));
        if (!is_finite_value(loss.data[0]))
            throw NumericError("train step: non-finite batch loss");
        tape.backward(loss);

        ++t_;
        const T beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);
        const T bc1 = T(1) - static_cast<T>(std::pow(0.9, static_cast<double>(t_)));
        const T bc2 = T(1) - static_cast<T>(std::pow(0.999, static_cast<double>(t_)));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const Tensor<T> g = tape.grad(*taped_params[i]);
            std::vector<T>& m = m_[i];
            std::vector<T>& v = v_[i];
            std::vector<T>& w = params_[i]->data;
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = beta1 * m[j] + (T(1) - beta1) * g.data[j];
                v[j] = beta2 * v[j] + (T(1) - beta2) * g.data[j] * g.data[j];
                w[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
            }
        }
        return static_cast<double>(loss.data[0]);
    }

private:
    void collect(EncoderWeights<T>& w, std::vector<Tensor<T>*>& out) {
        out.clear();
        if (trainable_ == TrainableSet::adaptor_only)
            w.for_each_adaptor_param([&](const char*, Tensor<T>& t) { out.push_back(&t); });
        else
            w.for_each_param([&](const char*, Tensor<T>& t) { out.push_back(&t); });
    }

    EncoderWeights<T> weights_;
    TrainableSet trainable_;
    T lr_;
    std::vector<Tensor<T>*> params_;
    std::vector<std::vector<T>> m_, v_;
    std::int64_t t_ = 0;
};

struct TrainResult {
    EncoderWeights<float> weights;
    std::vector<TrainRecord> records;
    double initial_heldout_loss = 0;
    double final_heldout_loss = 0;
};

namespace detail {

inline std::string resolve(const std::string& root, const std::string& rel) {
    namespace fs = std::filesystem;
    const fs::path p(rel);
    return p.is_absolute() ? rel : (fs::path(root) / p).string();
}

}  // namespace detail

// Trains the conditioned student against the frozen teacher over a corpus
// manifest. Paths in the manifest resolve relative to `root_dir`.
inline TrainResult train_adaptor(const TrainConfig& cfg, const std::vector<ManifestEntry>& manifest,
                                 const EncoderWeights<float>& teacher, const std::string& root_dir) {
    cfg.validate();
    if (manifest.empty()) throw ConfigError("train_adaptor: empty manifest");

    // Condition coverage: every (codec, level) cell must appear.
    std::set<std::pair<int, int>> present;
    for (const auto& e : manifest) present.insert({e.codec_id, e.level});
    std::set<int> missing_codecs;
    std::vector<std::string> missing_cells;
    for (int c = 0; c < teacher.config.codecs; ++c) {
        bool any = false;
        for (int l = 0; l < teacher.config.levels; ++l) any = any || present.count({c, l});
        if (!any) missing_codecs.insert(c);
    }
    for (int c = 0; c < teacher.config.codecs; ++c)
        for (int l = 0; l < teacher.config.levels; ++l)
            if (!present.count({c, l}) && !missing_codecs.count(c))
                missing_cells.push_back("(" + std::string(codec_name(static_cast<CodecId>(c))) + ", level " +
                                        std::to_string(l) + ")");
    if (!missing_codecs.empty() || !missing_cells.empty()) {
        std::string msg = "train_adaptor: corpus does not cover all conditions:";
        for (int c : missing_codecs)
            msg += " codec " + std::to_string(c) + " (" + codec_name(static_cast<CodecId>(c)) + ") absent;";
        for (const auto& cell : missing_cells) msg += " " + cell + " absent;";
        throw ConfigError(msg);
    }

    // Load unique clean images, decode artifacts, cache teacher features.
    std::map<std::string, std::size_t> image_index;
    std::vector<RawImage> images;
    std::vector<Tensor<float>> teacher_features;
    for (const auto& e : manifest)
        if (!image_index.count(e.image_path)) {
            image_index[e.image_path] = images.size();
            images.push_back(png_read(detail::resolve(root_dir, e.image_path)));
            teacher_features.push_back(encode_features(teacher, images.back()));
        }
    struct Sample {
        std::size_t image;
        CodecCondition cond;
        RawImage decoded;
    };
    std::vector<Sample> samples;
    samples.reserve(manifest.size());
    for (const auto& e : manifest) {
        Sample s;
        s.image = image_index.at(e.image_path);
        s.cond = CodecCondition::make(e.codec_id, e.level);
        s.decoded = decode(load_cga(detail::resolve(root_dir, e.artifact_path)));
        samples.push_back(std::move(s));
    }

    // Held-out split over unique images, seeded.
    Rng split_rng = Rng(cfg.seed).fork(0x48454c44);  // "HELD"
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[split_rng.below(i)]);
    const std::size_t heldout_count =
        std::max<std::size_t>(1, static_cast<std::size_t>(static_cast<double>(images.size()) *
                                                          cfg.heldout_fraction));
    std::set<std::size_t> heldout(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(heldout_count));

    // Per-condition sample lists over the training images.
    const int cells = teacher.config.codecs * teacher.config.levels;
    std::vector<std::vector<std::size_t>> by_condition(static_cast<std::size_t>(cells));
    std::vector<std::size_t> heldout_samples;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (heldout.count(samples[i].image)) heldout_samples.push_back(i);
        else by_condition[static_cast<std::size_t>(samples[i].cond.onehot_index())].push_back(i);
    }
    for (int c = 0; c < cells; ++c)
        if (by_condition[static_cast<std::size_t>(c)].empty())
            throw ConfigError("train_adaptor: condition " + std::to_string(c) +
                              " has no training samples after the held-out split");

    auto heldout_loss = [&](const EncoderWeights<float>& w) {
        double total = 0;
        for (std::size_t i : heldout_samples) {
            const Sample& s = samples[i];
            total += distill_loss(encode_features(w, s.decoded, s.cond),
                                  teacher_features[s.image]);
        }
        return heldout_samples.empty() ? 0.0 : total / static_cast<double>(heldout_samples.size());
    };

    TrainResult result;
    EncoderWeights<float> student = teacher;
    seed_adaptor_projection(student, cfg.seed);
    DistillTrainer<float> trainer(std::move(student), cfg.trainable, cfg.lr);
    result.initial_heldout_loss = heldout_loss(trainer.weights());

    // Training images for the identity anchor (clean input, identity
    // condition, own teacher features as target).
    std::vector<std::size_t> anchor_pool;
    for (std::size_t i = 0; i < images.size(); ++i)
        if (!heldout.count(i)) anchor_pool.push_back(i);

    Rng batch_rng = Rng(cfg.seed).fork(0x42415443);  // "BATC"
    const auto start = std::chrono::steady_clock::now();
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<DistillBatchItem<float>> batch;
        batch.reserve(static_cast<std::size_t>(cfg.batch_size));
        for (int b = 0; b < cfg.batch_size; ++b) {
            // Uniform over conditions plus an identity-anchor share that
            // keeps the student pinned to the teacher on clean inputs.
            const auto slot = batch_rng.below(static_cast<std::uint64_t>(cells) + cells / 4);
            if (slot >= static_cast<std::uint64_t>(cells)) {
                const std::size_t img = anchor_pool[batch_rng.below(anchor_pool.size())];
                batch.push_back({&images[img], CodecCondition::identity(), &teacher_features[img]});
                continue;
            }
            const auto& pool = by_condition[static_cast<std::size_t>(slot)];
            const Sample& s = samples[pool[batch_rng.below(pool.size())]];
            batch.push_back({&s.decoded, s.cond, &teacher_features[s.image]});
        }
        const double loss = trainer.step(batch);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        result.records.push_back({step, loss, secs});
    }

    result.final_heldout_loss = heldout_loss(trainer.weights());
    result.weights = trainer.weights();
    return result;
}

inline void save_train_log(const std::vector<TrainRecord>& records, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("train log: cannot open for writing: " + path);
    f << "step,loss,seconds\n";
    f.precision(9);
    for (const auto& r : records) f << r.step << ',' << r.loss << ',' << r.seconds << '\n';
}

}  // namespace covec
