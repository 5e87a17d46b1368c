#pragma once

// Training loop and evaluation.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hta/audio.hpp"
#include "hta/error.hpp"
#include "hta/features.hpp"
#include "hta/labels.hpp"
#include "hta/layers.hpp"
#include "hta/manifest.hpp"
#include "hta/model.hpp"
#include "hta/random.hpp"

namespace hta {

/// Clip conditioning plus featurization; shared by training, evaluation and
/// streaming detection so that all three see identical inputs.
struct PipelineConfig {
  ClipConfig clip;
  FeatureConfig features;

  void validate() const {
    clip.validate();
    features.validate(clip.target_rate);
  }
};

struct TrainConfig {
  PipelineConfig pipeline;
  ModelConfig model;
  std::size_t epochs = 100;
  std::size_t batch_size = 16;
  double train_frac = 0.8;
  double lr = 0.01;
  std::uint64_t seed = 7;
  bool augment = true;
  /// Stop once validation accuracy reaches this value (needs a validation set).
  std::optional<double> target_val_accuracy;
  /// Stop once an epoch's training accuracy reaches this value.
  std::optional<double> target_train_accuracy;

  void validate() const {
    pipeline.validate();
    model.validate();
    if (batch_size == 0) fail(ErrorCode::ConfigError, "batch_size must be >= 1");
    if (!(train_frac > 0 && train_frac < 1)) fail(ErrorCode::ConfigError, "train_frac must lie in (0, 1)");
    if (!(lr > 0)) fail(ErrorCode::ConfigError, "lr must be > 0");
  }
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
};

struct History {
  std::vector<EpochStats> epochs;

  std::vector<double> losses() const {
    std::vector<double> v;
    for (const auto& e : epochs) v.push_back(e.loss);
    return v;
  }
};

inline void write_history_csv(std::ostream& out, const History& h) {
  out << "epoch,loss,train_accuracy\n";
  out << std::setprecision(17);
  for (const auto& e : h.epochs) out << e.epoch << ',' << e.loss << ',' << e.train_accuracy << '\n';
}

inline void save_history_csv(const std::filesystem::path& path, const History& h) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_history_csv(out, h);
}

/// Conditioned clips with their labels, held in memory.
struct Dataset {
  std::vector<AudioClip> clips;
  std::vector<int> labels;

  std::size_t size() const { return clips.size(); }
};

inline Dataset load_dataset(const Manifest& m, const std::filesystem::path& data_dir,
                            const ClipConfig& clip_cfg) {
  Dataset ds;
  ds.clips.reserve(m.size());
  for (const auto& r : m) {
    ds.clips.push_back(condition(load_wav(data_dir / r.file_name), clip_cfg));
    ds.labels.push_back(class_id(r.label));
  }
  return ds;
}

inline std::size_t argmax_row(const Tensor<float>& logits, std::size_t row) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.dim(1); ++c)
    if (logits.at(row, c) > logits.at(row, best)) best = c;
  return best;
}

/// Eval-mode predictions over precomputed feature maps.
inline std::vector<int> predict(const Model<float>& model, const std::vector<FeatureMap>& maps,
                                std::size_t batch_size = 8) {
  std::vector<int> out;
  out.reserve(maps.size());
  for (std::size_t start = 0; start < maps.size(); start += batch_size) {
    const std::size_t end = std::min(maps.size(), start + batch_size);
    std::vector<FeatureMap> chunk(maps.begin() + static_cast<std::ptrdiff_t>(start),
                                  maps.begin() + static_cast<std::ptrdiff_t>(end));
    const Tensor<float> logits = model.infer(make_batch<float>(chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) out.push_back(static_cast<int>(argmax_row(logits, i)));
  }
  return out;
}

struct EvalReport {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};  // [true][pred]
  std::size_t total = 0;
  std::size_t correct = 0;
  std::vector<int> predictions;

  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }

  std::size_t row_sum(std::size_t c) const {
    return std::accumulate(confusion[c].begin(), confusion[c].end(), std::size_t{0});
  }

  /// Recall per true class; 0 for classes without samples.
  std::array<double, kNumClasses> recall() const {
    std::array<double, kNumClasses> r{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const std::size_t n = row_sum(c);
      r[c] = n ? static_cast<double>(confusion[c][c]) / static_cast<double>(n) : 0.0;
    }
    return r;
  }

  /// Rows divided by their sums (rows without samples stay zero).
  std::array<std::array<double, kNumClasses>, kNumClasses> row_normalized() const {
    std::array<std::array<double, kNumClasses>, kNumClasses> out{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const std::size_t n = row_sum(c);
      for (std::size_t p = 0; p < kNumClasses; ++p)
        out[c][p] = n ? static_cast<double>(confusion[c][p]) / static_cast<double>(n) : 0.0;
    }
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json conf = nlohmann::json::array();
    for (const auto& row : confusion) conf.push_back(row);
    nlohmann::json rec = nlohmann::json::object();
    const auto r = recall();
    for (std::size_t c = 0; c < kNumClasses; ++c) rec[std::string(kClassNames[c])] = r[c];
    return {{"accuracy", accuracy()},
            {"total", total},
            {"classes", kClassNames},
            {"confusion", conf},
            {"recall", rec}};
  }

  std::string to_text() const {
    std::ostringstream os;
    os << std::left << std::setw(18) << "true \\ predicted";
    for (auto n : kClassNames) os << std::setw(18) << n;
    os << std::setw(10) << "recall" << '\n';
    const auto r = recall();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      os << std::setw(18) << kClassNames[c];
      for (std::size_t p = 0; p < kNumClasses; ++p) os << std::setw(18) << confusion[c][p];
      os << std::fixed << std::setprecision(3) << r[c] << '\n';
    }
    os << "accuracy " << std::fixed << std::setprecision(4) << accuracy() << " (" << correct << '/'
       << total << ")\n";
    return os.str();
  }
};

inline EvalReport make_report(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) fail(ErrorCode::ShapeMismatch, "truth/prediction length mismatch");
  EvalReport rep;
  rep.total = truth.size();
  rep.predictions.assign(predicted.begin(), predicted.end());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!label_from_id(truth[i]) || !label_from_id(predicted[i]))
      fail(ErrorCode::LabelOutOfRange, "label outside 0..4");
    ++rep.confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    if (truth[i] == predicted[i]) ++rep.correct;
  }
  return rep;
}

inline std::vector<FeatureMap> featurize(const FeatureExtractor& fx, const Dataset& ds) {
  std::vector<FeatureMap> maps;
  maps.reserve(ds.size());
  for (const auto& c : ds.clips) maps.push_back(extract_features(fx, c));
  return maps;
}

/// Un-augmented evaluation of a loaded dataset.
inline EvalReport evaluate(const Model<float>& model, const Dataset& ds, const PipelineConfig& pipe) {
  pipe.validate();
  const FeatureExtractor fx(pipe.features, pipe.clip.target_rate);
  return make_report(ds.labels, predict(model, featurize(fx, ds)));
}

inline EvalReport evaluate(const Model<float>& model, const Manifest& m,
                           const std::filesystem::path& data_dir, const PipelineConfig& pipe) {
  return evaluate(model, load_dataset(m, data_dir, pipe.clip), pipe);
}

struct TrainResult {
  Model<float> model;
  History history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch SGD over a seeded per-epoch shuffle. Training clips get a
/// circular time shift and spectrogram masks when cfg.augment is set.
inline TrainResult train(const TrainConfig& cfg, const Dataset& train_set,
                         const Dataset* val_set = nullptr, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() == 0) fail(ErrorCode::ConfigError, "empty training set");
  if (cfg.target_val_accuracy && !val_set)
    fail(ErrorCode::ConfigError, "a validation accuracy target needs a validation set");

  Rng init_rng(cfg.seed);
  Rng data_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  TrainResult res{Model<float>(cfg.model), {}};
  res.model.init(init_rng);

  const FeatureExtractor fx(cfg.pipeline.features, cfg.pipeline.clip.target_rate);
  std::vector<FeatureMap> val_maps;
  if (val_set) val_maps = featurize(fx, *val_set);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order.begin(), order.end(), data_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::vector<FeatureMap> maps;
      std::vector<int> labels;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        if (cfg.augment) {
          const AudioClip shifted = time_shift(train_set.clips[idx], cfg.pipeline.clip.shift_frac, data_rng);
          maps.push_back(extract_features(fx, shifted, &data_rng));
        } else {
          maps.push_back(extract_features(fx, train_set.clips[idx]));
        }
        labels.push_back(train_set.labels[idx]);
      }
      const Tensor<float> logits = res.model.forward(make_batch<float>(maps), Mode::Train);
      const auto ce = cross_entropy(logits, std::span<const int>(labels));
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (static_cast<int>(argmax_row(logits, i)) == labels[i]) ++correct;
      loss_sum += ce.loss * static_cast<double>(labels.size());
      res.model.backward(ce.grad);
      res.model.sgd_step(cfg.lr);
    }
    res.model.release_activations();

    EpochStats st;
    st.epoch = epoch;
    st.loss = loss_sum / static_cast<double>(order.size());
    st.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
    if (val_set) st.val_accuracy = make_report(val_set->labels, predict(res.model, val_maps)).accuracy();
    res.history.epochs.push_back(st);
    if (on_epoch) on_epoch(st);

    if (cfg.target_val_accuracy && st.val_accuracy && *st.val_accuracy >= *cfg.target_val_accuracy) break;
    if (cfg.target_train_accuracy && st.train_accuracy >= *cfg.target_train_accuracy) break;
  }
  return res;
}

inline TrainResult train(const TrainConfig& cfg, const Manifest& manifest,
                         const std::filesystem::path& data_dir, const Manifest* val_manifest = nullptr,
                         const EpochCallback& on_epoch = {}) {
  const Dataset tr = load_dataset(manifest, data_dir, cfg.pipeline.clip);
  if (val_manifest) {
    const Dataset va = load_dataset(*val_manifest, data_dir, cfg.pipeline.clip);
    return train(cfg, tr, &va, on_epoch);
  }
  return train(cfg, tr, nullptr, on_epoch);
}

}  // namespace hta
