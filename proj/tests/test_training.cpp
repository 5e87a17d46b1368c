#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>

#include "hta/checkpoint.hpp"
#include "hta/corpus.hpp"
#include "hta/manifest.hpp"
#include "hta/training.hpp"

namespace hta {
namespace {

namespace fs = std::filesystem;

// Small enough to train in well under a second per epoch.
TrainConfig tiny_train_config() {
  TrainConfig cfg;
  cfg.pipeline.clip.target_rate = 8000;
  cfg.pipeline.clip.clip_seconds = 1.0;
  cfg.pipeline.features.n_fft = 256;
  cfg.pipeline.features.hop = 128;
  cfg.pipeline.features.n_mels = 16;
  cfg.model.blocks = {{4, 3, 3, 1, 1, 2, 2}, {8, 3, 3, 1, 1, 2, 2}};
  cfg.batch_size = 4;
  cfg.epochs = 3;
  return cfg;
}

Dataset tiny_dataset(std::size_t per_class, std::uint64_t seed, const ClipConfig& clip) {
  Dataset ds;
  Rng rng(seed);
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      ds.clips.push_back(condition(synth_clip(static_cast<ClassLabel>(c), 1.0, clip.target_rate, rng), clip));
      ds.labels.push_back(static_cast<int>(c));
    }
  return ds;
}

Manifest balanced(std::size_t per_class) {
  Manifest m;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t i = 0; i < per_class; ++i)
      m.push_back({std::string(kClassNames[c]) + "_" + std::to_string(i) + ".wav", static_cast<ClassLabel>(c)});
  return m;
}

TEST(Manifest, ParsesRows) {
  std::istringstream in("file_name,class_id,class_name\ncry_0001.wav,0,crying\nb.wav,3,car_noise\n");
  const auto m = parse_manifest(in);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].file_name, "cry_0001.wav");
  EXPECT_EQ(m[0].label, ClassLabel::Crying);
  EXPECT_EQ(m[1].label, ClassLabel::CarNoise);
}

ErrorCode parse_code(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_manifest(in);
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;  // sentinel: no error
}

TEST(Manifest, RejectsBadInput) {
  EXPECT_EQ(parse_code(""), ErrorCode::ParseError);
  EXPECT_EQ(parse_code("file_name,class_id,class_name\nx.wav,7,other\n"), ErrorCode::UnknownClass);
  EXPECT_EQ(parse_code("file_name,class_id,class_name\nx.wav,1,crying\n"), ErrorCode::UnknownClass);
  EXPECT_EQ(parse_code("name,id\n"), ErrorCode::ParseError);
  EXPECT_EQ(parse_code("file_name,class_id,class_name\nx.wav,one,crying\n"), ErrorCode::ParseError);
  EXPECT_EQ(parse_code("file_name,class_id,class_name\na.wav,0,crying\na.wav,0,crying\n"), ErrorCode::DuplicateFile);
}

TEST(Manifest, WriteParseRoundTrip) {
  const auto m = balanced(3);
  std::stringstream ss;
  write_manifest(ss, m);
  EXPECT_EQ(parse_manifest(ss), m);
}

TEST(Split, EightyTwentyPerClass) {
  const auto m = balanced(20);
  const auto [tr, va] = stratified_split(m, 0.8, 7);
  const auto ct = class_counts(tr), cv = class_counts(va);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    EXPECT_EQ(ct[c], 16u);
    EXPECT_EQ(cv[c], 4u);
  }
  const auto again = stratified_split(m, 0.8, 7);
  EXPECT_EQ(again.first, tr);
  EXPECT_EQ(again.second, va);
}

TEST(Split, PartitionProperty) {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    Manifest m;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const auto n = static_cast<std::size_t>(uniform_int(rng, 2, 25));
      for (std::size_t i = 0; i < n; ++i)
        m.push_back({std::to_string(c) + "/" + std::to_string(i), static_cast<ClassLabel>(c)});
    }
    const double frac = uniform(rng, 0.1, 0.9);
    const auto [tr, va] = stratified_split(m, frac, static_cast<std::uint64_t>(trial));
    std::set<std::string> a, b, all;
    for (const auto& r : tr) a.insert(r.file_name);
    for (const auto& r : va) b.insert(r.file_name);
    for (const auto& r : m) all.insert(r.file_name);
    std::set<std::string> uni = a;
    uni.insert(b.begin(), b.end());
    EXPECT_EQ(uni, all);
    EXPECT_EQ(a.size() + b.size(), all.size());
    const auto n = class_counts(m), t = class_counts(tr);
    for (std::size_t c = 0; c < kNumClasses; ++c)
      EXPECT_EQ(t[c], static_cast<std::size_t>(std::llround(frac * static_cast<double>(n[c]))));
  }
}

TEST(Split, SingletonClassRejected) {
  Manifest m = balanced(4);
  m.push_back({"lonely.wav", ClassLabel::Crying});
  m.erase(std::remove_if(m.begin(), m.end(),
                         [](const ManifestRecord& r) { return r.label == ClassLabel::Crying && r.file_name != "lonely.wav"; }),
          m.end());
  try {
    stratified_split(m, 0.8, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientClassSamples);
  }
}

TEST(Evaluation, PerfectPredictor) {
  std::vector<int> truth;
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < 4; ++i) truth.push_back(c);
  const auto rep = make_report(truth, truth);
  EXPECT_DOUBLE_EQ(rep.accuracy(), 1.0);
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t p = 0; p < kNumClasses; ++p) EXPECT_EQ(rep.confusion[c][p], c == p ? 4u : 0u);
}

TEST(Evaluation, Integrity) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 200));
    std::vector<int> truth(n), pred(n);
    for (auto& t : truth) t = static_cast<int>(uniform_int(rng, 0, 4));
    for (std::size_t i = 0; i < n; ++i) pred[i] = uniform01(rng) < 0.7 ? truth[i] : static_cast<int>(uniform_int(rng, 0, 4));
    const auto rep = make_report(truth, pred);
    std::array<std::size_t, kNumClasses> counts{};
    for (int t : truth) ++counts[static_cast<std::size_t>(t)];
    std::size_t trace = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      EXPECT_EQ(rep.row_sum(c), counts[c]);
      trace += rep.confusion[c][c];
    }
    EXPECT_DOUBLE_EQ(static_cast<double>(trace) / static_cast<double>(n), rep.accuracy());
    const auto rn = rep.row_normalized();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      if (!counts[c]) continue;
      double s = 0.0;
      for (double v : rn[c]) s += v;
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
  const std::vector<int> bad_t{0, 9}, bad_p{0, 0};
  EXPECT_THROW(make_report(bad_t, bad_p), Error);
}

TEST(Evaluation, JsonShape) {
  const std::vector<int> t{0, 1, 2, 3, 4, 4}, p{0, 1, 2, 3, 4, 3};
  const auto j = make_report(t, p).to_json();
  EXPECT_NEAR(j.at("accuracy").get<double>(), 5.0 / 6.0, 1e-12);
  ASSERT_EQ(j.at("confusion").size(), 5u);
  for (const auto& row : j.at("confusion")) EXPECT_EQ(row.size(), 5u);
  EXPECT_EQ(j.at("confusion")[4][3].get<int>(), 1);
}

TEST(Training, ZeroEpochsReturnsInitialWeights) {
  auto cfg = tiny_train_config();
  cfg.epochs = 0;
  const auto ds = tiny_dataset(2, 1, cfg.pipeline.clip);
  auto res = train(cfg, ds);
  EXPECT_TRUE(res.history.epochs.empty());
  Model<float> init(cfg.model);
  Rng rng(cfg.seed);
  init.init(rng);
  EXPECT_EQ(encode_checkpoint(res.model), encode_checkpoint(init));
}

TEST(Training, Deterministic) {
  auto cfg = tiny_train_config();
  const auto ds = tiny_dataset(4, 2, cfg.pipeline.clip);
  auto a = train(cfg, ds);
  auto b = train(cfg, ds);
  ASSERT_EQ(a.history.epochs.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const double la = a.history.epochs[i].loss, lb = b.history.epochs[i].loss;
    EXPECT_EQ(0, std::memcmp(&la, &lb, sizeof(double)));
  }
  EXPECT_EQ(encode_checkpoint(a.model), encode_checkpoint(b.model));
  cfg.seed = 8;
  auto c = train(cfg, ds);
  EXPECT_NE(encode_checkpoint(c.model), encode_checkpoint(a.model));
}

TEST(Training, LearnsTinySynthetic) {
  auto cfg = tiny_train_config();
  cfg.epochs = 30;
  cfg.lr = 0.05;
  const auto ds = tiny_dataset(6, 3, cfg.pipeline.clip);
  auto res = train(cfg, ds);
  EXPECT_LT(res.history.epochs.back().loss, res.history.epochs.front().loss);
  EXPECT_GT(evaluate(res.model, ds, cfg.pipeline).accuracy(), 0.6);
}

TEST(Training, TargetAccuracyStopsEarly) {
  auto cfg = tiny_train_config();
  cfg.epochs = 50;
  cfg.target_train_accuracy = 0.0;
  const auto ds = tiny_dataset(2, 4, cfg.pipeline.clip);
  EXPECT_EQ(train(cfg, ds).history.epochs.size(), 1u);
  cfg.target_train_accuracy.reset();
  cfg.target_val_accuracy = 0.5;
  EXPECT_THROW(train(cfg, ds), Error);
}

TEST(Training, HistoryCsv) {
  History h;
  h.epochs.push_back({1, 1.5, 0.25, std::nullopt});
  h.epochs.push_back({2, 0.125, 0.5, 0.75});
  std::ostringstream os;
  write_history_csv(os, h);
  EXPECT_EQ(os.str(), "epoch,loss,train_accuracy\n1,1.5,0.25\n2,0.125,0.5\n");
}

TEST(Training, FromManifestOnDisk) {
  const fs::path dir = fs::temp_directory_path() / "hta_train_manifest";
  fs::remove_all(dir);
  CorpusSpec spec;
  spec.clips_per_class = 2;
  spec.rate = 8000;
  const auto m = synth_corpus(spec, dir);
  auto cfg = tiny_train_config();
  cfg.epochs = 1;
  auto res = train(cfg, m, dir, &m);
  ASSERT_EQ(res.history.epochs.size(), 1u);
  EXPECT_TRUE(res.history.epochs[0].val_accuracy.has_value());
  const auto rep = evaluate(res.model, m, dir, cfg.pipeline);
  EXPECT_EQ(rep.total, 10u);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace hta
