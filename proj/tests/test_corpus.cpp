#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "hta/corpus.hpp"
#include "hta/features.hpp"

namespace hta {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / name;
  fs::remove_all(d);
  return d;
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) { return read_file_bytes(p); }

TEST(Corpus, DeterministicAndBalanced) {
  CorpusSpec spec;
  spec.clips_per_class = 3;
  spec.rate = 8000;
  const auto a = fresh_dir("hta_corpus_a"), b = fresh_dir("hta_corpus_b");
  const auto ma = synth_corpus(spec, a);
  const auto mb = synth_corpus(spec, b);
  EXPECT_EQ(ma, mb);
  ASSERT_EQ(ma.size(), 15u);
  for (auto n : class_counts(ma)) EXPECT_EQ(n, 3u);
  for (const auto& r : ma) {
    EXPECT_EQ(bytes_of(a / r.file_name), bytes_of(b / r.file_name)) << r.file_name;
    const auto clip = load_wav(a / r.file_name);
    EXPECT_GE(clip.duration(), 2.0 - 1e-3);
    EXPECT_LE(clip.duration(), 3.0 + 1e-3);
    EXPECT_EQ(clip.rate, 8000.0);
  }
  EXPECT_EQ(bytes_of(a / "manifest.csv"), bytes_of(b / "manifest.csv"));
  EXPECT_EQ(load_manifest(a / "manifest.csv"), ma);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Corpus, SeedChangesAudio) {
  CorpusSpec s1, s2;
  s1.rate = s2.rate = 8000;
  s2.seed = s1.seed + 1;
  EXPECT_NE(synth_clip(s1, ClassLabel::Screaming, 0), synth_clip(s2, ClassLabel::Screaming, 0));
  EXPECT_EQ(synth_clip(s1, ClassLabel::Screaming, 4), synth_clip(s1, ClassLabel::Screaming, 4));
}

double crest(const AudioClip& c) {
  double peak = 0, sq = 0;
  for (float v : c.channels[0]) {
    peak = std::max(peak, static_cast<double>(std::abs(v)));
    sq += static_cast<double>(v) * v;
  }
  return peak / std::sqrt(sq / static_cast<double>(c.frames()));
}

TEST(Corpus, DoorBangIsMoreImpulsiveThanCarNoise) {
  CorpusSpec spec;
  for (std::size_t i = 0; i < 10; ++i)
    EXPECT_GT(crest(synth_clip(spec, ClassLabel::CarDoorBanging, i)), crest(synth_clip(spec, ClassLabel::CarNoise, i)));
}

TEST(Corpus, ClassCentroidsSeparate) {
  // Mean log-mel band profile per clip (averaged over time and channels).
  CorpusSpec spec;
  spec.clips_per_class = 8;
  ClipConfig clip_cfg;
  FeatureExtractor fx(FeatureConfig{}, clip_cfg.target_rate);
  std::array<std::vector<std::vector<double>>, kNumClasses> profiles;
  for (std::size_t c = 0; c < kNumClasses; ++c)
    for (std::size_t i = 0; i < spec.clips_per_class; ++i) {
      const auto fm = fx.log_mel(condition(synth_clip(spec, static_cast<ClassLabel>(c), i), clip_cfg));
      std::vector<double> p(fm.bands, 0.0);
      for (std::size_t ch = 0; ch < 2; ++ch)
        for (std::size_t m = 0; m < fm.bands; ++m)
          for (std::size_t t = 0; t < fm.frames; ++t) p[m] += fm.at(ch, m, t) / (2.0 * static_cast<double>(fm.frames));
      profiles[c].push_back(std::move(p));
    }
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  std::array<std::vector<double>, kNumClasses> centroid;
  std::array<double, kNumClasses> scatter{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    centroid[c].assign(64, 0.0);
    for (const auto& p : profiles[c])
      for (std::size_t m = 0; m < 64; ++m) centroid[c][m] += p[m] / static_cast<double>(profiles[c].size());
    for (const auto& p : profiles[c]) scatter[c] = std::max(scatter[c], dist(p, centroid[c]));
  }
  for (std::size_t a = 0; a < kNumClasses; ++a)
    for (std::size_t b = a + 1; b < kNumClasses; ++b)
      EXPECT_GT(dist(centroid[a], centroid[b]), std::max(scatter[a], scatter[b]))
          << kClassNames[a] << " vs " << kClassNames[b];
}

TEST(Ingest, FiveFoldersOfThree) {
  const auto dir = fresh_dir("hta_ingest_ok");
  Rng rng(1);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    fs::create_directories(dir / std::string(kClassNames[c]));
    for (int i = 0; i < 3; ++i)
      save_wav(dir / std::string(kClassNames[c]) / ("f" + std::to_string(i) + ".wav"),
               AudioClip::from_mono(std::vector<float>(100, 0.1f), 8000));
  }
  std::ofstream(dir / "crying" / "notes.txt") << "ignored";
  const auto res = ingest(dir);
  EXPECT_EQ(res.manifest.size(), 15u);
  EXPECT_TRUE(res.warnings.empty());
  EXPECT_EQ(res.manifest[0].file_name, "car_door_banging/f0.wav");  // folders in sorted order
  fs::remove_all(dir);
}

TEST(Ingest, EmptyDirectory) {
  const auto dir = fresh_dir("hta_ingest_empty");
  fs::create_directories(dir);
  try {
    ingest(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoAudioFound);
  }
  fs::remove_all(dir);
}

TEST(Ingest, SkipsCorruptFile) {
  const auto dir = fresh_dir("hta_ingest_corrupt");
  fs::create_directories(dir / "screaming");
  for (int i = 0; i < 9; ++i)
    save_wav(dir / "screaming" / ("s" + std::to_string(i) + ".wav"), AudioClip::from_mono({0.1f, 0.2f}, 8000));
  std::ofstream(dir / "screaming" / "s9.wav") << "not a wav file";
  const auto res = ingest(dir);
  EXPECT_EQ(res.manifest.size(), 9u);
  ASSERT_EQ(res.warnings.size(), 1u);
  EXPECT_NE(res.warnings[0].find("s9.wav"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Ingest, CustomMapping) {
  const auto dir = fresh_dir("hta_ingest_map");
  fs::create_directories(dir / "cry");
  save_wav(dir / "cry" / "a.wav", AudioClip::from_mono({0.5f}, 8000));
  const auto res = ingest(dir, {{"cry", ClassLabel::Crying}});
  ASSERT_EQ(res.manifest.size(), 1u);
  EXPECT_EQ(res.manifest[0].label, ClassLabel::Crying);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace hta
