#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "hta/features.hpp"
#include "hta/fft.hpp"

namespace hta {
namespace {

std::vector<double> random_signal(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = uniform(rng, -1.0, 1.0);
  return x;
}

TEST(Fft, ImpulseAndConstant) {
  const std::vector<double> impulse{1, 0, 0, 0};
  for (const auto& v : fft(impulse)) EXPECT_NEAR(std::abs(v - cplx(1, 0)), 0.0, 1e-12);
  const std::vector<double> ones{1, 1, 1, 1};
  const auto x = fft(ones);
  EXPECT_NEAR(std::abs(x[0] - cplx(4, 0)), 0.0, 1e-12);
  for (int k = 1; k < 4; ++k) EXPECT_NEAR(std::abs(x[k]), 0.0, 1e-12);
}

TEST(Fft, CosineLandsInTwoBins) {
  std::vector<double> x(8);
  for (int n = 0; n < 8; ++n) x[n] = std::cos(2 * std::numbers::pi * 2 * n / 8);
  const auto X = fft(x);
  for (int k = 0; k < 8; ++k) EXPECT_NEAR(std::abs(X[k]), (k == 2 || k == 6) ? 4.0 : 0.0, 1e-9);
}

TEST(Fft, MatchesDoubleSumOracle) {
  Rng rng(42);
  for (std::size_t n = 2; n <= 64; ++n) {
    for (int trial = 0; trial < 3; ++trial) {
      const auto x = random_signal(rng, n);
      const auto fast = fft(x);
      const auto slow = dft_oracle(x);
      double err = 0.0;
      for (std::size_t k = 0; k < n; ++k) err = std::max(err, std::abs(fast[k] - slow[k]));
      ASSERT_LT(err, 1e-6) << "n=" << n;
    }
  }
}

TEST(Fft, LargeNonPowerOfTwo) {
  Rng rng(3);
  const auto x = random_signal(rng, 1000);
  const auto fast = fft(x);
  const auto slow = dft_oracle(x);
  for (std::size_t k = 0; k < x.size(); ++k) ASSERT_LT(std::abs(fast[k] - slow[k]), 1e-8);
}

TEST(Fft, Parseval) {
  Rng rng(8);
  for (std::size_t n : {2u, 16u, 64u, 100u, 2048u}) {
    const auto x = random_signal(rng, n);
    const auto X = fft(x);
    double et = 0, ef = 0;
    for (double v : x) et += v * v;
    for (const auto& v : X) ef += std::norm(v);
    EXPECT_NEAR(ef / static_cast<double>(n), et, 1e-6 * et) << "n=" << n;
  }
}

TEST(Stft, FrameCount) {
  FeatureConfig cfg;
  EXPECT_EQ(frame_count(132300, 512), 259u);
  std::vector<float> x(132300, 0.0f);
  const auto s = stft(x, cfg);
  EXPECT_EQ(s.frames, 259u);
  EXPECT_EQ(s.bins, 1025u);
  for (double v : s.data) ASSERT_EQ(v, 0.0);
}

TEST(Stft, BinCenteredSineConcentrates) {
  FeatureConfig cfg;
  cfg.n_fft = 64;
  cfg.hop = 64;
  cfg.window = WindowKind::Rectangular;
  cfg.n_mels = 4;  // the filterbank is built even though only magnitudes are read
  const double rate = 6400.0;
  const int bin = 5;
  std::vector<float> x(64 * 8);
  for (std::size_t n = 0; n < x.size(); ++n)
    x[n] = static_cast<float>(std::sin(2 * std::numbers::pi * bin * static_cast<double>(n) / 64.0));
  const auto s = stft(x, cfg, rate);
  // Interior frames see a full period-aligned window.
  for (std::size_t t = 1; t + 1 < s.frames; ++t) {
    double total = 0.0;
    for (std::size_t k = 0; k < s.bins; ++k) total += s.at(k, t) * s.at(k, t);
    EXPECT_GT(s.at(bin, t) * s.at(bin, t) / total, 0.999);
    EXPECT_NEAR(s.at(bin, t), 32.0, 1e-3);
  }
}

TEST(Mel, ScaleValues) {
  EXPECT_DOUBLE_EQ(hz_to_mel(0.0), 0.0);
  EXPECT_NEAR(hz_to_mel(700.0), 781.17, 0.01);
  EXPECT_NEAR(hz_to_mel(1000.0), 1000.0, 0.1);
  for (double f : {10.0, 440.0, 8000.0, 22050.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-9 * f);
}

TEST(Mel, FilterbankShapeAndPeaks) {
  FeatureConfig cfg;
  const auto fb = mel_filterbank(cfg, 44100.0);
  EXPECT_EQ(fb.bands, 64u);
  EXPECT_EQ(fb.bins, 1025u);
  for (std::size_t m = 0; m < fb.bands; ++m) {
    double peak = 0;
    for (std::size_t k = 0; k < fb.bins; ++k) {
      ASSERT_GE(fb.at(m, k), 0.0);
      peak = std::max(peak, fb.at(m, k));
    }
    EXPECT_LE(peak, 1.0 + 1e-12);
    EXPECT_GT(peak, 0.0);
  }
}

TEST(Mel, EmptyFilterRejected) {
  FeatureConfig cfg;
  cfg.n_fft = 64;
  cfg.n_mels = 128;
  EXPECT_THROW(mel_filterbank(cfg, 44100.0), Error);
}

AudioClip tone(double seconds, double amp, double freq = 440.0) {
  const auto n = static_cast<std::size_t>(seconds * 44100.0);
  std::vector<float> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * static_cast<double>(i) / 44100.0));
  return AudioClip::from_mono(std::move(x), 44100.0);
}

TEST(LogMel, ShapeOfThreeSecondClip) {
  const auto fm = log_mel_spectrogram(tone(3.0, 0.5), FeatureConfig{});
  EXPECT_EQ(fm.channels, 2u);
  EXPECT_EQ(fm.bands, 64u);
  EXPECT_EQ(fm.frames, 259u);
}

TEST(LogMel, SilenceIsUniform) {
  const auto fm = log_mel_spectrogram(AudioClip::silent(44100, 44100.0), FeatureConfig{});
  for (float v : fm.data) ASSERT_EQ(v, fm.data[0]);
}

TEST(LogMel, DoublingAmplitudeAddsSixDb) {
  FeatureExtractor fx(FeatureConfig{}, 44100.0);
  const auto a = fx.log_mel(tone(0.5, 0.1, 1234.0), false);
  const auto b = fx.log_mel(tone(0.5, 0.2, 1234.0), false);
  const double expect = 20.0 * std::log10(2.0);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    if (a.data[i] < -60.0f) continue;  // the power floor dominates there
    ASSERT_NEAR(b.data[i] - a.data[i], expect, 1e-3);
    ++checked;
  }
  EXPECT_GT(checked, 100u);
}

TEST(LogMel, ClampWindow) {
  const auto fm = log_mel_spectrogram(tone(1.0, 0.3), FeatureConfig{});
  for (std::size_t c = 0; c < 2; ++c) {
    auto ch = fm.channel(c);
    const float hi = *std::max_element(ch.begin(), ch.end());
    const float lo = *std::min_element(ch.begin(), ch.end());
    EXPECT_LE(hi - lo, 80.0f + 1e-3f);
  }
}

TEST(LogMel, RejectsRateMismatch) {
  FeatureExtractor fx(FeatureConfig{}, 44100.0);
  try {
    fx.log_mel(AudioClip::silent(100, 22050.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidRate);
  }
}

FeatureMap random_map(Rng& rng, std::size_t c, std::size_t m, std::size_t t) {
  FeatureMap fm(c, m, t, FeatureUnits::Decibel);
  for (auto& v : fm.data) v = static_cast<float>(uniform(rng, -80.0, 0.0));
  return fm;
}

TEST(Mfcc, ConstantColumn) {
  FeatureMap fm(1, 16, 3, FeatureUnits::Decibel);
  std::fill(fm.data.begin(), fm.data.end(), -7.0f);
  const auto c = mfcc(fm, 8);
  EXPECT_EQ(c.bands, 8u);
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_NEAR(c.at(0, 0, t), -7.0 * 4.0, 1e-4);
    for (std::size_t k = 1; k < 8; ++k) EXPECT_NEAR(c.at(0, k, t), 0.0, 1e-4);
  }
}

TEST(Mfcc, FullBasisInverts) {
  Rng rng(9);
  auto fm = random_map(rng, 2, 24, 5);
  for (auto& v : fm.data) v /= 80.0f;  // keep float rounding well under 1e-6
  const auto c = mfcc(fm, 24);
  const std::size_t M = 24;
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t t = 0; t < 5; ++t)
      for (std::size_t m = 0; m < M; ++m) {
        double x = 0.0;
        for (std::size_t k = 0; k < M; ++k) {
          const double s = std::sqrt((k == 0 ? 1.0 : 2.0) / M);
          x += s * std::cos(std::numbers::pi * k * (2.0 * m + 1) / (2.0 * M)) * c.at(ch, k, t);
        }
        ASSERT_NEAR(x, fm.at(ch, m, t), 1e-6);
      }
}

TEST(Mfcc, FewerBandsThanMel) {
  Rng rng(2);
  const auto c = mfcc(random_map(rng, 2, 64, 4), 20);
  EXPECT_EQ(c.bands, 20u);
  EXPECT_LT(c.bands, 64u);
  EXPECT_THROW(mfcc(random_map(rng, 2, 8, 4), 9), Error);
}

TEST(SpecAugment, ZeroFractionIsIdentity) {
  Rng rng(4);
  const auto fm = random_map(rng, 2, 64, 50);
  FeatureConfig cfg;
  cfg.mask_frac = 0.0;
  EXPECT_EQ(spec_augment(fm, cfg, rng), fm);
}

TEST(SpecAugment, BandMaskTrace) {
  Rng rng(4);
  auto fm = random_map(rng, 2, 64, 30);
  const auto orig = fm;
  mask_bands(fm, 10, 3, -1234.0f);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t m = 0; m < 64; ++m)
      for (std::size_t t = 0; t < 30; ++t) {
        if (m >= 10 && m <= 12)
          ASSERT_EQ(fm.at(c, m, t), -1234.0f);
        else
          ASSERT_EQ(fm.at(c, m, t), orig.at(c, m, t));
      }
}

TEST(SpecAugment, MaskWidthBound) {
  EXPECT_EQ(max_mask_width(64, 0.1), 6u);
  Rng rng(12);
  FeatureConfig cfg;
  const auto base = random_map(rng, 2, 64, 40);
  const float fill = static_cast<float>(map_mean(base));
  for (int trial = 0; trial < 200; ++trial) {
    const auto out = spec_augment(base, cfg, rng);
    std::size_t masked_rows = 0;
    for (std::size_t m = 0; m < 64; ++m) {
      bool all = true;
      for (std::size_t t = 0; t < 40; ++t) all = all && out.at(0, m, t) == fill && out.at(1, m, t) == fill;
      masked_rows += all;
    }
    ASSERT_LE(masked_rows, 6u);
  }
}

TEST(Normalize, Examples) {
  FeatureMap constant(1, 2, 3, FeatureUnits::Decibel);
  std::fill(constant.data.begin(), constant.data.end(), 5.0f);
  for (float v : normalize(constant).data) EXPECT_EQ(v, 0.0f);

  FeatureMap two(1, 1, 2, FeatureUnits::Decibel);
  two.data = {0.0f, 2.0f};
  const auto n = normalize(two);
  EXPECT_NEAR(n.data[0], -1.0f, 1e-6);
  EXPECT_NEAR(n.data[1], 1.0f, 1e-6);
}

TEST(Normalize, IdempotentAndStandardized) {
  Rng rng(21);
  const auto fm = random_map(rng, 2, 16, 30);
  const auto a = normalize(fm);
  const auto b = normalize(a);
  for (std::size_t i = 0; i < a.data.size(); ++i) ASSERT_NEAR(a.data[i], b.data[i], 1e-5);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, sq = 0;
    for (float v : a.channel(c)) mean += v;
    mean /= 480.0;
    for (float v : a.channel(c)) sq += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(std::sqrt(sq / 480.0), 1.0, 1e-5);
  }
}

TEST(Features, MfccPipelineShape) {
  FeatureConfig cfg;
  cfg.kind = FeatureKind::Mfcc;
  FeatureExtractor fx(cfg, 44100.0);
  Rng rng(1);
  const auto fm = extract_features(fx, tone(3.0, 0.4), &rng);
  EXPECT_EQ(fm.bands, 20u);
  EXPECT_EQ(fm.frames, 259u);
  EXPECT_EQ(fm.units, FeatureUnits::ZScore);
  EXPECT_EQ(parse_feature_kind("mfcc"), FeatureKind::Mfcc);
  EXPECT_THROW(parse_feature_kind("cqt"), Error);
}

}  // namespace
}  // namespace hta
