#pragma once

// Spectral features: STFT, mel filterbank, log-mel spectrogram, MFCC,
// spectrogram masking and per-channel standardization.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hta/audio.hpp"
#include "hta/error.hpp"
#include "hta/fft.hpp"
#include "hta/random.hpp"

namespace hta {

enum class WindowKind { Hann, Rectangular };
enum class FeatureKind { LogMel, Mfcc };
enum class FeatureUnits { Decibel, ZScore, Mfcc };

inline FeatureKind parse_feature_kind(std::string_view s) {
  if (s == "log-mel" || s == "logmel" || s == "mel") return FeatureKind::LogMel;
  if (s == "mfcc") return FeatureKind::Mfcc;
  fail(ErrorCode::ConfigError, "unknown feature kind '" + std::string(s) + "'");
}

inline std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::LogMel ? "log-mel" : "mfcc";
}

struct FeatureConfig {
  std::size_t n_fft = 2048;
  std::size_t hop = 512;
  WindowKind window = WindowKind::Hann;
  std::size_t n_mels = 64;
  double fmin = 0.0;
  std::optional<double> fmax;  // unset: rate / 2
  double top_db = 80.0;
  FeatureKind kind = FeatureKind::LogMel;
  std::size_t n_mfcc = 20;
  std::size_t freq_masks = 1;
  std::size_t time_masks = 1;
  double mask_frac = 0.1;

  double resolved_fmax(double rate) const { return fmax.value_or(rate / 2.0); }

  void validate(double rate) const {
    if (n_fft == 0 || hop == 0 || hop > n_fft)
      fail(ErrorCode::ConfigError, "require 0 < hop <= n_fft");
    if (n_mels < 2) fail(ErrorCode::ConfigError, "n_mels must be >= 2");
    const double hi = resolved_fmax(rate);
    if (!(fmin >= 0 && fmin < hi && hi <= rate / 2.0))
      fail(ErrorCode::ConfigError, "require 0 <= fmin < fmax <= rate/2");
    if (!(mask_frac > 0 && mask_frac < 1))
      fail(ErrorCode::ConfigError, "mask_frac must lie in (0, 1)");
    if (!(top_db > 0)) fail(ErrorCode::ConfigError, "top_db must be > 0");
    if (kind == FeatureKind::Mfcc && (n_mfcc == 0 || n_mfcc > n_mels))
      fail(ErrorCode::ConfigError, "n_mfcc must lie in [1, n_mels]");
  }
};

/// C x M x T feature array (channels, bands or coefficients, frames).
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t bands = 0;
  std::size_t frames = 0;
  std::vector<float> data;
  FeatureUnits units = FeatureUnits::Decibel;

  FeatureMap() = default;
  FeatureMap(std::size_t c, std::size_t m, std::size_t t, FeatureUnits u)
      : channels(c), bands(m), frames(t), data(c * m * t, 0.0f), units(u) {}

  float& at(std::size_t c, std::size_t m, std::size_t t) {
    return data[(c * bands + m) * frames + t];
  }
  float at(std::size_t c, std::size_t m, std::size_t t) const {
    return data[(c * bands + m) * frames + t];
  }
  std::span<float> channel(std::size_t c) {
    return {data.data() + c * bands * frames, bands * frames};
  }
  std::span<const float> channel(std::size_t c) const {
    return {data.data() + c * bands * frames, bands * frames};
  }

  bool operator==(const FeatureMap&) const = default;
};

/// Magnitude spectrogram, bins x frames, row-major.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> data;

  double at(std::size_t k, std::size_t t) const { return data[k * frames + t]; }
};

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

inline std::size_t frame_count(std::size_t length, std::size_t hop) { return 1 + length / hop; }

inline std::vector<double> make_window(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  if (kind == WindowKind::Hann) {
    // periodic Hann
    for (std::size_t i = 0; i < n; ++i)
      w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                  static_cast<double>(n));
  }
  return w;
}

/// Triangular mel filters, M x (n_fft/2 + 1), each row scaled to a peak of 1.
/// Stored densely; the support of each row is contiguous.
struct MelFilterbank {
  std::size_t bands = 0;
  std::size_t bins = 0;
  std::vector<double> weights;
  std::vector<std::size_t> first;  // first nonzero bin per row
  std::vector<std::size_t> last;   // one past the last nonzero bin per row

  double at(std::size_t m, std::size_t k) const { return weights[m * bins + k]; }
};

inline MelFilterbank mel_filterbank(const FeatureConfig& cfg, double rate) {
  cfg.validate(rate);
  const std::size_t bins = cfg.n_fft / 2 + 1;
  const std::size_t m_count = cfg.n_mels;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.resolved_fmax(rate));
  std::vector<double> edges(m_count + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(m_count + 1));

  MelFilterbank fb;
  fb.bands = m_count;
  fb.bins = bins;
  fb.weights.assign(m_count * bins, 0.0);
  fb.first.assign(m_count, 0);
  fb.last.assign(m_count, 0);
  for (std::size_t m = 0; m < m_count; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    double peak = 0.0;
    std::size_t first = bins, last = 0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(cfg.n_fft);
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      if (w > 0) {
        fb.weights[m * bins + k] = w;
        peak = std::max(peak, w);
        first = std::min(first, k);
        last = k + 1;
      }
    }
    if (peak <= 0)
      fail(ErrorCode::ConfigError, "mel band " + std::to_string(m) +
                                       " is empty; reduce n_mels or increase n_fft");
    for (std::size_t k = first; k < last; ++k) fb.weights[m * bins + k] /= peak;
    fb.first[m] = first;
    fb.last[m] = last;
  }
  return fb;
}

/// Reusable STFT + mel machinery for one (config, rate) pair.
class FeatureExtractor {
 public:
  FeatureExtractor(FeatureConfig cfg, double rate)
      : cfg_(std::move(cfg)),
        rate_(rate),
        plan_(std::make_shared<FftPlan>(cfg_.n_fft)),
        window_(make_window(cfg_.window, cfg_.n_fft)),
        filters_(mel_filterbank(cfg_, rate)) {}

  const FeatureConfig& config() const { return cfg_; }
  double rate() const { return rate_; }
  const MelFilterbank& filterbank() const { return filters_; }

  /// Centered STFT magnitudes, (n_fft/2 + 1) x (1 + L/hop).
  Spectrogram stft(std::span<const float> signal) const {
    const std::size_t n_fft = cfg_.n_fft;
    const std::size_t pad = n_fft / 2;
    const std::size_t length = signal.size();
    Spectrogram out;
    out.bins = n_fft / 2 + 1;
    out.frames = frame_count(length, cfg_.hop);
    out.data.assign(out.bins * out.frames, 0.0);
    std::vector<cplx> buf(n_fft);
    for (std::size_t t = 0; t < out.frames; ++t) {
      const std::size_t start = t * cfg_.hop;  // index into padded signal
      for (std::size_t i = 0; i < n_fft; ++i) {
        const std::size_t p = start + i;
        double v = 0.0;
        if (p >= pad && p - pad < length) v = signal[p - pad];
        buf[i] = v * window_[i];
      }
      plan_->forward(buf);
      for (std::size_t k = 0; k < out.bins; ++k) out.data[k * out.frames + t] = std::abs(buf[k]);
    }
    return out;
  }

  /// Mel power in dB for one channel, before dynamic-range clamping.
  std::vector<double> mel_db(std::span<const float> signal, std::size_t& frames) const {
    const Spectrogram spec = stft(signal);
    frames = spec.frames;
    std::vector<double> out(filters_.bands * frames, 0.0);
    std::vector<double> power(spec.bins);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t k = 0; k < spec.bins; ++k) {
        const double mag = spec.data[k * frames + t];
        power[k] = mag * mag;
      }
      for (std::size_t m = 0; m < filters_.bands; ++m) {
        double acc = 0.0;
        for (std::size_t k = filters_.first[m]; k < filters_.last[m]; ++k)
          acc += filters_.weights[m * filters_.bins + k] * power[k];
        out[m * frames + t] = 10.0 * std::log10(acc + kPowerFloor);
      }
    }
    return out;
  }

  /// 2 x n_mels x T log-mel map; each channel clamped to [max - top_db, max].
  FeatureMap log_mel(const AudioClip& clip, bool clamp = true) const {
    if (clip.rate != rate_) fail(ErrorCode::InvalidRate, "clip rate does not match extractor rate");
    if (clip.frames() == 0) fail(ErrorCode::EmptyAudio, "cannot featurize an empty clip");
    std::size_t frames = 0;
    FeatureMap fm;
    for (std::size_t c = 0; c < 2; ++c) {
      std::vector<double> db = mel_db(clip.channels[c], frames);
      if (c == 0) fm = FeatureMap(2, filters_.bands, frames, FeatureUnits::Decibel);
      if (clamp) {
        const double hi = *std::max_element(db.begin(), db.end());
        const double lo = hi - cfg_.top_db;
        for (auto& v : db) v = std::clamp(v, lo, hi);
      }
      auto dst = fm.channel(c);
      for (std::size_t i = 0; i < db.size(); ++i) dst[i] = static_cast<float>(db[i]);
    }
    return fm;
  }

  static constexpr double kPowerFloor = 1e-10;

 private:
  FeatureConfig cfg_;
  double rate_;
  std::shared_ptr<const FftPlan> plan_;
  std::vector<double> window_;
  MelFilterbank filters_;
};

inline Spectrogram stft(std::span<const float> signal, const FeatureConfig& cfg, double rate = 44100.0) {
  if (signal.empty()) fail(ErrorCode::ConfigError, "stft needs at least one sample");
  return FeatureExtractor(cfg, rate).stft(signal);
}

inline FeatureMap log_mel_spectrogram(const AudioClip& clip, const FeatureConfig& cfg) {
  return FeatureExtractor(cfg, clip.rate).log_mel(clip);
}

/// Orthonormal DCT-II along the band axis; keeps the first n_mfcc coefficients.
inline FeatureMap mfcc(const FeatureMap& logmel, std::size_t n_mfcc) {
  if (logmel.units != FeatureUnits::Decibel)
    fail(ErrorCode::ConfigError, "mfcc expects a dB log-mel map");
  if (n_mfcc == 0 || n_mfcc > logmel.bands)
    fail(ErrorCode::ConfigError, "n_mfcc must lie in [1, n_mels]");
  const std::size_t m_count = logmel.bands;
  std::vector<double> basis(n_mfcc * m_count);
  for (std::size_t k = 0; k < n_mfcc; ++k) {
    const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(m_count));
    for (std::size_t m = 0; m < m_count; ++m)
      basis[k * m_count + m] =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                           (2.0 * static_cast<double>(m) + 1.0) / (2.0 * static_cast<double>(m_count)));
  }
  FeatureMap out(logmel.channels, n_mfcc, logmel.frames, FeatureUnits::Mfcc);
  for (std::size_t c = 0; c < logmel.channels; ++c) {
    for (std::size_t t = 0; t < logmel.frames; ++t) {
      for (std::size_t k = 0; k < n_mfcc; ++k) {
        double acc = 0.0;
        for (std::size_t m = 0; m < m_count; ++m) acc += basis[k * m_count + m] * logmel.at(c, m, t);
        out.at(c, k, t) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

inline double map_mean(const FeatureMap& fm) {
  double acc = 0.0;
  for (float v : fm.data) acc += v;
  return fm.data.empty() ? 0.0 : acc / static_cast<double>(fm.data.size());
}

/// Sets bands [start, start + width) to fill in every frame of every channel.
inline void mask_bands(FeatureMap& fm, std::size_t start, std::size_t width, float fill) {
  for (std::size_t c = 0; c < fm.channels; ++c)
    for (std::size_t m = start; m < std::min(start + width, fm.bands); ++m)
      for (std::size_t t = 0; t < fm.frames; ++t) fm.at(c, m, t) = fill;
}

/// Sets frames [start, start + width) to fill in every band of every channel.
inline void mask_frames(FeatureMap& fm, std::size_t start, std::size_t width, float fill) {
  for (std::size_t c = 0; c < fm.channels; ++c)
    for (std::size_t m = 0; m < fm.bands; ++m)
      for (std::size_t t = start; t < std::min(start + width, fm.frames); ++t) fm.at(c, m, t) = fill;
}

inline std::size_t max_mask_width(std::size_t axis, double mask_frac) {
  return static_cast<std::size_t>(std::floor(mask_frac * static_cast<double>(axis)));
}

/// Random band and frame masks filled with the map mean. Mask positions are
/// shared by both channels.
inline FeatureMap spec_augment(const FeatureMap& fm, const FeatureConfig& cfg, Rng& rng) {
  FeatureMap out = fm;
  const auto fill = static_cast<float>(map_mean(fm));
  auto draw = [&](std::size_t axis) {
    const std::size_t max_w = max_mask_width(axis, cfg.mask_frac);
    const auto width = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(max_w)));
    const auto start = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(axis - width)));
    return std::pair{start, width};
  };
  for (std::size_t i = 0; i < cfg.freq_masks; ++i) {
    const auto [start, width] = draw(fm.bands);
    mask_bands(out, start, width, fill);
  }
  for (std::size_t i = 0; i < cfg.time_masks; ++i) {
    const auto [start, width] = draw(fm.frames);
    mask_frames(out, start, width, fill);
  }
  return out;
}

/// Per-channel z-score with population standard deviation (+1e-8 guard).
inline FeatureMap normalize(const FeatureMap& fm) {
  FeatureMap out = fm;
  out.units = FeatureUnits::ZScore;
  for (std::size_t c = 0; c < fm.channels; ++c) {
    auto src = fm.channel(c);
    auto dst = out.channel(c);
    double mean = 0.0;
    for (float v : src) mean += v;
    mean /= static_cast<double>(src.size());
    double var = 0.0;
    for (float v : src) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(src.size()));
    const double inv = 1.0 / (sd + 1e-8);
    for (std::size_t i = 0; i < src.size(); ++i)
      dst[i] = static_cast<float>((src[i] - mean) * inv);
  }
  return out;
}

/// Full featurization of a conditioned clip. When rng is given, spectrogram
/// masking is applied (training only). For MFCC features the masks are drawn
/// on the log-mel map before the cosine transform.
inline FeatureMap extract_features(const FeatureExtractor& fx, const AudioClip& clip,
                                   Rng* augment_rng = nullptr) {
  FeatureMap fm = fx.log_mel(clip);
  if (augment_rng) fm = spec_augment(fm, fx.config(), *augment_rng);
  if (fx.config().kind == FeatureKind::Mfcc) fm = mfcc(fm, fx.config().n_mfcc);
  return normalize(fm);
}

}  // namespace hta
