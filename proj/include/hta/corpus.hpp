#pragma once

// Seeded synthetic five-class corpus and ingestion of user-supplied clips.
//
// The synthetic classes are acoustic caricatures, not recordings:
//   crying            amplitude-modulated descending harmonic sweeps (~350-600 Hz)
//   screaming         sustained high harmonic stacks (~1.2-2.2 kHz) with vibrato
//   car_door_banging  broadband impulses with exponential decay plus a low thump
//   car_noise         low-passed noise plus engine-order harmonics (25-45 Hz base)
//   conversation      voiced syllable bursts (100-220 Hz pitch) with pauses

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "hta/audio.hpp"
#include "hta/error.hpp"
#include "hta/labels.hpp"
#include "hta/manifest.hpp"
#include "hta/random.hpp"

namespace hta {

struct CorpusSpec {
  std::size_t clips_per_class = 40;
  double min_seconds = 2.0;
  double max_seconds = 3.0;
  double rate = 44100.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (clips_per_class < 2) fail(ErrorCode::ConfigError, "clips_per_class must be >= 2");
    if (!(min_seconds >= 2.0 && max_seconds <= 3.0 && min_seconds <= max_seconds))
      fail(ErrorCode::ConfigError, "clip durations must lie within [2, 3] s");
    if (!(rate > 0)) fail(ErrorCode::ConfigError, "rate must be > 0");
  }
};

namespace synth {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t clip_seed(std::uint64_t seed, ClassLabel c, std::size_t index) {
  return splitmix(splitmix(seed) ^ splitmix(static_cast<std::uint64_t>(class_id(c)) * 1000003ULL + index));
}

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// RBJ band-pass biquad (constant 0 dB peak gain), applied in place. The
/// center is kept below Nyquist so low-rate synthesis stays stable.
inline void bandpass(std::vector<double>& x, double rate, double center, double q) {
  const double w0 = kTwoPi * std::min(center, 0.45 * rate) / rate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (auto& v : x) {
    const double y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = v;
    y2 = y1;
    y1 = y;
    v = y;
  }
}

inline void lowpass(std::vector<double>& x, double rate, double cutoff) {
  const double a = std::exp(-kTwoPi * cutoff / rate);
  double y = 0.0;
  for (auto& v : x) {
    y = (1.0 - a) * v + a * y;
    v = y;
  }
}

inline std::vector<double> noise(Rng& rng, std::size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = normal(rng);
  return x;
}

inline void crying(std::vector<double>& out, double rate, Rng& rng) {
  const std::size_t n = out.size();
  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.0, 0.15) * rate);
  const double sob_hz = uniform(rng, 4.0, 7.0);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(uniform(rng, 0.5, 0.9) * rate);
    const double f_start = uniform(rng, 450.0, 600.0);
    const double f_end = f_start * uniform(rng, 0.6, 0.75);
    double phase = 0.0;
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(len);
      const double f0 = f_start + (f_end - f_start) * u;
      phase += kTwoPi * f0 / rate;
      const double env = std::sin(std::numbers::pi * u) *
                         (1.0 + 0.6 * std::sin(kTwoPi * sob_hz * static_cast<double>(i) / rate));
      double s = 0.0;
      for (int h = 1; h <= 6; ++h) s += std::sin(h * phase) / h;
      out[pos + i] += env * s;
    }
    pos += len + static_cast<std::size_t>(uniform(rng, 0.1, 0.3) * rate);
  }
}

inline void screaming(std::vector<double>& out, double rate, Rng& rng) {
  const std::size_t n = out.size();
  const double f0 = uniform(rng, 1200.0, 2200.0);
  const double vib_hz = uniform(rng, 5.0, 7.0);
  const double fade = 0.05 * rate;
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    const double f = f0 * (1.0 + 0.03 * std::sin(kTwoPi * vib_hz * t));
    phase += kTwoPi * f / rate;
    double s = 0.0;
    double amp = 1.0;
    for (int h = 1; h <= 5; ++h, amp *= 0.8) s += amp * std::sin(h * phase);
    const double env = std::min({1.0, static_cast<double>(i) / fade, static_cast<double>(n - i) / fade});
    out[i] += env * s;
  }
  auto breath = noise(rng, n);
  bandpass(breath, rate, 3000.0, 1.5);
  for (std::size_t i = 0; i < n; ++i) out[i] += 0.3 * breath[i];
}

inline void door_banging(std::vector<double>& out, double rate, Rng& rng) {
  const std::size_t n = out.size();
  const auto hits = static_cast<int>(uniform_int(rng, 2, 5));
  for (int k = 0; k < hits; ++k) {
    const auto start = static_cast<std::size_t>(uniform(rng, 0.0, 0.85) * static_cast<double>(n));
    const double tau = uniform(rng, 0.015, 0.04) * rate;
    const double thump_hz = uniform(rng, 60.0, 120.0);
    const double gain = uniform(rng, 0.6, 1.0);
    const auto len = static_cast<std::size_t>(8.0 * tau);
    for (std::size_t i = 0; i < len && start + i < n; ++i) {
      const double d = static_cast<double>(i);
      out[start + i] += gain * (normal(rng) * std::exp(-d / tau) +
                                1.5 * std::sin(kTwoPi * thump_hz * d / rate) * std::exp(-d / (3.0 * tau)));
    }
  }
}

inline void car_noise(std::vector<double>& out, double rate, Rng& rng) {
  const std::size_t n = out.size();
  auto rumble = noise(rng, n);
  lowpass(rumble, rate, uniform(rng, 150.0, 300.0));
  const double base = uniform(rng, 25.0, 45.0);
  const double drift = uniform(rng, 0.3, 1.0);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    phase += kTwoPi * base * (1.0 + 0.02 * std::sin(kTwoPi * drift * t)) / rate;
    double s = 0.0;
    for (int order = 1; order <= 4; ++order) s += std::sin(order * phase) / order;
    out[i] += 8.0 * rumble[i] + 0.8 * s;
  }
}

inline void conversation(std::vector<double>& out, double rate, Rng& rng) {
  const std::size_t n = out.size();
  const double pitch[2] = {uniform(rng, 100.0, 140.0), uniform(rng, 170.0, 220.0)};
  std::size_t pos = static_cast<std::size_t>(uniform(rng, 0.0, 0.2) * rate);
  int speaker = static_cast<int>(uniform_int(rng, 0, 1));
  while (pos < n) {
    const auto syllables = static_cast<int>(uniform_int(rng, 2, 6));
    for (int s = 0; s < syllables && pos < n; ++s) {
      const auto len = static_cast<std::size_t>(uniform(rng, 0.1, 0.3) * rate);
      const double formant = uniform(rng, 500.0, 2500.0);
      std::vector<double> voiced(len, 0.0);
      double phase = 0.0;
      const double f0 = pitch[speaker] * uniform(rng, 0.9, 1.1);
      for (std::size_t i = 0; i < len; ++i) {
        phase += kTwoPi * f0 / rate;
        double v = 0.0;
        for (int h = 1; h <= 12; ++h) v += std::sin(h * phase) / h;
        voiced[i] = v + 0.3 * normal(rng);
      }
      bandpass(voiced, rate, formant, 1.2);
      for (std::size_t i = 0; i < len && pos + i < n; ++i) {
        const double u = static_cast<double>(i) / static_cast<double>(len);
        out[pos + i] += std::sin(std::numbers::pi * u) * voiced[i] * 3.0;
      }
      pos += len + static_cast<std::size_t>(uniform(rng, 0.02, 0.08) * rate);
    }
    pos += static_cast<std::size_t>(uniform(rng, 0.2, 0.6) * rate);
    speaker = 1 - speaker;
  }
}

}  // namespace synth

/// One synthetic clip of the given class, peak-normalized into [-1, 1].
inline AudioClip synth_clip(ClassLabel label, double seconds, double rate, Rng& rng) {
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  std::vector<double> x(n, 0.0);
  switch (label) {
    case ClassLabel::Crying: synth::crying(x, rate, rng); break;
    case ClassLabel::Screaming: synth::screaming(x, rate, rng); break;
    case ClassLabel::CarDoorBanging: synth::door_banging(x, rate, rng); break;
    case ClassLabel::CarNoise: synth::car_noise(x, rate, rng); break;
    case ClassLabel::Conversation: synth::conversation(x, rate, rng); break;
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0 ? uniform(rng, 0.3, 0.8) / peak : 0.0;
  AudioClip clip = AudioClip::silent(n, rate);
  for (int c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = gain * x[i] + 1e-3 * normal(rng);
      clip.channels[c][i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
    }
  }
  return clip;
}

/// Deterministic clip for (seed, class, index), independent of generation order.
inline AudioClip synth_clip(const CorpusSpec& spec, ClassLabel label, std::size_t index) {
  Rng rng(synth::clip_seed(spec.seed, label, index));
  const double seconds = uniform(rng, spec.min_seconds, spec.max_seconds);
  return synth_clip(label, seconds, spec.rate, rng);
}

inline std::string synth_file_name(ClassLabel label, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.wav", std::string(class_name(label)).c_str(), index);
  return std::string(class_name(label)) + "/" + buf;
}

/// Writes clips_per_class WAV files per class under out_dir/<class>/ and
/// out_dir/manifest.csv. Rows are ordered class-major.
inline Manifest synth_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::IoError, "cannot create " + out_dir.string() + ": " + ec.message());
  Manifest m;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto label = static_cast<ClassLabel>(c);
    std::filesystem::create_directories(out_dir / std::string(class_name(label)), ec);
    if (ec) fail(ErrorCode::IoError, "cannot create class directory: " + ec.message());
    for (std::size_t i = 0; i < spec.clips_per_class; ++i) {
      const std::string name = synth_file_name(label, i);
      save_wav(out_dir / name, synth_clip(spec, label, i));
      m.push_back({name, label});
    }
  }
  save_manifest(out_dir / "manifest.csv", m);
  return m;
}

struct IngestResult {
  Manifest manifest;
  std::vector<std::string> warnings;
};

/// Folder-name-to-class mapping where each class folder carries its own name.
inline std::map<std::string, ClassLabel> default_folder_mapping() {
  std::map<std::string, ClassLabel> m;
  for (std::size_t c = 0; c < kNumClasses; ++c) m.emplace(std::string(kClassNames[c]), static_cast<ClassLabel>(c));
  return m;
}

/// Indexes dir/<folder>/*.wav for every mapped folder. Unreadable files are
/// reported in warnings and skipped.
inline IngestResult ingest(const std::filesystem::path& dir,
                           const std::map<std::string, ClassLabel>& mapping = default_folder_mapping()) {
  namespace fs = std::filesystem;
  IngestResult res;
  if (!fs::is_directory(dir)) fail(ErrorCode::NoAudioFound, dir.string() + " is not a directory");
  for (const auto& [folder, label] : mapping) {
    const fs::path sub = dir / folder;
    if (!fs::is_directory(sub)) continue;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(sub)) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
      if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const std::string rel = fs::relative(f, dir).generic_string();
      try {
        (void)load_wav(f);
        res.manifest.push_back({rel, label});
      } catch (const Error& e) {
        res.warnings.push_back(rel + ": " + e.what());
      }
    }
  }
  if (res.manifest.empty()) fail(ErrorCode::NoAudioFound, "no readable WAV files under " + dir.string());
  return res;
}

}  // namespace hta
