#pragma once

// Audio ingestion and conditioning: WAV I/O, resampling, fixed-length
// padding and circular time-shift augmentation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "hta/error.hpp"
#include "hta/random.hpp"

namespace hta {

/// Two-channel PCM buffer, amplitudes in [-1, 1].
struct AudioClip {
  std::array<std::vector<float>, 2> channels;
  double rate = 44100.0;

  std::size_t frames() const { return channels[0].size(); }
  double duration() const { return static_cast<double>(frames()) / rate; }

  static AudioClip silent(std::size_t n, double rate) {
    AudioClip c;
    c.rate = rate;
    c.channels[0].assign(n, 0.0f);
    c.channels[1].assign(n, 0.0f);
    return c;
  }

  static AudioClip from_mono(std::vector<float> mono, double rate) {
    AudioClip c;
    c.rate = rate;
    c.channels[1] = mono;
    c.channels[0] = std::move(mono);
    return c;
  }

  bool operator==(const AudioClip&) const = default;
};

struct ClipConfig {
  double target_rate = 44100.0;
  double clip_seconds = 3.0;
  double shift_frac = 0.4;

  void validate() const {
    if (!(target_rate > 0)) fail(ErrorCode::ConfigError, "target_rate must be > 0");
    if (!(clip_seconds > 0)) fail(ErrorCode::ConfigError, "clip_seconds must be > 0");
    if (!(shift_frac >= 0 && shift_frac < 1))
      fail(ErrorCode::ConfigError, "shift_frac must lie in [0, 1)");
  }
};

/// Checks the AudioClip invariants; throws on violation.
inline void validate(const AudioClip& clip) {
  if (!(clip.rate > 0)) fail(ErrorCode::InvalidRate, "clip rate must be > 0");
  if (clip.channels[0].size() != clip.channels[1].size())
    fail(ErrorCode::ShapeMismatch, "channel lengths differ");
  for (const auto& ch : clip.channels) {
    for (float v : ch) {
      if (!std::isfinite(v) || v < -1.0f || v > 1.0f)
        fail(ErrorCode::ConfigError, "sample out of range [-1, 1]");
    }
  }
}

namespace wav_detail {

inline std::uint16_t u16le(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

}  // namespace wav_detail

/// Converts interleaved s16 samples (1 or 2 channels) to a clip.
inline AudioClip from_pcm16(std::span<const std::int16_t> interleaved, int channels,
                            double rate) {
  if (channels != 1 && channels != 2)
    fail(ErrorCode::UnsupportedEncoding, "only mono or stereo PCM is supported");
  const std::size_t n = interleaved.size() / static_cast<std::size_t>(channels);
  AudioClip clip;
  clip.rate = rate;
  clip.channels[0].resize(n);
  clip.channels[1].resize(n);
  constexpr float kScale = 1.0f / 32768.0f;
  for (std::size_t i = 0; i < n; ++i) {
    if (channels == 1) {
      clip.channels[0][i] = clip.channels[1][i] = interleaved[i] * kScale;
    } else {
      clip.channels[0][i] = interleaved[2 * i] * kScale;
      clip.channels[1][i] = interleaved[2 * i + 1] * kScale;
    }
  }
  return clip;
}

inline std::int16_t to_pcm16(float v) {
  const float s = std::round(v * 32768.0f);
  return static_cast<std::int16_t>(std::clamp(s, -32768.0f, 32767.0f));
}

/// Parses a canonical RIFF/WAVE byte image (PCM, 16-bit, mono or stereo).
/// Unknown chunks are skipped by their declared size.
inline AudioClip parse_wav(std::span<const std::uint8_t> bytes) {
  using namespace wav_detail;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(ErrorCode::MalformedHeader, "not a RIFF/WAVE file");

  std::size_t pos = 12;
  bool have_fmt = false;
  int channels = 0;
  std::uint32_t rate = 0;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* hdr = bytes.data() + pos;
    const std::uint32_t size = u32le(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > bytes.size())
        fail(ErrorCode::MalformedHeader, "truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      const std::uint16_t format = u16le(f);
      channels = u16le(f + 2);
      rate = u32le(f + 4);
      const std::uint16_t bits = u16le(f + 14);
      if (format != 1) fail(ErrorCode::UnsupportedEncoding, "audio format is not PCM");
      if (bits != 16) fail(ErrorCode::UnsupportedEncoding, "bit depth is not 16");
      if (channels != 1 && channels != 2)
        fail(ErrorCode::UnsupportedEncoding, "channel count must be 1 or 2");
      if (rate == 0) fail(ErrorCode::MalformedHeader, "sample rate is zero");
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) fail(ErrorCode::MalformedHeader, "data chunk before fmt chunk");
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      const std::size_t frame_bytes = 2u * static_cast<std::size_t>(channels);
      const std::size_t n = avail / frame_bytes;
      if (n == 0) fail(ErrorCode::EmptyAudio, "no sample frames");
      std::vector<std::int16_t> pcm(n * static_cast<std::size_t>(channels));
      for (std::size_t i = 0; i < pcm.size(); ++i)
        pcm[i] = static_cast<std::int16_t>(u16le(bytes.data() + body + 2 * i));
      return from_pcm16(pcm, channels, static_cast<double>(rate));
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) fail(ErrorCode::MalformedHeader, "missing fmt chunk");
  fail(ErrorCode::EmptyAudio, "missing data chunk");
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline AudioClip load_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_wav(bytes);
}

/// Canonical 44-byte-header stereo 16-bit image of a clip.
inline std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  using namespace wav_detail;
  const auto n = static_cast<std::uint32_t>(clip.frames());
  const auto rate = static_cast<std::uint32_t>(std::lround(clip.rate));
  const std::uint32_t data_bytes = n * 4;
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 2);
  put_u32(out, rate);
  put_u32(out, rate * 4);
  put_u16(out, 4);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (std::uint32_t i = 0; i < n; ++i) {
    put_u16(out, static_cast<std::uint16_t>(to_pcm16(clip.channels[0][i])));
    put_u16(out, static_cast<std::uint16_t>(to_pcm16(clip.channels[1][i])));
  }
  return out;
}

inline void save_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path.string());
}

/// Linear-interpolation resampler. Output length is round(N * target / rate);
/// positions past the last input sample hold the last value.
inline AudioClip resample(const AudioClip& clip, double target_rate) {
  if (!(target_rate > 0)) fail(ErrorCode::InvalidRate, "target rate must be > 0");
  if (!(clip.rate > 0)) fail(ErrorCode::InvalidRate, "clip rate must be > 0");
  if (clip.rate == target_rate) return clip;

  const std::size_t n = clip.frames();
  const auto out_n = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / clip.rate));
  const double step = clip.rate / target_rate;
  AudioClip out;
  out.rate = target_rate;
  for (int c = 0; c < 2; ++c) {
    const auto& src = clip.channels[c];
    auto& dst = out.channels[c];
    dst.resize(out_n);
    if (n == 0) continue;
    for (std::size_t i = 0; i < out_n; ++i) {
      const double x = static_cast<double>(i) * step;
      const auto i0 = static_cast<std::size_t>(x);
      if (i0 + 1 >= n) {
        dst[i] = src[n - 1];
        continue;
      }
      const double frac = x - static_cast<double>(i0);
      dst[i] = static_cast<float>(src[i0] + frac * (src[i0 + 1] - src[i0]));
    }
  }
  return out;
}

/// Fixes the length at round(seconds * rate): prefix kept, trailing silence added.
inline AudioClip pad_trunc(const AudioClip& clip, double clip_seconds) {
  if (!(clip_seconds > 0)) fail(ErrorCode::ConfigError, "clip_seconds must be > 0");
  const auto n = static_cast<std::size_t>(std::llround(clip_seconds * clip.rate));
  AudioClip out = clip;
  out.channels[0].resize(n, 0.0f);
  out.channels[1].resize(n, 0.0f);
  return out;
}

/// Circular rotation of both channels; positive offsets move samples later.
inline AudioClip rotate(const AudioClip& clip, std::int64_t offset) {
  AudioClip out = clip;
  const auto n = static_cast<std::int64_t>(clip.frames());
  if (n == 0) return out;
  const std::int64_t k = ((offset % n) + n) % n;
  for (auto& ch : out.channels)
    std::rotate(ch.begin(), ch.end() - k, ch.end());
  return out;
}

/// Largest offset magnitude time_shift may draw for a clip of n frames.
inline std::int64_t max_shift(std::size_t n, double shift_frac) {
  return static_cast<std::int64_t>(std::floor(shift_frac * static_cast<double>(n)));
}

inline AudioClip time_shift(const AudioClip& clip, double shift_frac, Rng& rng) {
  if (!(shift_frac >= 0 && shift_frac < 1))
    fail(ErrorCode::ConfigError, "shift_frac must lie in [0, 1)");
  const std::int64_t limit = max_shift(clip.frames(), shift_frac);
  if (limit == 0) return clip;
  return rotate(clip, uniform_int(rng, -limit, limit));
}

/// Resample to the target rate and fix the duration.
inline AudioClip condition(const AudioClip& clip, const ClipConfig& cfg) {
  cfg.validate();
  return pad_trunc(resample(clip, cfg.target_rate), cfg.clip_seconds);
}

}  // namespace hta
