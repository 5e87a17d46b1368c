#pragma once

// Streaming detection: sliding-window classification, verdict mapping, the
// debounced alert state machine, and alert sinks.

#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hta/audio.hpp"
#include "hta/error.hpp"
#include "hta/features.hpp"
#include "hta/labels.hpp"
#include "hta/model.hpp"
#include "hta/training.hpp"

namespace hta {

struct DetectConfig {
  double window_seconds = 3.0;
  double window_hop_seconds = 1.0;
  double conf_threshold = 0.6;
  std::size_t raise_k = 2;
  std::size_t raise_m = 3;
  std::size_t release_n = 5;
  double emit_hz = 1.0;
  std::string vehicle_id = "AV-0001";

  void validate() const {
    if (!(window_seconds > 0)) fail(ErrorCode::ConfigError, "window_seconds must be > 0");
    if (!(window_hop_seconds > 0 && window_hop_seconds <= window_seconds))
      fail(ErrorCode::ConfigError, "require 0 < window_hop_seconds <= window_seconds");
    if (!(raise_k >= 1 && raise_k <= raise_m)) fail(ErrorCode::ConfigError, "require 1 <= raise_k <= raise_m");
    if (release_n < 1) fail(ErrorCode::ConfigError, "release_n must be >= 1");
    if (!(emit_hz > 0)) fail(ErrorCode::ConfigError, "emit_hz must be > 0");
    if (!(conf_threshold >= 0 && conf_threshold <= 1))
      fail(ErrorCode::ConfigError, "conf_threshold must lie in [0, 1]");
  }
};

struct ClassPosterior {
  std::array<double, kNumClasses> probs{};
  std::size_t window_index = 0;
  double window_start = 0.0;

  std::size_t top() const {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c)
      if (probs[c] > probs[best]) best = c;
    return best;
  }
};

enum class Verdict { HtIndicative, Benign, Uncertain };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::HtIndicative: return "HT_INDICATIVE";
    case Verdict::Benign: return "BENIGN";
    case Verdict::Uncertain: return "UNCERTAIN";
  }
  return "?";
}

struct WindowVerdict {
  Verdict kind = Verdict::Uncertain;
  ClassLabel top_class = ClassLabel::CarNoise;
  double confidence = 0.0;
};

struct LocationFix {
  double t = 0.0;
  double lat = 0.0;
  double lon = 0.0;
};

/// Source of the vehicle position at a given stream time.
using LocationProvider = std::function<LocationFix(double)>;

inline LocationProvider fixed_location(double lat, double lon) {
  return [lat, lon](double t) { return LocationFix{t, lat, lon}; };
}

struct AlertEvent {
  double ts = 0.0;
  std::string vehicle_id;
  double lat = 0.0;
  double lon = 0.0;
  std::string event = "HT_SUSPECTED";
  std::string class_name;
  double confidence = 0.0;
  std::size_t window_index = 0;

  nlohmann::json to_json() const {
    return {{"ts", ts},           {"vehicle_id", vehicle_id}, {"lat", lat},
            {"lon", lon},         {"event", event},           {"class", class_name},
            {"confidence", confidence}, {"window_index", window_index}};
  }
  std::string to_line() const { return to_json().dump(); }

  static AlertEvent from_json(const nlohmann::json& j) {
    AlertEvent e;
    e.ts = j.at("ts").get<double>();
    e.vehicle_id = j.at("vehicle_id").get<std::string>();
    e.lat = j.at("lat").get<double>();
    e.lon = j.at("lon").get<double>();
    e.event = j.at("event").get<std::string>();
    e.class_name = j.at("class").get<std::string>();
    e.confidence = j.at("confidence").get<double>();
    e.window_index = j.at("window_index").get<std::size_t>();
    return e;
  }
};

/// Softmax over the model's logits for one normalized feature map.
inline ClassPosterior classify_window(const Model<float>& model, const FeatureMap& fm,
                                      std::size_t window_index = 0, double window_start = 0.0) {
  if (model.config().classes != kNumClasses)
    fail(ErrorCode::ShapeMismatch, "detector needs a five-class model");
  const Tensor<float> logits = model.infer(make_batch<float>(std::vector<FeatureMap>{fm}));
  const Tensor<double> p = softmax(logits.cast<double>());
  ClassPosterior post;
  for (std::size_t c = 0; c < kNumClasses; ++c) post.probs[c] = p[c];
  post.window_index = window_index;
  post.window_start = window_start;
  return post;
}

/// HT_INDICATIVE iff the top class is crying/screaming/door banging with
/// probability >= threshold; BENIGN likewise for car noise/conversation;
/// otherwise UNCERTAIN.
inline WindowVerdict map_event(const ClassPosterior& p, const DetectConfig& cfg) {
  const std::size_t top = p.top();
  WindowVerdict v;
  v.top_class = static_cast<ClassLabel>(top);
  v.confidence = p.probs[top];
  if (v.confidence < cfg.conf_threshold) {
    v.kind = Verdict::Uncertain;
  } else {
    v.kind = is_ht_indicative(v.top_class) ? Verdict::HtIndicative : Verdict::Benign;
  }
  return v;
}

/// Debounce state. UNCERTAIN verdicts touch neither the raise window nor the
/// benign run.
struct AlertState {
  bool active = false;
  std::deque<bool> recent;  // HT flags of the last raise_m decisive verdicts
  std::size_t benign_run = 0;
  std::optional<double> last_time;
  std::optional<double> last_emit;
  ClassLabel alert_class = ClassLabel::Crying;
  double alert_confidence = 0.0;

  bool operator==(const AlertState&) const = default;
};

/// One state-machine transition. The location is the vehicle position at
/// `time`; an AlertEvent is produced while ACTIVE at most emit_hz per second.
inline std::pair<AlertState, std::optional<AlertEvent>> alert_fsm_step(
    const AlertState& state, const WindowVerdict& verdict, const LocationFix& location, double time,
    std::size_t window_index, const DetectConfig& cfg) {
  if (state.last_time && time < *state.last_time)
    fail(ErrorCode::ClockRegression, "verdict time " + std::to_string(time) + " precedes " +
                                         std::to_string(*state.last_time));
  AlertState s = state;
  s.last_time = time;

  if (verdict.kind == Verdict::HtIndicative) {
    s.alert_class = verdict.top_class;
    s.alert_confidence = verdict.confidence;
  }
  if (verdict.kind != Verdict::Uncertain) {
    s.recent.push_back(verdict.kind == Verdict::HtIndicative);
    while (s.recent.size() > cfg.raise_m) s.recent.pop_front();
  }

  if (!s.active) {
    const auto hits = static_cast<std::size_t>(std::count(s.recent.begin(), s.recent.end(), true));
    if (hits >= cfg.raise_k) {
      s.active = true;
      s.benign_run = 0;
    }
  } else if (verdict.kind == Verdict::Benign) {
    if (++s.benign_run >= cfg.release_n) {
      s.active = false;
      s.benign_run = 0;
      s.recent.clear();
      s.last_emit.reset();
    }
  } else if (verdict.kind == Verdict::HtIndicative) {
    s.benign_run = 0;
  }

  std::optional<AlertEvent> ev;
  const double period = 1.0 / cfg.emit_hz;
  if (s.active && (!s.last_emit || time - *s.last_emit >= period - 1e-9) &&
      (!state.last_emit || time > *state.last_emit)) {
    AlertEvent e;
    e.ts = time;
    e.vehicle_id = cfg.vehicle_id;
    e.lat = std::clamp(location.lat, -90.0, 90.0);
    e.lon = std::clamp(location.lon, -180.0, 180.0);
    e.class_name = std::string(class_name(s.alert_class));
    e.confidence = s.alert_confidence;
    e.window_index = window_index;
    s.last_emit = time;
    ev = std::move(e);
  }
  return {std::move(s), std::move(ev)};
}

class AlertSink {
 public:
  virtual ~AlertSink() = default;
  virtual void write(const AlertEvent& e) = 0;
};

class MemorySink : public AlertSink {
 public:
  void write(const AlertEvent& e) override { events.push_back(e); }
  std::vector<AlertEvent> events;
};

/// Newline-delimited JSON to any ostream (stdout, string stream).
class StreamSink : public AlertSink {
 public:
  explicit StreamSink(std::ostream& out) : out_(out) {}
  void write(const AlertEvent& e) override {
    out_ << e.to_line() << '\n';
    out_.flush();
    if (!out_) fail(ErrorCode::SinkError, "alert stream write failed");
  }

 private:
  std::ostream& out_;
};

/// Appends newline-delimited JSON alerts to a file.
class FileSink : public AlertSink {
 public:
  explicit FileSink(const std::filesystem::path& path) : out_(path, std::ios::app) {
    if (!out_) fail(ErrorCode::SinkError, "cannot open alert file " + path.string());
  }
  void write(const AlertEvent& e) override {
    out_ << e.to_line() << '\n';
    out_.flush();
    if (!out_) fail(ErrorCode::SinkError, "alert file write failed");
  }

 private:
  std::ofstream out_;
};

/// TCP client writing the same line protocol.
class TcpSink : public AlertSink {
 public:
  TcpSink(const std::string& host, const std::string& port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), port.c_str(), &hints, &res) != 0 || !res)
      fail(ErrorCode::SinkError, "cannot resolve " + host + ":" + port);
    for (addrinfo* p = res; p; p = p->ai_next) {
      fd_ = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, p->ai_addr, p->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(res);
    if (fd_ < 0) fail(ErrorCode::SinkError, "cannot connect to " + host + ":" + port);
  }
  TcpSink(const TcpSink&) = delete;
  TcpSink& operator=(const TcpSink&) = delete;
  ~TcpSink() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void write(const AlertEvent& e) override {
    const std::string line = e.to_line() + "\n";
    std::size_t sent = 0;
    while (sent < line.size()) {
      const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
      if (n <= 0) fail(ErrorCode::SinkError, "TCP alert send failed");
      sent += static_cast<std::size_t>(n);
    }
  }

 private:
  int fd_ = -1;
};

/// "file:<path>", "tcp:<host>:<port>" or "-" (stdout).
inline std::unique_ptr<AlertSink> make_sink(const std::string& spec, std::ostream& stdout_stream) {
  if (spec == "-" || spec == "stdout") return std::make_unique<StreamSink>(stdout_stream);
  if (spec.rfind("file:", 0) == 0) return std::make_unique<FileSink>(spec.substr(5));
  if (spec.rfind("tcp:", 0) == 0) {
    const std::string rest = spec.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == rest.size())
      fail(ErrorCode::ConfigError, "tcp sink must be tcp:<host>:<port>");
    return std::make_unique<TcpSink>(rest.substr(0, colon), rest.substr(colon + 1));
  }
  fail(ErrorCode::ConfigError, "unknown sink '" + spec + "' (use file:<path>, tcp:<host>:<port> or -)");
}

/// Contiguous stereo frames at a fixed rate.
struct AudioChunk {
  std::vector<float> left, right;
};

class AudioSource {
 public:
  virtual ~AudioSource() = default;
  virtual double rate() const = 0;
  /// Next chunk of at most max_frames frames; nullopt once the source has ended.
  virtual std::optional<AudioChunk> read(std::size_t max_frames) = 0;
};

/// Replays an in-memory clip (e.g. a loaded WAV file).
class ClipSource : public AudioSource {
 public:
  explicit ClipSource(AudioClip clip) : clip_(std::move(clip)) {}
  double rate() const override { return clip_.rate; }
  std::optional<AudioChunk> read(std::size_t max_frames) override {
    if (pos_ >= clip_.frames()) return std::nullopt;
    const std::size_t n = std::min(max_frames, clip_.frames() - pos_);
    AudioChunk c;
    const auto b = static_cast<std::ptrdiff_t>(pos_), e = static_cast<std::ptrdiff_t>(pos_ + n);
    c.left.assign(clip_.channels[0].begin() + b, clip_.channels[0].begin() + e);
    c.right.assign(clip_.channels[1].begin() + b, clip_.channels[1].begin() + e);
    pos_ += n;
    return c;
  }

 private:
  AudioClip clip_;
  std::size_t pos_ = 0;
};

/// Raw interleaved stereo s16 little-endian PCM at a declared rate.
class PcmStreamSource : public AudioSource {
 public:
  PcmStreamSource(std::istream& in, double rate) : in_(in), rate_(rate) {
    if (!(rate > 0)) fail(ErrorCode::InvalidRate, "PCM source rate must be > 0");
  }
  double rate() const override { return rate_; }
  std::optional<AudioChunk> read(std::size_t max_frames) override {
    std::vector<std::uint8_t> raw(max_frames * 4);
    in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    const auto got = static_cast<std::size_t>(in_.gcount()) / 4;
    if (got == 0) return std::nullopt;
    AudioChunk c;
    c.left.resize(got);
    c.right.resize(got);
    for (std::size_t i = 0; i < got; ++i) {
      const auto l = static_cast<std::int16_t>(raw[4 * i] | (raw[4 * i + 1] << 8));
      const auto r = static_cast<std::int16_t>(raw[4 * i + 2] | (raw[4 * i + 3] << 8));
      c.left[i] = l / 32768.0f;
      c.right[i] = r / 32768.0f;
    }
    return c;
  }

 private:
  std::istream& in_;
  double rate_;
};

/// Single-producer single-consumer queue with a fixed capacity.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T v) {
    std::unique_lock lk(mu_);
    not_full_.wait(lk, [&] { return q_.size() < capacity_ || closed_; });
    if (closed_) return;
    q_.push_back(std::move(v));
    not_empty_.notify_one();
  }
  /// nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lk(mu_);
    not_empty_.wait(lk, [&] { return !q_.empty() || closed_; });
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return v;
  }
  void close() {
    std::lock_guard lk(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> q_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
};

/// Per-window trace record for diagnostics and scenario reports.
struct WindowRecord {
  std::size_t index = 0;
  double start = 0.0;
  double time = 0.0;  // verdict time: end of the audio the window covers
  ClassPosterior posterior;
  WindowVerdict verdict;
  bool active = false;
};

struct RunSummary {
  std::size_t windows = 0;
  std::size_t alerts = 0;
  std::optional<double> first_alert_time;
  std::vector<WindowRecord> trace;

  nlohmann::json to_json() const {
    nlohmann::json j{{"windows", windows}, {"alerts", alerts}};
    j["first_alert_time"] = first_alert_time ? nlohmann::json(*first_alert_time) : nlohmann::json(nullptr);
    return j;
  }
};

/// Slides a window over the source, featurizes each window exactly as in
/// training (no augmentation), classifies it and drives the alert state
/// machine; alerts go to the sink in order. A final zero-padded window covers
/// any trailing samples. Window i spans [i*hop, i*hop + window) and its
/// verdict time is the end of the audio it covers.
inline RunSummary stream_detect(AudioSource& source, const LocationProvider& location,
                                const Model<float>& model, const PipelineConfig& pipe,
                                const DetectConfig& cfg, AlertSink& sink, bool keep_trace = false) {
  pipe.validate();
  cfg.validate();
  const double rate = source.rate();
  if (!(rate > 0)) fail(ErrorCode::InvalidRate, "source rate must be > 0");
  const auto win = static_cast<std::size_t>(std::llround(cfg.window_seconds * rate));
  const auto hop = static_cast<std::size_t>(std::llround(cfg.window_hop_seconds * rate));
  if (win == 0 || hop == 0) fail(ErrorCode::ConfigError, "window shorter than one sample");
  const FeatureExtractor fx(pipe.features, pipe.clip.target_rate);

  BoundedQueue<AudioChunk> queue(8);
  std::exception_ptr producer_error;
  std::thread producer([&] {
    try {
      const auto chunk = static_cast<std::size_t>(std::max(1.0, std::round(rate / 10.0)));
      while (auto c = source.read(chunk)) queue.push(std::move(*c));
    } catch (...) {
      producer_error = std::current_exception();
    }
    queue.close();
  });

  RunSummary summary;
  AlertState state;
  std::deque<float> left, right;  // samples from absolute frame `base` on
  std::size_t base = 0;
  std::size_t received = 0;
  std::size_t covered = 0;  // frames covered by processed windows
  std::size_t index = 0;

  auto process = [&](std::size_t start, std::size_t end_avail) {
    AudioClip seg;
    seg.rate = rate;
    const std::size_t n = end_avail - start;
    const auto off = static_cast<std::ptrdiff_t>(start - base);
    seg.channels[0].assign(left.begin() + off, left.begin() + off + static_cast<std::ptrdiff_t>(n));
    seg.channels[1].assign(right.begin() + off, right.begin() + off + static_cast<std::ptrdiff_t>(n));
    seg = pad_trunc(seg, cfg.window_seconds);
    const AudioClip conditioned = condition(seg, pipe.clip);
    const double t_start = static_cast<double>(start) / rate;
    const double t = static_cast<double>(end_avail) / rate;
    const ClassPosterior post = classify_window(model, extract_features(fx, conditioned), index, t_start);
    const WindowVerdict verdict = map_event(post, cfg);
    auto [next, ev] = alert_fsm_step(state, verdict, location(t), t, index, cfg);
    state = std::move(next);
    if (ev) {
      sink.write(*ev);
      ++summary.alerts;
      if (!summary.first_alert_time) summary.first_alert_time = ev->ts;
    }
    if (keep_trace) summary.trace.push_back({index, t_start, t, post, verdict, state.active});
    ++summary.windows;
    ++index;
    covered = end_avail;
  };

  try {
    while (auto chunk = queue.pop()) {
      left.insert(left.end(), chunk->left.begin(), chunk->left.end());
      right.insert(right.end(), chunk->right.begin(), chunk->right.end());
      received += chunk->left.size();
      while (index * hop + win <= received) {
        const std::size_t start = index * hop;
        process(start, start + win);
        const std::size_t next_start = index * hop;
        const std::size_t drop = std::min(next_start, received) - base;
        left.erase(left.begin(), left.begin() + static_cast<std::ptrdiff_t>(drop));
        right.erase(right.begin(), right.begin() + static_cast<std::ptrdiff_t>(drop));
        base += drop;
      }
    }
    if (received > covered) {
      const std::size_t start = index * hop;
      if (start < received) process(start, received);
    }
  } catch (...) {
    queue.close();
    producer.join();
    throw;
  }
  producer.join();
  if (producer_error) std::rethrow_exception(producer_error);
  return summary;
}

}  // namespace hta
