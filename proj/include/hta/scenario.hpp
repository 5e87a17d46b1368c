#pragma once

// Scripted threat scenarios: audio/location timelines replayed through the
// streaming detector, scored for detection latency and false alarms.
//
//   1  lone rider, reaction mid-trip: crying, screaming, door banging
//   2  lone rider, reaction at the end of the trip: crying, screaming
//   3  shared ride, reaction mid-trip: screaming, crying, door banging
//   4  shared ride, reaction at the end of the trip: crying, screaming
//
// Lone-rider trips have a car-noise background; shared rides interleave car
// noise with conversation. GPS spoofing is only an annotated time plus a
// route deviation; it is not detected here.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hta/audio.hpp"
#include "hta/detection.hpp"
#include "hta/error.hpp"
#include "hta/labels.hpp"
#include "hta/manifest.hpp"
#include "hta/random.hpp"
#include "hta/training.hpp"

namespace hta {

enum class Phase { Benign, Reaction };

struct Segment {
  double t0 = 0.0;
  double t1 = 0.0;
  ClassLabel label = ClassLabel::CarNoise;
  Phase phase = Phase::Benign;
};

struct Waypoint {
  double t = 0.0;
  double lat = 0.0;
  double lon = 0.0;
};

struct ScenarioScript {
  int id = 0;  // 0 marks a custom or benign-only script
  double trip_seconds = 120.0;
  std::vector<Segment> segments;
  std::vector<Waypoint> route;
  std::optional<double> spoof_time;

  std::optional<double> reaction_onset() const {
    for (const auto& s : segments)
      if (s.phase == Phase::Reaction) return s.t0;
    return std::nullopt;
  }
  std::optional<double> reaction_end() const {
    std::optional<double> end;
    for (const auto& s : segments)
      if (s.phase == Phase::Reaction) end = s.t1;
    return end;
  }

  /// Time-ordered, non-overlapping segments inside the trip; at most one
  /// contiguous reaction run; spoofing precedes the reaction.
  void validate() const {
    if (!(trip_seconds > 0)) fail(ErrorCode::ConfigError, "trip_seconds must be > 0");
    double prev_end = 0.0;
    int reaction_runs = 0;
    bool in_reaction = false;
    for (const auto& s : segments) {
      if (!(s.t1 > s.t0) || s.t0 < prev_end - 1e-9 || s.t1 > trip_seconds + 1e-9)
        fail(ErrorCode::ConfigError, "segments must be ordered, non-overlapping and inside the trip");
      prev_end = s.t1;
      const bool r = s.phase == Phase::Reaction;
      if (r && !in_reaction) ++reaction_runs;
      in_reaction = r;
    }
    if (reaction_runs > 1) fail(ErrorCode::ConfigError, "reaction phase must be contiguous");
    for (std::size_t i = 1; i < route.size(); ++i)
      if (route[i].t < route[i - 1].t) fail(ErrorCode::ConfigError, "route timestamps must be monotone");
    if (spoof_time && reaction_onset() && !(*spoof_time < *reaction_onset()))
      fail(ErrorCode::ConfigError, "spoof_time must precede the reaction onset");
  }

  nlohmann::json to_json() const {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : segments)
      segs.push_back({{"t0", s.t0},
                      {"t1", s.t1},
                      {"class", class_name(s.label)},
                      {"phase", s.phase == Phase::Reaction ? "reaction" : "benign"}});
    nlohmann::json rt = nlohmann::json::array();
    for (const auto& w : route) rt.push_back({{"t", w.t}, {"lat", w.lat}, {"lon", w.lon}});
    nlohmann::json j{{"id", id}, {"trip_seconds", trip_seconds}, {"segments", segs}, {"route", rt}};
    j["spoof_time"] = spoof_time ? nlohmann::json(*spoof_time) : nlohmann::json(nullptr);
    return j;
  }

  static ScenarioScript from_json(const nlohmann::json& j) {
    ScenarioScript s;
    try {
      s.id = j.value("id", 0);
      s.trip_seconds = j.value("trip_seconds", 120.0);
      for (const auto& seg : j.at("segments")) {
        const auto label = label_from_name(seg.at("class").get<std::string>());
        if (!label) fail(ErrorCode::UnknownClass, "unknown class in scenario segment");
        const std::string phase = seg.value("phase", "benign");
        if (phase != "benign" && phase != "reaction")
          fail(ErrorCode::ConfigError, "segment phase must be benign or reaction");
        s.segments.push_back({seg.at("t0").get<double>(), seg.at("t1").get<double>(), *label,
                              phase == "reaction" ? Phase::Reaction : Phase::Benign});
      }
      if (j.contains("route"))
        for (const auto& w : j.at("route"))
          s.route.push_back({w.at("t").get<double>(), w.at("lat").get<double>(), w.at("lon").get<double>()});
      if (j.contains("spoof_time") && !j.at("spoof_time").is_null()) s.spoof_time = j.at("spoof_time").get<double>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ParseError, std::string("scenario script: ") + e.what());
    }
    s.validate();
    return s;
  }
};

/// Piecewise-linear interpolation along the scripted route.
inline LocationProvider route_location(std::vector<Waypoint> route) {
  return [route = std::move(route)](double t) -> LocationFix {
    if (route.empty()) return {t, 0.0, 0.0};
    if (t <= route.front().t) return {t, route.front().lat, route.front().lon};
    for (std::size_t i = 1; i < route.size(); ++i) {
      if (t <= route[i].t) {
        const auto& a = route[i - 1];
        const auto& b = route[i];
        const double u = b.t > a.t ? (t - a.t) / (b.t - a.t) : 1.0;
        return {t, a.lat + u * (b.lat - a.lat), a.lon + u * (b.lon - a.lon)};
      }
    }
    return {t, route.back().lat, route.back().lon};
  };
}

struct ScenarioOptions {
  double trip_seconds = 120.0;
  double mid_trip_frac = 0.5;
  double end_trip_frac = 0.9;
  double spoof_frac = 0.3;
  double min_reaction_seconds = 20.0;
  double max_reaction_seconds = 30.0;
  double origin_lat = 29.6516;
  double origin_lon = -82.3248;
};

namespace scenario_detail {

inline void route_for(ScenarioScript& s, const ScenarioOptions& opt) {
  // Heading north-east toward the destination until spoofed, then south-east
  // toward the traffickers' location.
  constexpr double kStep = 10.0;
  constexpr double kDegPerSecond = 1.5e-4;
  double lat = opt.origin_lat, lon = opt.origin_lon;
  for (double t = 0.0; t <= s.trip_seconds + 1e-9; t += kStep) {
    s.route.push_back({t, lat, lon});
    const bool diverted = s.spoof_time && t >= *s.spoof_time;
    lat += (diverted ? -0.5 : 1.0) * kDegPerSecond * kStep;
    lon += kDegPerSecond * kStep;
  }
}

inline void fill_benign(ScenarioScript& s, double t0, double t1, bool shared, Rng& rng) {
  double t = t0;
  bool talk = shared && uniform_int(rng, 0, 1) == 1;
  while (t < t1 - 1e-9) {
    const double len = shared ? uniform(rng, 4.0, 10.0) : t1 - t;
    const double end = std::min(t1, t + len);
    s.segments.push_back({t, end, talk ? ClassLabel::Conversation : ClassLabel::CarNoise, Phase::Benign});
    t = end;
    if (shared) talk = !talk;
  }
}

}  // namespace scenario_detail

/// Script for threat scenario 1-4; deterministic per seed.
inline ScenarioScript make_scenario_script(int id, std::uint64_t seed, const ScenarioOptions& opt = {}) {
  if (id < 1 || id > 4) fail(ErrorCode::ConfigError, "scenario id must be 1..4");
  Rng rng(seed * 7919ULL + static_cast<std::uint64_t>(id));
  ScenarioScript s;
  s.id = id;
  s.trip_seconds = opt.trip_seconds;
  const bool shared = id >= 3;
  const bool mid_trip = id == 1 || id == 3;
  const double onset = std::round((mid_trip ? opt.mid_trip_frac : opt.end_trip_frac) * opt.trip_seconds);
  const double reaction_len = uniform(rng, opt.min_reaction_seconds, opt.max_reaction_seconds);
  const double reaction_end = std::min(opt.trip_seconds, onset + reaction_len);
  s.spoof_time = std::round(opt.spoof_frac * opt.trip_seconds);

  std::vector<ClassLabel> reactions{ClassLabel::Crying, ClassLabel::Screaming};
  if (id == 1 || id == 3) reactions.push_back(ClassLabel::CarDoorBanging);

  scenario_detail::fill_benign(s, 0.0, onset, shared, rng);
  double t = onset;
  std::vector<ClassLabel> cycle;
  while (t < reaction_end - 1e-9) {
    if (cycle.empty()) {
      cycle = reactions;
      shuffle(cycle.begin(), cycle.end(), rng);
    }
    const double end = std::min(reaction_end, t + uniform(rng, 3.0, 6.0));
    s.segments.push_back({t, end, cycle.back(), Phase::Reaction});
    cycle.pop_back();
    t = end;
  }
  if (reaction_end < opt.trip_seconds)
    scenario_detail::fill_benign(s, reaction_end, opt.trip_seconds, shared, rng);
  scenario_detail::route_for(s, opt);
  s.validate();
  return s;
}

/// Car-noise-only trip without any reaction.
inline ScenarioScript make_benign_script(const ScenarioOptions& opt = {}) {
  ScenarioScript s;
  s.id = 0;
  s.trip_seconds = opt.trip_seconds;
  s.segments.push_back({0.0, opt.trip_seconds, ClassLabel::CarNoise, Phase::Benign});
  scenario_detail::route_for(s, opt);
  return s;
}

/// Conditioned clips per class, drawn from when rendering timelines.
using ClipBank = std::array<std::vector<AudioClip>, kNumClasses>;

inline ClipBank load_clip_bank(const Manifest& m, const std::filesystem::path& data_dir, double rate) {
  ClipBank bank;
  for (const auto& r : m)
    bank[static_cast<std::size_t>(class_id(r.label))].push_back(
        resample(load_wav(data_dir / r.file_name), rate));
  return bank;
}

/// Stitches clips of each segment's class end to end (last clip truncated).
inline AudioClip render_scenario(const ScenarioScript& script, const ClipBank& bank, double rate,
                                 std::uint64_t seed) {
  script.validate();
  for (const auto& s : script.segments)
    if (bank[static_cast<std::size_t>(class_id(s.label))].empty())
      fail(ErrorCode::MissingClass, "corpus has no clips of class " + std::string(class_name(s.label)));
  Rng rng(seed ^ 0x5ce9a41dULL);
  const auto total = static_cast<std::size_t>(std::llround(script.trip_seconds * rate));
  AudioClip out = AudioClip::silent(total, rate);
  for (const auto& s : script.segments) {
    const auto& pool = bank[static_cast<std::size_t>(class_id(s.label))];
    auto pos = static_cast<std::size_t>(std::llround(s.t0 * rate));
    const auto end = std::min(total, static_cast<std::size_t>(std::llround(s.t1 * rate)));
    while (pos < end) {
      const auto& clip = pool[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(pool.size()) - 1))];
      if (clip.rate != rate) fail(ErrorCode::InvalidRate, "clip bank rate mismatch");
      const std::size_t n = std::min(clip.frames(), end - pos);
      if (n == 0) break;
      for (int c = 0; c < 2; ++c)
        std::copy_n(clip.channels[c].begin(), n, out.channels[c].begin() + static_cast<std::ptrdiff_t>(pos));
      pos += n;
    }
  }
  return out;
}

struct ScenarioBuild {
  ScenarioScript script;
  AudioClip audio;
};

inline ScenarioBuild build_scenario(int id, const ClipBank& bank, std::uint64_t seed,
                                    const ScenarioOptions& opt = {}, double rate = 44100.0) {
  ScenarioScript s = make_scenario_script(id, seed, opt);
  AudioClip audio = render_scenario(s, bank, rate, seed);
  return {std::move(s), std::move(audio)};
}

struct ScenarioReport {
  int id = 0;
  bool detected = false;
  std::optional<double> reaction_onset;
  std::optional<double> latency_s;
  std::size_t false_alarms = 0;
  std::size_t windows = 0;
  std::vector<AlertEvent> alerts;

  nlohmann::json to_json() const {
    nlohmann::json log = nlohmann::json::array();
    for (const auto& a : alerts) log.push_back(a.to_json());
    nlohmann::json j{{"id", id}, {"detected", detected}, {"false_alarms", false_alarms},
                     {"windows", windows}, {"alerts", log}};
    j["reaction_onset"] = reaction_onset ? nlohmann::json(*reaction_onset) : nlohmann::json(nullptr);
    j["latency_s"] = latency_s ? nlohmann::json(*latency_s) : nlohmann::json(nullptr);
    return j;
  }
};

/// Scores an alert log against a script: alerts before the reaction onset
/// are false alarms; latency runs from onset to the first later alert.
inline ScenarioReport score_alerts(const ScenarioScript& script, std::vector<AlertEvent> alerts,
                                   std::size_t windows) {
  ScenarioReport rep;
  rep.id = script.id;
  rep.windows = windows;
  rep.reaction_onset = script.reaction_onset();
  for (const auto& a : alerts) {
    if (!rep.reaction_onset || a.ts < *rep.reaction_onset) {
      ++rep.false_alarms;
    } else if (!rep.detected) {
      rep.detected = true;
      rep.latency_s = a.ts - *rep.reaction_onset;
    }
  }
  rep.alerts = std::move(alerts);
  return rep;
}

/// Replays the stitched audio and scripted route through stream_detect.
inline ScenarioReport run_scenario(const ScenarioBuild& build, const Model<float>& model,
                                   const PipelineConfig& pipe, const DetectConfig& cfg,
                                   AlertSink* extra_sink = nullptr) {
  ClipSource source(build.audio);
  MemorySink mem;
  struct Tee : AlertSink {
    AlertSink* a;
    AlertSink* b;
    void write(const AlertEvent& e) override {
      a->write(e);
      if (b) b->write(e);
    }
  } tee;
  tee.a = &mem;
  tee.b = extra_sink;
  const RunSummary sum = stream_detect(source, route_location(build.script.route), model, pipe, cfg, tee);
  return score_alerts(build.script, std::move(mem.events), sum.windows);
}

}  // namespace hta
