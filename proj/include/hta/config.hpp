#pragma once

// Flat "key = value" run configuration shared by every CLI subcommand.
// Lines starting with '#' are comments. Flags use the same keys and win.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hta/corpus.hpp"
#include "hta/detection.hpp"
#include "hta/error.hpp"
#include "hta/training.hpp"

namespace hta {

struct RunConfig {
  TrainConfig train;
  DetectConfig detect;
  CorpusSpec corpus;
  std::string sink = "-";
  double lat = 29.6516;
  double lon = -82.3248;
  double input_rate = 44100.0;  // declared rate of raw PCM on stdin
  int scenario = 0;
  double trip_seconds = 120.0;
  // Paths, by key: manifest, val_manifest, data_dir, out, checkpoint,
  // history, input, report, script, source_dir.
  std::map<std::string, std::string> paths;

  std::string path(const std::string& key) const {
    auto it = paths.find(key);
    return it == paths.end() ? std::string() : it->second;
  }
};

namespace config_detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorCode::ConfigError, key + ": expected a number, got '" + v + "'");
  return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(ErrorCode::ConfigError, key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::ConfigError, key + ": expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto num = [&t](const char* k, auto member) {
      t[k] = [member](RunConfig& c, const std::string& key, const std::string& v) { member(c) = to_double(key, v); };
    };
    auto uint = [&t](const char* k, auto member) {
      t[k] = [member](RunConfig& c, const std::string& key, const std::string& v) {
        member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(to_uint(key, v));
      };
    };
    auto path = [&t](const char* k) {
      t[k] = [](RunConfig& c, const std::string& key, const std::string& v) { c.paths[key] = v; };
    };

    t["sample_rate"] = [](RunConfig& c, const std::string& key, const std::string& v) {
      c.train.pipeline.clip.target_rate = to_double(key, v);
      c.corpus.rate = c.train.pipeline.clip.target_rate;
    };
    num("clip_seconds", [](RunConfig& c) -> double& { return c.train.pipeline.clip.clip_seconds; });
    num("shift_frac", [](RunConfig& c) -> double& { return c.train.pipeline.clip.shift_frac; });
    uint("n_fft", [](RunConfig& c) -> std::size_t& { return c.train.pipeline.features.n_fft; });
    uint("hop", [](RunConfig& c) -> std::size_t& { return c.train.pipeline.features.hop; });
    uint("n_mels", [](RunConfig& c) -> std::size_t& { return c.train.pipeline.features.n_mels; });
    num("fmin", [](RunConfig& c) -> double& { return c.train.pipeline.features.fmin; });
    t["fmax"] = [](RunConfig& c, const std::string& key, const std::string& v) {
      c.train.pipeline.features.fmax = to_double(key, v);
    };
    num("top_db", [](RunConfig& c) -> double& { return c.train.pipeline.features.top_db; });
    t["feature"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.train.pipeline.features.kind = parse_feature_kind(v);
    };
    uint("n_mfcc", [](RunConfig& c) -> std::size_t& { return c.train.pipeline.features.n_mfcc; });
    uint("freq_masks", [](RunConfig& c) -> std::size_t& { return c.train.pipeline.features.freq_masks; });
    uint("time_masks", [](RunConfig& c) -> std::size_t& { return c.train.pipeline.features.time_masks; });
    num("mask_frac", [](RunConfig& c) -> double& { return c.train.pipeline.features.mask_frac; });

    num("lr", [](RunConfig& c) -> double& { return c.train.lr; });
    uint("epochs", [](RunConfig& c) -> std::size_t& { return c.train.epochs; });
    uint("batch_size", [](RunConfig& c) -> std::size_t& { return c.train.batch_size; });
    t["seed"] = [](RunConfig& c, const std::string& key, const std::string& v) {
      c.train.seed = to_uint(key, v);
      c.corpus.seed = c.train.seed;
    };
    num("train_frac", [](RunConfig& c) -> double& { return c.train.train_frac; });
    t["augment"] = [](RunConfig& c, const std::string& key, const std::string& v) { c.train.augment = to_bool(key, v); };
    t["target_accuracy"] = [](RunConfig& c, const std::string& key, const std::string& v) {
      c.train.target_val_accuracy = to_double(key, v);
    };

    num("window_seconds", [](RunConfig& c) -> double& { return c.detect.window_seconds; });
    num("window_hop_seconds", [](RunConfig& c) -> double& { return c.detect.window_hop_seconds; });
    num("conf_threshold", [](RunConfig& c) -> double& { return c.detect.conf_threshold; });
    uint("raise_k", [](RunConfig& c) -> std::size_t& { return c.detect.raise_k; });
    uint("raise_m", [](RunConfig& c) -> std::size_t& { return c.detect.raise_m; });
    uint("release_n", [](RunConfig& c) -> std::size_t& { return c.detect.release_n; });
    num("emit_hz", [](RunConfig& c) -> double& { return c.detect.emit_hz; });
    t["vehicle_id"] = [](RunConfig& c, const std::string&, const std::string& v) { c.detect.vehicle_id = v; };
    t["sink"] = [](RunConfig& c, const std::string&, const std::string& v) { c.sink = v; };
    num("lat", [](RunConfig& c) -> double& { return c.lat; });
    num("lon", [](RunConfig& c) -> double& { return c.lon; });
    num("input_rate", [](RunConfig& c) -> double& { return c.input_rate; });

    uint("clips_per_class", [](RunConfig& c) -> std::size_t& { return c.corpus.clips_per_class; });
    t["scenario"] = [](RunConfig& c, const std::string& key, const std::string& v) {
      c.scenario = static_cast<int>(to_uint(key, v));
    };
    num("trip_seconds", [](RunConfig& c) -> double& { return c.trip_seconds; });

    for (const char* k : {"manifest", "val_manifest", "data_dir", "out", "checkpoint", "history", "input",
                          "report", "script", "source_dir"})
      path(k);
    return t;
  }();
  return table;
}

}  // namespace config_detail

inline bool is_config_key(const std::string& key) { return config_detail::setters().count(key) > 0; }

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : config_detail::setters()) out.push_back(k);
  return out;
}

/// Sets one key; unknown keys and unparseable values raise ConfigError.
inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& t = config_detail::setters();
  auto it = t.find(key);
  if (it == t.end()) fail(ErrorCode::ConfigError, "unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

using Settings = std::vector<std::pair<std::string, std::string>>;

inline Settings parse_config_text(std::istream& in) {
  Settings out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = config_detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": expected key = value");
    std::string key = config_detail::trim(line.substr(0, eq));
    std::string value = config_detail::trim(line.substr(eq + 1));
    if (!is_config_key(key))
      fail(ErrorCode::ConfigError, "line " + std::to_string(line_no) + ": unknown config key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline Settings load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot open config file " + path.string());
  return parse_config_text(in);
}

/// File settings first, then flag overrides; the merged result is validated.
inline RunConfig merge_config(const Settings& file, const Settings& flags) {
  RunConfig cfg;
  for (const auto& [k, v] : file) apply_setting(cfg, k, v);
  for (const auto& [k, v] : flags) apply_setting(cfg, k, v);
  cfg.train.validate();
  cfg.detect.validate();
  return cfg;
}

}  // namespace hta
