// hta: corpus preparation, training, evaluation, streaming detection and
// scenario simulation from one binary.
//
// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.

#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hta/checkpoint.hpp"
#include "hta/config.hpp"
#include "hta/corpus.hpp"
#include "hta/detection.hpp"
#include "hta/manifest.hpp"
#include "hta/scenario.hpp"
#include "hta/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// Flags are collected as raw strings under their config key so that the
// config file and the command line share one parser.
struct FlagSet {
  std::deque<std::pair<std::string, std::optional<std::string>>> values;  // stable slots
  std::vector<std::string> sets;
  std::string config_file;

  void add(CLI::App* app, const std::string& key, const std::string& help) {
    auto& slot = values.emplace_back(key, std::nullopt).second;
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    app->add_option_function<std::string>(flag, [&slot](const std::string& v) { slot = v; }, help);
  }

  hta::Settings overrides() const {
    hta::Settings out;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) hta::fail(hta::ErrorCode::ConfigError, "--set expects key=value, got '" + s + "'");
      out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& [k, v] : values)
      if (v) out.emplace_back(k, *v);
    return out;
  }

  hta::RunConfig resolve() const {
    const hta::Settings file = config_file.empty() ? hta::Settings{} : hta::load_config_file(config_file);
    return hta::merge_config(file, overrides());
  }
};

void add_common(CLI::App* app, FlagSet& f) {
  app->add_option("--config", f.config_file, "key = value config file");
  app->add_option("--set", f.sets, "override any config key (key=value), repeatable");
}

std::string require_path(const hta::RunConfig& cfg, const std::string& key) {
  std::string p = cfg.path(key);
  if (p.empty()) {
    std::string flag = "--" + key;
    for (auto& ch : flag)
      if (ch == '_') ch = '-';
    hta::fail(hta::ErrorCode::ConfigError, "missing required " + flag + " (config key " + key + ")");
  }
  return p;
}

fs::path data_dir_for(const hta::RunConfig& cfg, const std::string& manifest) {
  const std::string d = cfg.path("data_dir");
  return d.empty() ? fs::path(manifest).parent_path() : fs::path(d);
}

void write_json(const nlohmann::json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) hta::fail(hta::ErrorCode::IoError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

int run_prep(const hta::RunConfig& cfg) {
  const fs::path out = require_path(cfg, "out");
  fs::create_directories(out);
  hta::Manifest m;
  const std::string src = cfg.path("source_dir");
  if (src.empty()) {
    m = hta::synth_corpus(cfg.corpus, out);
  } else {
    auto res = hta::ingest(src);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    m = std::move(res.manifest);
    // Paths stay relative to the source tree.
    hta::save_manifest(out / "manifest.csv", m);
  }
  const auto [tr, va] = hta::stratified_split(m, cfg.train.train_frac, cfg.train.seed);
  hta::save_manifest(out / "train.csv", tr);
  hta::save_manifest(out / "val.csv", va);
  std::cerr << "prep: " << m.size() << " clips, " << tr.size() << " train / " << va.size() << " validation\n";
  return kExitOk;
}

int run_train(const hta::RunConfig& cfg) {
  const std::string manifest = require_path(cfg, "manifest");
  const std::string out = require_path(cfg, "out");
  const hta::Manifest train_m = hta::load_manifest(manifest);
  std::optional<hta::Manifest> val_m;
  if (!cfg.path("val_manifest").empty()) val_m = hta::load_manifest(cfg.path("val_manifest"));
  if (cfg.train.target_val_accuracy && !val_m)
    hta::fail(hta::ErrorCode::ConfigError, "target_accuracy needs --val-manifest");

  auto result = hta::train(cfg.train, train_m, data_dir_for(cfg, manifest), val_m ? &*val_m : nullptr,
                           [](const hta::EpochStats& s) {
                             std::cerr << "epoch " << s.epoch << " loss " << s.loss << " train_acc "
                                       << s.train_accuracy;
                             if (s.val_accuracy) std::cerr << " val_acc " << *s.val_accuracy;
                             std::cerr << '\n';
                           });
  hta::save_checkpoint(result.model, out);
  std::string history = cfg.path("history");
  if (history.empty()) history = fs::path(out).replace_extension(".history.csv").string();
  hta::save_history_csv(history, result.history);
  return kExitOk;
}

int run_eval(const hta::RunConfig& cfg) {
  const std::string manifest = require_path(cfg, "manifest");
  const auto model = hta::load_checkpoint(require_path(cfg, "checkpoint"));
  const auto rep = hta::evaluate(model, hta::load_manifest(manifest), data_dir_for(cfg, manifest), cfg.train.pipeline);
  std::cerr << rep.to_text();
  write_json(rep.to_json(), cfg.path("report"));
  return kExitOk;
}

int run_detect(const hta::RunConfig& cfg) {
  const auto model = hta::load_checkpoint(require_path(cfg, "checkpoint"));
  const std::string input = require_path(cfg, "input");
  std::unique_ptr<hta::AudioSource> source;
  if (input == "-") {
    source = std::make_unique<hta::PcmStreamSource>(std::cin, cfg.input_rate);
  } else {
    source = std::make_unique<hta::ClipSource>(hta::load_wav(input));
  }
  auto sink = hta::make_sink(cfg.sink, std::cout);
  const auto summary = hta::stream_detect(*source, hta::fixed_location(cfg.lat, cfg.lon), model,
                                          cfg.train.pipeline, cfg.detect, *sink);
  const std::string report = cfg.path("report");
  if (!report.empty()) {
    write_json(summary.to_json(), report);
  } else {
    std::cerr << summary.to_json().dump() << '\n';
  }
  return kExitOk;
}

int run_simulate(const hta::RunConfig& cfg) {
  const std::string script_path = cfg.path("script");
  if (script_path.empty() && (cfg.scenario < 1 || cfg.scenario > 4))
    hta::fail(hta::ErrorCode::ConfigError, "--scenario must be one of 1, 2, 3, 4");
  const auto model = hta::load_checkpoint(require_path(cfg, "checkpoint"));
  const std::string manifest = require_path(cfg, "manifest");
  const hta::ClipBank bank = hta::load_clip_bank(hta::load_manifest(manifest), data_dir_for(cfg, manifest),
                                                 cfg.train.pipeline.clip.target_rate);
  hta::ScenarioBuild build;
  if (script_path.empty()) {
    hta::ScenarioOptions opt;
    opt.trip_seconds = cfg.trip_seconds;
    build = hta::build_scenario(cfg.scenario, bank, cfg.train.seed, opt, cfg.train.pipeline.clip.target_rate);
  } else {
    std::ifstream in(script_path);
    if (!in) hta::fail(hta::ErrorCode::IoError, "cannot open script " + script_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      hta::fail(hta::ErrorCode::ParseError, std::string("script: ") + e.what());
    }
    build.script = hta::ScenarioScript::from_json(j);
    build.audio = hta::render_scenario(build.script, bank, cfg.train.pipeline.clip.target_rate, cfg.train.seed);
  }
  std::unique_ptr<hta::AlertSink> sink;
  if (cfg.sink != "-") sink = hta::make_sink(cfg.sink, std::cout);
  const auto rep = hta::run_scenario(build, model, cfg.train.pipeline, cfg.detect, sink.get());
  write_json(rep.to_json(), cfg.path("report"));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acoustic threat detection for autonomous vehicles"};
  app.require_subcommand(1);

  FlagSet prep_f, train_f, eval_f, detect_f, sim_f;

  auto* prep = app.add_subcommand("prep", "synthesize a corpus or index a folder of WAV files");
  add_common(prep, prep_f);
  prep_f.add(prep, "out", "output directory (manifest.csv, train.csv, val.csv)");
  prep_f.add(prep, "source_dir", "ingest <dir>/<class>/*.wav instead of synthesizing");
  prep_f.add(prep, "clips_per_class", "synthetic clips per class");
  prep_f.add(prep, "seed", "RNG seed");
  prep_f.add(prep, "train_frac", "stratified train fraction");

  auto* train = app.add_subcommand("train", "train the classifier");
  add_common(train, train_f);
  for (const auto& [k, h] : std::vector<std::pair<std::string, std::string>>{
           {"manifest", "training manifest CSV"},
           {"val_manifest", "validation manifest CSV"},
           {"data_dir", "audio root (default: manifest directory)"},
           {"out", "checkpoint path"},
           {"history", "per-epoch history CSV (default: checkpoint path with .history.csv extension)"},
           {"seed", "RNG seed"},
           {"epochs", "maximum epochs"},
           {"batch_size", "mini-batch size"},
           {"lr", "learning rate"},
           {"feature", "log-mel or mfcc"},
           {"target_accuracy", "stop once validation accuracy reaches this"}})
    train_f.add(train, k, h);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  add_common(eval, eval_f);
  eval_f.add(eval, "checkpoint", "checkpoint path");
  eval_f.add(eval, "manifest", "manifest CSV");
  eval_f.add(eval, "data_dir", "audio root (default: manifest directory)");
  eval_f.add(eval, "report", "write report JSON here instead of stdout");
  eval_f.add(eval, "feature", "log-mel or mfcc (must match training)");

  auto* detect = app.add_subcommand("detect", "stream a WAV file or stdin PCM through the detector");
  add_common(detect, detect_f);
  for (const auto& [k, h] : std::vector<std::pair<std::string, std::string>>{
           {"checkpoint", "checkpoint path"},
           {"input", "WAV file, or - for s16le stereo PCM on stdin"},
           {"input_rate", "sample rate of stdin PCM"},
           {"sink", "- (stdout), file:<path> or tcp:<host>:<port>"},
           {"report", "write run summary JSON here"},
           {"lat", "vehicle latitude"},
           {"lon", "vehicle longitude"},
           {"vehicle_id", "vehicle id in alert records"},
           {"conf_threshold", "minimum top-class confidence"},
           {"feature", "log-mel or mfcc (must match training)"}})
    detect_f.add(detect, k, h);

  auto* sim = app.add_subcommand("simulate", "replay a threat scenario and report detection latency");
  add_common(sim, sim_f);
  for (const auto& [k, h] : std::vector<std::pair<std::string, std::string>>{
           {"scenario", "scenario id 1..4"},
           {"script", "custom scenario script JSON (overrides --scenario)"},
           {"checkpoint", "checkpoint path"},
           {"manifest", "manifest of clips to stitch scenario audio from"},
           {"data_dir", "audio root (default: manifest directory)"},
           {"seed", "scenario seed"},
           {"trip_seconds", "trip length"},
           {"sink", "also send alerts to file:<path> or tcp:<host>:<port>"},
           {"report", "write report JSON here instead of stdout"},
           {"feature", "log-mel or mfcc (must match training)"}})
    sim_f.add(sim, k, h);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*prep) return run_prep(prep_f.resolve());
    if (*train) return run_train(train_f.resolve());
    if (*eval) return run_eval(eval_f.resolve());
    if (*detect) return run_detect(detect_f.resolve());
    if (*sim) return run_simulate(sim_f.resolve());
  } catch (const hta::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (e.is_validation()) {
      for (auto* sub : app.get_subcommands()) std::cerr << sub->help();
      return kExitUsage;
    }
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
