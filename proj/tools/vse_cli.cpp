// Command-line front end for the vehicle state estimator. Talks to the
// estimation library exclusively through the C API (vse/vse_c.h).
//
// Verbs:
//   simulate  synthesize a sensor log from a config
//   estimate  replay a log (or simulate one) and write the trajectory CSV
//   evaluate  replay and write the metrics report (+ timing artifact)
//   sweep     evaluate across a list of window lengths
//
// Exit codes: 0 ok, 2 config/usage error, 3 degenerate final estimate.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vse/vse_c.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitDegenerate = 3;

struct ConfigDeleter {
  void operator()(vse_config* c) const { vse_config_destroy(c); }
};
struct ResultDeleter {
  void operator()(vse_result* r) const { vse_result_destroy(r); }
};
using ConfigPtr = std::unique_ptr<vse_config, ConfigDeleter>;
using ResultPtr = std::unique_ptr<vse_result, ResultDeleter>;

[[nodiscard]] int fail_config(const std::string& context) {
  std::cerr << "error: " << context << ": " << vse_last_error() << "\n";
  return kExitConfigError;
}

/// Loads --config (when given) and applies --set section.key=value overrides,
/// so precedence is CLI > file > built-in default.
ConfigPtr make_config(const std::string& config_path, const std::vector<std::string>& overrides,
                      int& exit_code) {
  vse_config* raw = nullptr;
  if (config_path.empty()) {
    if (vse_config_create(&raw) != VSE_OK) {
      exit_code = fail_config("creating config");
      return nullptr;
    }
  } else if (vse_config_load(config_path.c_str(), &raw) != VSE_OK) {
    exit_code = fail_config("loading " + config_path);
    return nullptr;
  }
  ConfigPtr cfg(raw);

  for (const std::string& item : overrides) {
    const size_t eq = item.find('=');
    const size_t dot = item.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      std::cerr << "error: --set expects section.key=value, got '" << item << "'\n";
      exit_code = kExitConfigError;
      return nullptr;
    }
    const std::string section = item.substr(0, dot);
    const std::string key = item.substr(dot + 1, eq - dot - 1);
    const std::string value = item.substr(eq + 1);
    if (vse_config_set(cfg.get(), section.c_str(), key.c_str(), value.c_str()) != VSE_OK) {
      exit_code = fail_config("applying --set " + item);
      return nullptr;
    }
  }
  return cfg;
}

bool write_text(const std::string& path, const char* text) {
  if (path.empty()) return true;
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out.good()) {
    std::cerr << "error: cannot write " << path << "\n";
    return false;
  }
  return true;
}

int run_and_emit(const vse_config* cfg, const std::string& csv_path,
                 const std::string& report_path, const std::string& timing_path,
                 bool print_report, bool print_csv) {
  vse_result* raw = nullptr;
  if (vse_run_pipeline(cfg, &raw) != VSE_OK) return fail_config("running pipeline");
  ResultPtr result(raw);

  if (!write_text(csv_path, vse_result_csv(result.get())) ||
      !write_text(report_path, vse_result_report(result.get())) ||
      !write_text(timing_path, vse_result_timing(result.get()))) {
    return kExitConfigError;
  }
  if (print_csv) std::cout << vse_result_csv(result.get());
  if (print_report) std::cout << vse_result_report(result.get());
  return vse_result_exit_code(result.get()) == 0 ? kExitOk : kExitDegenerate;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("vehicle state estimator ") + vse_version()};
  app.require_subcommand(1);
  app.fallthrough();  // allow -c/--set after the verb

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "Config file (key = value under [sections])");
  app.add_option("--set", overrides,
                 "Override a config entry as section.key=value (repeatable; wins over the file)");

  auto* simulate = app.add_subcommand("simulate", "Synthesize a sensor log from the config");
  std::string sim_output = "sensors.log";
  simulate->add_option("-o,--output", sim_output, "Log file to write")->capture_default_str();

  auto* estimate = app.add_subcommand("estimate", "Replay and write the trajectory CSV");
  std::string est_csv = "trajectory.csv";
  std::string est_report, est_timing;
  bool est_print = false;
  estimate->add_option("--csv", est_csv, "Trajectory CSV path")->capture_default_str();
  estimate->add_option("--report", est_report, "Also write the metrics report here");
  estimate->add_option("--timing", est_timing, "Also write the timing artifact here");
  estimate->add_flag("--print", est_print, "Print the CSV to stdout instead of only writing it");

  auto* evaluate = app.add_subcommand("evaluate", "Replay and write the metrics report");
  std::string eval_report = "report.json";
  std::string eval_timing, eval_csv;
  evaluate->add_option("--report", eval_report, "Metrics report path")->capture_default_str();
  evaluate->add_option("--timing", eval_timing, "Timing artifact path");
  evaluate->add_option("--csv", eval_csv, "Also write the trajectory CSV here");

  auto* sweep = app.add_subcommand("sweep", "Evaluate across window lengths");
  std::vector<double> windows{0.5, 1.0, 2.0};
  std::string sweep_dir = ".";
  sweep->add_option("--windows", windows, "Window lengths in seconds")->capture_default_str();
  sweep->add_option("--out-dir", sweep_dir, "Directory for report_w<length>.json files")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  int exit_code = kExitOk;
  ConfigPtr cfg = make_config(config_path, overrides, exit_code);
  if (!cfg) return exit_code;

  if (simulate->parsed()) {
    if (vse_simulate(cfg.get(), sim_output.c_str()) != VSE_OK) {
      return fail_config("simulating to " + sim_output);
    }
    std::cout << "wrote " << sim_output << "\n";
    return kExitOk;
  }

  if (estimate->parsed()) {
    return run_and_emit(cfg.get(), est_csv, est_report, est_timing, false, est_print);
  }

  if (evaluate->parsed()) {
    const int code = run_and_emit(cfg.get(), eval_csv, eval_report, eval_timing, true, false);
    return code;
  }

  // sweep
  int worst = kExitOk;
  for (const double w : windows) {
    char value[32];
    std::snprintf(value, sizeof(value), "%g", w);
    if (vse_config_set(cfg.get(), "estimator", "window_length", value) != VSE_OK) {
      return fail_config("setting window length");
    }
    char name[64];
    std::snprintf(name, sizeof(name), "%s/report_w%g.json", sweep_dir.c_str(), w);
    std::cout << "window " << w << " s -> " << name << "\n";
    const int code = run_and_emit(cfg.get(), "", name, "", false, false);
    if (code != kExitOk) worst = code;
  }
  return worst;
}
