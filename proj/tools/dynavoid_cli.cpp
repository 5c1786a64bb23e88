// Command-line front door for the dynavoid shared library. Talks to the core
// exclusively through the C API in dynavoid.h.

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dynavoid.h"

using json = nlohmann::json;

namespace {

struct ScenarioHandle {
  dv_scenario* ptr{nullptr};
  ~ScenarioHandle() { dv_scenario_free(ptr); }
};

struct OptionsHandle {
  dv_options* ptr{nullptr};
  ~OptionsHandle() { dv_options_free(ptr); }
};

struct OwnedString {
  char* ptr{nullptr};
  ~OwnedString() { dv_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

int report_error(const char* stage) {
  std::fprintf(stderr, "error: %s: %s\n", stage, dv_last_error());
  return 1;
}

bool split_override(const std::string& kv, std::string& key, std::string& value) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == kv.size()) return false;
  key = kv.substr(0, eq);
  value = kv.substr(eq + 1);
  return true;
}

void print_episode_summary(const json& report) {
  std::printf("result:      %s (%s)\n", report["success"].get<bool>() ? "success" : "failure",
              report["end_reason"].get<std::string>().c_str());
  if (!report["t_flight_s"].is_null())
    std::printf("flight time: %.2f s\n", report["t_flight_s"].get<double>());
  std::printf("v_max:       %.2f m/s (largest per-axis sample)\n",
              report["v_max_mps"].get<double>());
  std::printf("T_per:       mean %.3f ms, max %.3f ms\n",
              report["t_per_ms"]["mean"].get<double>(), report["t_per_ms"]["max"].get<double>());
  std::printf("T_replan:    mean %.3f ms, max %.3f ms\n",
              report["t_replan_ms"]["mean"].get<double>(),
              report["t_replan_ms"]["max"].get<double>());
  std::printf("end-to-end:  mean %.3f ms\n", report["end_to_end_ms"]["mean"].get<double>());
  if (!report["trace_path"].is_null())
    std::printf("trace:       %s\n", report["trace_path"].get<std::string>().c_str());
}

int cmd_run(const std::string& scenario_path, uint64_t seed, bool seed_set,
            const std::string& trace, const std::string& detector,
            const std::vector<std::string>& overrides, const std::string& map_dump) {
  ScenarioHandle sc;
  if (dv_scenario_load_file(scenario_path.c_str(), &sc.ptr) != DV_OK)
    return report_error("loading scenario");

  OptionsHandle opt;
  dv_options_create(&opt.ptr);
  if (seed_set) dv_options_set_seed(opt.ptr, seed);
  if (!trace.empty() && dv_options_set_trace_path(opt.ptr, trace.c_str()) != DV_OK)
    return report_error("trace path");
  if (!map_dump.empty()) dv_options_set_map_dump_path(opt.ptr, map_dump.c_str());
  if (dv_options_set_detector(opt.ptr, detector.c_str()) != DV_OK)
    return report_error("detector");
  for (const auto& kv : overrides) {
    std::string key, value;
    if (!split_override(kv, key, value)) {
      std::fprintf(stderr, "error: override '%s' is not of the form key=value\n", kv.c_str());
      return 1;
    }
    if (dv_options_set_override(opt.ptr, key.c_str(), value.c_str()) != DV_OK)
      return report_error("override");
  }

  OwnedString report;
  if (dv_run_episode(sc.ptr, opt.ptr, &report.ptr) != DV_OK) return report_error("episode");
  const json j = json::parse(report.str());
  std::printf("scenario:    %s (seed %llu)\n", scenario_path.c_str(),
              static_cast<unsigned long long>(j["seed"].get<uint64_t>()));
  print_episode_summary(j);
  std::printf("config:      %s\n", j["config"].dump().c_str());
  return j["success"].get<bool>() ? 0 : 2;
}

int cmd_batch(const std::string& scenario_path, int runs, uint64_t seed_base,
              const std::string& report_path, const std::string& detector,
              const std::vector<std::string>& overrides) {
  ScenarioHandle sc;
  if (dv_scenario_load_file(scenario_path.c_str(), &sc.ptr) != DV_OK)
    return report_error("loading scenario");

  OptionsHandle opt;
  dv_options_create(&opt.ptr);
  if (dv_options_set_detector(opt.ptr, detector.c_str()) != DV_OK)
    return report_error("detector");
  for (const auto& kv : overrides) {
    std::string key, value;
    if (!split_override(kv, key, value)) {
      std::fprintf(stderr, "error: override '%s' is not of the form key=value\n", kv.c_str());
      return 1;
    }
    if (dv_options_set_override(opt.ptr, key.c_str(), value.c_str()) != DV_OK)
      return report_error("override");
  }

  OwnedString report;
  if (dv_run_batch(sc.ptr, runs, seed_base, opt.ptr, &report.ptr) != DV_OK)
    return report_error("batch");
  const json j = json::parse(report.str());
  std::printf("scenario:   %s\n", j["scenario"].get<std::string>().c_str());
  std::printf("runs:       %d\n", j["runs"].get<int>());
  std::printf("r:          %.3f\n", j["r"].get<double>());
  std::printf("T_per:      %.3f ms mean\n", j["t_per_mean_ms"].get<double>());
  std::printf("T_replan:   %.3f ms mean\n", j["t_replan_mean_ms"].get<double>());
  if (!j["t_flight_mean_s"].is_null())
    std::printf("T_flight:   %.2f s mean (successes)\n", j["t_flight_mean_s"].get<double>());
  std::printf("v_max:      %.2f m/s\n", j["v_max_mps"].get<double>());
  if (!report_path.empty()) {
    FILE* f = std::fopen(report_path.c_str(), "w");
    if (!f) {
      std::fprintf(stderr, "error: cannot write report to %s\n", report_path.c_str());
      return 1;
    }
    std::fputs(report.str().c_str(), f);
    std::fclose(f);
    std::printf("report:     %s\n", report_path.c_str());
  }
  return 0;
}

int cmd_validate(const std::string& scenario_path) {
  ScenarioHandle sc;
  if (dv_scenario_load_file(scenario_path.c_str(), &sc.ptr) != DV_OK)
    return report_error("loading scenario");
  OwnedString diag;
  const dv_status status = dv_scenario_validate(sc.ptr, &diag.ptr);
  const json j = json::parse(diag.str());
  if (status == DV_OK) {
    std::printf("OK\n");
    return 0;
  }
  for (const auto& issue : j["issues"])
    std::fprintf(stderr, "invalid: %s: %s\n", issue["path"].get<std::string>().c_str(),
                 issue["message"].get<std::string>().c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynavoid: dynamic obstacle avoidance simulator"};
  app.require_subcommand(1);

  std::string scenario_path, trace, report_path, detector = "oracle", map_dump;
  std::vector<std::string> overrides;
  uint64_t seed = 0, seed_base = 0;
  int runs = 30;

  auto* run = app.add_subcommand("run", "Run a single episode");
  run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  auto* seed_opt = run->add_option("--seed", seed, "Episode seed");
  run->add_option("--trace", trace, "Trace output file (JSON lines)");
  run->add_option("--detector", detector, "Detector kind: oracle|baseline");
  run->add_option("--override", overrides, "Config override key=value (repeatable)");
  run->add_option("--dump-map", map_dump, "Write the final map occupancy to a JSON file");

  auto* batch = app.add_subcommand("batch", "Run a seeded batch and aggregate metrics");
  batch->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  batch->add_option("--runs", runs, "Number of episodes");
  batch->add_option("--seed-base", seed_base, "First seed");
  batch->add_option("--report", report_path, "Batch report JSON output file");
  batch->add_option("--detector", detector, "Detector kind: oracle|baseline");
  batch->add_option("--override", overrides, "Config override key=value (repeatable)");

  auto* validate = app.add_subcommand("validate", "Validate a scenario file");
  validate->add_option("--scenario", scenario_path, "Scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed())
    return cmd_run(scenario_path, seed, seed_opt->count() > 0, trace, detector, overrides,
                   map_dump);
  if (batch->parsed())
    return cmd_batch(scenario_path, runs, seed_base, report_path, detector, overrides);
  return cmd_validate(scenario_path);
}
