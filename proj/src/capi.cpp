#include "dynavoid.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "dynavoid/scenario_io.hpp"
#include "dynavoid/sim.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

dv_status fail(dv_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
dv_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const dynavoid::ConfigError& e) {
    return fail(DV_ERR_INVALID, e.what());
  } catch (const dynavoid::ContractViolation& e) {
    return fail(DV_ERR_RUNTIME, e.what());
  } catch (const std::exception& e) {
    return fail(DV_ERR_RUNTIME, e.what());
  }
}

}  // namespace

struct dv_scenario {
  dynavoid::Scenario scenario;
};

struct dv_options {
  dynavoid::RunOptions run;
  dynavoid::StackConfig config;
};

extern "C" {

const char* dv_version(void) { return "1.0.0"; }

const char* dv_last_error(void) { return g_last_error.c_str(); }

dv_status dv_scenario_load_file(const char* path, dv_scenario** out) {
  if (!path || !out) return fail(DV_ERR_USAGE, "null argument");
  *out = nullptr;
  return guarded([&]() -> dv_status {
    try {
      auto handle = new dv_scenario{dynavoid::scenario_from_file(path)};
      *out = handle;
      g_last_error.clear();
      return DV_OK;
    } catch (const dynavoid::ConfigError& e) {
      const std::string what = e.what();
      return fail(what.find("cannot open") != std::string::npos ? DV_ERR_IO : DV_ERR_PARSE,
                  what);
    }
  });
}

dv_status dv_scenario_load_string(const char* json_text, dv_scenario** out) {
  if (!json_text || !out) return fail(DV_ERR_USAGE, "null argument");
  *out = nullptr;
  return guarded([&]() -> dv_status {
    try {
      *out = new dv_scenario{dynavoid::scenario_from_json(json_text)};
      g_last_error.clear();
      return DV_OK;
    } catch (const dynavoid::ConfigError& e) {
      return fail(DV_ERR_PARSE, e.what());
    }
  });
}

void dv_scenario_free(dv_scenario* sc) { delete sc; }

dv_status dv_scenario_validate(const dv_scenario* sc, char** diagnostics_json) {
  if (!sc) return fail(DV_ERR_USAGE, "null scenario");
  return guarded([&]() -> dv_status {
    const dynavoid::ValidationReport report = dynavoid::validate_scenario(sc->scenario);
    if (diagnostics_json) *diagnostics_json = dup_string(report.to_json());
    if (!report.valid) {
      std::string msg = "scenario invalid:";
      for (const auto& issue : report.issues)
        msg += " [" + issue.path + "] " + issue.message + ";";
      return fail(DV_ERR_INVALID, msg);
    }
    g_last_error.clear();
    return DV_OK;
  });
}

dv_status dv_options_create(dv_options** out) {
  if (!out) return fail(DV_ERR_USAGE, "null argument");
  *out = new dv_options{};
  return DV_OK;
}

void dv_options_free(dv_options* opt) { delete opt; }

dv_status dv_options_set_seed(dv_options* opt, uint64_t seed) {
  if (!opt) return fail(DV_ERR_USAGE, "null options");
  opt->run.seed = seed;
  return DV_OK;
}

dv_status dv_options_set_trace_path(dv_options* opt, const char* path) {
  if (!opt || !path) return fail(DV_ERR_USAGE, "null argument");
  opt->run.trace_path = path;
  return DV_OK;
}

dv_status dv_options_set_map_dump_path(dv_options* opt, const char* path) {
  if (!opt || !path) return fail(DV_ERR_USAGE, "null argument");
  opt->run.map_dump_path = path;
  return DV_OK;
}

dv_status dv_options_set_detector(dv_options* opt, const char* kind) {
  if (!opt || !kind) return fail(DV_ERR_USAGE, "null argument");
  return guarded([&]() -> dv_status {
    opt->run.detector = dynavoid::detector_from_string(kind);
    return DV_OK;
  });
}

dv_status dv_options_set_override(dv_options* opt, const char* key, const char* value) {
  if (!opt || !key || !value) return fail(DV_ERR_USAGE, "null argument");
  return guarded([&]() -> dv_status {
    dynavoid::apply_override(opt->config, key, value);
    return DV_OK;
  });
}

dv_status dv_run_episode(const dv_scenario* sc, const dv_options* opt, char** report_json) {
  if (!sc || !report_json) return fail(DV_ERR_USAGE, "null argument");
  static const dv_options default_options{};
  const dv_options& options = opt ? *opt : default_options;
  return guarded([&]() -> dv_status {
    const dynavoid::EpisodeReport report =
        dynavoid::run_episode(sc->scenario, options.config, options.run);
    dynavoid::StackConfig effective = options.config;
    effective.planner.unknown_passable = sc->scenario.unknown_is_free;
    *report_json = dup_string(report.to_json(&effective));
    g_last_error.clear();
    return DV_OK;
  });
}

dv_status dv_run_batch(const dv_scenario* sc, int runs, uint64_t seed_base,
                       const dv_options* opt, char** report_json) {
  if (!sc || !report_json) return fail(DV_ERR_USAGE, "null argument");
  if (runs < 1) return fail(DV_ERR_USAGE, "runs must be >= 1");
  static const dv_options default_options{};
  const dv_options& options = opt ? *opt : default_options;
  return guarded([&]() -> dv_status {
    const dynavoid::BatchReport report =
        dynavoid::run_batch(sc->scenario, options.config, runs, seed_base, options.run);
    *report_json = dup_string(report.to_json());
    g_last_error.clear();
    return DV_OK;
  });
}

void dv_string_free(char* s) { std::free(s); }

}  // extern "C"
