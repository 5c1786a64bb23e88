#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dynavoid/config.hpp"
#include "dynavoid/scenario_io.hpp"
#include "dynavoid/world.hpp"

namespace dynavoid {

struct RunOptions {
  std::optional<uint64_t> seed;       // overrides the scenario seed
  std::string trace_path;             // empty: no trace file
  DetectorKind detector{DetectorKind::Oracle};
  std::string map_dump_path;          // empty: no dump
};

struct TimingStats {
  double mean_ms{0.0};
  double max_ms{0.0};
  int samples{0};
};

struct EpisodeReport {
  bool success{false};
  bool collision{false};
  double t_flight_s{0.0};        // meaningful for successes
  double v_max_mps{0.0};         // max per-axis |v| over the episode
  TimingStats t_per;             // perception + map stage per sensor event
  TimingStats t_replan;          // front end + QP per control event
  double end_to_end_mean_ms{0.0};
  std::string trace_path;
  uint64_t seed{0};
  std::string end_reason;        // "goal" | "collision" | "timeout"
  int replans{0};
  int fallbacks{0};

  std::string to_json(const StackConfig* effective_config = nullptr) const;
};

/// Per-axis command shaping: clamps the jerk so that stepping the plant one
/// control period (and braking afterwards at the jerk limit) can never push
/// a velocity or acceleration sample outside the configured bounds.
ControlInput shape_command(const QuadState& x, const ControlInput& u, const MpcConfig& cfg,
                           double dt);

/// Deterministic virtual-time closed loop: sensor events at the sensor rate
/// drive perception, mapping and replanning; control events at ctrl_rate run
/// reference sampling, the MPC and the plant. Wall-clock stage times are
/// recorded separately for the latency metrics.
EpisodeReport run_episode(const Scenario& scenario, const StackConfig& config,
                          const RunOptions& options);

struct BatchReport {
  std::string scenario;
  int runs{0};
  double r{0.0};
  double t_per_mean_ms{0.0};
  double t_replan_mean_ms{0.0};
  std::optional<double> t_flight_mean_s;  // successes only
  double v_max_mps{0.0};                  // max over runs
  std::vector<EpisodeReport> episodes;

  std::string to_json() const;
};

BatchReport run_batch(const Scenario& scenario, const StackConfig& config, int runs,
                      uint64_t seed_base, const RunOptions& options);

}  // namespace dynavoid
