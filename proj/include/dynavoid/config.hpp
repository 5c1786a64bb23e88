#pragma once

#include <string>

#include "dynavoid/grid_map.hpp"
#include "dynavoid/mpc.hpp"
#include "dynavoid/perception.hpp"
#include "dynavoid/planner.hpp"
#include "dynavoid/qp_solver.hpp"

namespace dynavoid {

/// Aggregated configuration for the whole stack. Defaults reproduce the
/// shipped parameter set; individual values can be overridden with dotted
/// keys (e.g. "mpc.N=15", see apply_override).
struct StackConfig {
  PerceptionConfig perception;
  GridMapConfig map;
  PlannerConfig planner;
  MpcConfig mpc;
  QpSettings solver;
  double ctrl_rate{100.0};      // Hz of the control/back-end task
  double success_radius{0.5};   // m around the goal

  void validate() const;
};

/// Applies "<section>.<field>=<value>" to the config; throws ConfigError for
/// unknown keys or unparsable values.
void apply_override(StackConfig& cfg, const std::string& key, const std::string& value);

/// JSON echo of the effective configuration.
std::string config_to_json(const StackConfig& cfg);

}  // namespace dynavoid
