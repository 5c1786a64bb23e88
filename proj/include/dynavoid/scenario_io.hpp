#pragma once

#include <string>
#include <vector>

#include "dynavoid/world.hpp"

namespace dynavoid {

struct Diagnostic {
  std::string path;     // JSON path of the offending field
  std::string message;
};

struct ValidationReport {
  bool valid{true};
  std::vector<Diagnostic> issues;

  std::string to_json() const;
};

/// Parses a scenario from JSON text; throws ConfigError with a diagnostic
/// message on malformed input.
Scenario scenario_from_json(const std::string& text);
Scenario scenario_from_file(const std::string& path);

/// Schema and invariant checks (start/goal statically free, positive
/// durations, known obstacle kinds, ...).
ValidationReport validate_scenario(const Scenario& sc, double d_rad = 0.3);

std::string scenario_to_json(const Scenario& sc);

}  // namespace dynavoid
