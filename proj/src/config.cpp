#include "dynavoid/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <map>

#include <nlohmann/json.hpp>

namespace dynavoid {

using json = nlohmann::json;

void StackConfig::validate() const {
  map.validate();
  mpc.validate();
  if (ctrl_rate <= 0.0) throw ConfigError("sim.ctrl_rate must be > 0");
  if (success_radius <= 0.0) throw ConfigError("sim.success_radius must be > 0");
  if (perception.dbscan_eps <= 0.0) throw ConfigError("perception.eps must be > 0");
  if (perception.dbscan_min_pts < 1) throw ConfigError("perception.min_pts must be >= 1");
  if (planner.v_ref <= 0.0) throw ConfigError("planner.v_ref must be > 0");
  if (planner.expansion_bound <= 0.0) throw ConfigError("planner.expansion_bound must be > 0");
  if (solver.eps <= 0.0 || solver.max_iter < 1) throw ConfigError("solver settings malformed");
}

namespace {

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("override " + key + ": cannot parse '" + value + "' as number");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  const double v = parse_double(key, value);
  if (std::abs(v - std::round(v)) > 1e-9)
    throw ConfigError("override " + key + ": expected integer, got '" + value + "'");
  return static_cast<int>(std::llround(v));
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("override " + key + ": cannot parse '" + value + "' as bool");
}

}  // namespace

void apply_override(StackConfig& cfg, const std::string& key, const std::string& value) {
  auto d = [&] { return parse_double(key, value); };
  auto i = [&] { return parse_int(key, value); };
  auto b = [&] { return parse_bool(key, value); };

  using Setter = std::function<void()>;
  const std::map<std::string, Setter> setters = {
      {"perception.eps", [&] { cfg.perception.dbscan_eps = d(); }},
      {"perception.min_pts", [&] { cfg.perception.dbscan_min_pts = i(); }},
      {"perception.w_pos", [&] { cfg.perception.w_pos = d(); }},
      {"perception.w_size", [&] { cfg.perception.w_size = d(); }},
      {"perception.gate_cost", [&] { cfg.perception.gate_cost = d(); }},
      {"perception.tol_ff", [&] { cfg.perception.tol_ff = d(); }},
      {"perception.history_window", [&] { cfg.perception.history_window = d(); }},
      {"perception.reserve_period", [&] { cfg.perception.reserve_period = d(); }},
      {"perception.baseline_threshold",
       [&] { cfg.perception.baseline_disp_threshold = d(); }},
      {"map.resolution", [&] { cfg.map.resolution = d(); }},
      {"map.half_x", [&] { cfg.map.half_size.x() = i(); }},
      {"map.half_y", [&] { cfg.map.half_size.y() = i(); }},
      {"map.half_z", [&] { cfg.map.half_size.z() = i(); }},
      {"map.d_rad", [&] { cfg.map.d_rad = d(); }},
      {"map.k", [&] { cfg.map.k_vel = d(); }},
      {"map.hit", [&] { cfg.map.hit_increment = i(); }},
      {"map.miss", [&] { cfg.map.miss_decrement = i(); }},
      {"map.occupied_threshold", [&] { cfg.map.occupied_threshold = i(); }},
      {"map.recenter_threshold", [&] { cfg.map.recenter_threshold = d(); }},
      {"map.stamp_dt", [&] { cfg.map.stamp_dt = d(); }},
      {"planner.expansion_bound", [&] { cfg.planner.expansion_bound = d(); }},
      {"planner.v_ref", [&] { cfg.planner.v_ref = d(); }},
      {"planner.los_step", [&] { cfg.planner.los_step = d(); }},
      {"planner.max_polytopes", [&] { cfg.planner.max_polytopes = i(); }},
      {"mpc.dt", [&] { cfg.mpc.dt = d(); }},
      {"mpc.N", [&] { cfg.mpc.N = i(); }},
      {"mpc.r_p", [&] { cfg.mpc.r_p = Vec3::Constant(d()); }},
      {"mpc.r_u", [&] { cfg.mpc.r_u = Vec3::Constant(d()); }},
      {"mpc.r_c", [&] { cfg.mpc.r_c = Vec3::Constant(d()); }},
      {"mpc.r_vn", [&] { cfg.mpc.r_vn = Vec3::Constant(d()); }},
      {"mpc.r_an", [&] { cfg.mpc.r_an = Vec3::Constant(d()); }},
      {"mpc.r_o", [&] { cfg.mpc.r_o = Vec3::Constant(d()); }},
      {"mpc.v_max", [&] { cfg.mpc.v_max = Vec3::Constant(d()); }},
      {"mpc.j_max", [&] { cfg.mpc.j_max = Vec3::Constant(d()); }},
      {"mpc.a_max_xy", [&] { cfg.mpc.a_max_xy = d(); }},
      {"mpc.a_z_min", [&] { cfg.mpc.a_z_min = d(); }},
      {"mpc.a_z_max", [&] { cfg.mpc.a_z_max = d(); }},
      {"mpc.d_dyn", [&] { cfg.mpc.d_dyn = d(); }},
      {"mpc.g", [&] { cfg.mpc.g = d(); cfg.perception.g = parse_double(key, value); }},
      {"mpc.k_cap", [&] { cfg.mpc.k_cap = i(); }},
      {"mpc.brake_dt", [&] { cfg.mpc.brake_dt = d(); }},
      {"solver.eps", [&] { cfg.solver.eps = d(); }},
      {"solver.max_iter", [&] { cfg.solver.max_iter = i(); }},
      {"solver.alpha", [&] { cfg.solver.alpha = d(); }},
      {"solver.rho0", [&] { cfg.solver.rho0 = d(); }},
      {"solver.polish", [&] { cfg.solver.polish = b(); }},
      {"sim.ctrl_rate", [&] { cfg.ctrl_rate = d(); }},
      {"sim.success_radius", [&] { cfg.success_radius = d(); }},
  };

  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown override key: '" + key + "'");
  it->second();
}

std::string config_to_json(const StackConfig& cfg) {
  json j;
  j["perception"] = {{"eps", cfg.perception.dbscan_eps},
                     {"min_pts", cfg.perception.dbscan_min_pts},
                     {"w_pos", cfg.perception.w_pos},
                     {"w_size", cfg.perception.w_size},
                     {"gate_cost", cfg.perception.gate_cost},
                     {"tol_ff", cfg.perception.tol_ff},
                     {"history_window", cfg.perception.history_window},
                     {"reserve_period", cfg.perception.reserve_period},
                     {"baseline_threshold", cfg.perception.baseline_disp_threshold}};
  j["map"] = {{"resolution", cfg.map.resolution},
              {"half_size", {cfg.map.half_size.x(), cfg.map.half_size.y(), cfg.map.half_size.z()}},
              {"d_rad", cfg.map.d_rad},
              {"k", cfg.map.k_vel},
              {"hit", cfg.map.hit_increment},
              {"miss", cfg.map.miss_decrement},
              {"occupied_threshold", cfg.map.occupied_threshold},
              {"recenter_threshold", cfg.map.recenter_threshold},
              {"stamp_dt", cfg.map.stamp_dt}};
  j["planner"] = {{"expansion_bound", cfg.planner.expansion_bound},
                  {"v_ref", cfg.planner.v_ref},
                  {"unknown_passable", cfg.planner.unknown_passable},
                  {"los_step", cfg.planner.los_step},
                  {"max_polytopes", cfg.planner.max_polytopes}};
  j["mpc"] = {{"dt", cfg.mpc.dt},
              {"N", cfg.mpc.N},
              {"r_p", cfg.mpc.r_p.x()},
              {"r_u", cfg.mpc.r_u.x()},
              {"r_c", cfg.mpc.r_c.x()},
              {"r_vn", cfg.mpc.r_vn.x()},
              {"r_an", cfg.mpc.r_an.x()},
              {"r_o", cfg.mpc.r_o.x()},
              {"v_max", cfg.mpc.v_max.x()},
              {"j_max", cfg.mpc.j_max.x()},
              {"a_max_xy", cfg.mpc.a_max_xy},
              {"a_z_min", cfg.mpc.a_z_min},
              {"a_z_max", cfg.mpc.a_z_max},
              {"d_dyn", cfg.mpc.d_dyn},
              {"g", cfg.mpc.g},
              {"k_cap", cfg.mpc.k_cap},
              {"brake_dt", cfg.mpc.brake_dt}};
  j["solver"] = {{"eps", cfg.solver.eps},
                 {"max_iter", cfg.solver.max_iter},
                 {"alpha", cfg.solver.alpha},
                 {"rho0", cfg.solver.rho0},
                 {"polish", cfg.solver.polish}};
  j["sim"] = {{"ctrl_rate", cfg.ctrl_rate}, {"success_radius", cfg.success_radius}};
  return j.dump();
}

}  // namespace dynavoid
