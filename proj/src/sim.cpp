#include "dynavoid/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace dynavoid {

using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(const Clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Largest per-axis velocity the plant can reach from (v, a) when braking at
// the jerk limit from the next step on. Mirrors the exact plant update so the
// bound is tight against sampled states.
double brake_peak(double v, double a, double j_lim, double dt) {
  for (int i = 0; i < 100000 && a > 0.0; ++i) {
    const double u = std::max(-j_lim, -a / dt);
    v += a * dt + 0.5 * u * dt * dt;
    a += u * dt;
  }
  return v;
}

struct AxisBounds {
  double v_max, j_max, a_lo, a_hi;
};

// True when applying u for one period keeps the axis inside its invariant
// set: acceleration within bounds and the braking peak within +-v_max.
bool axis_admissible(double v, double a, double u, const AxisBounds& b, double dt) {
  const double a1 = a + u * dt;
  if (a1 < b.a_lo - 1e-12 || a1 > b.a_hi + 1e-12) return false;
  const double v1 = v + a * dt + 0.5 * u * dt * dt;
  if (brake_peak(v1, a1, b.j_max, dt) > b.v_max + 1e-12) return false;
  if (brake_peak(-v1, -a1, b.j_max, dt) > b.v_max + 1e-12) return false;
  return true;
}

double shape_axis(double v, double a, double u, const AxisBounds& b, double dt) {
  // Keep the next acceleration sample within its bounds outright.
  const double u_min = std::max(-b.j_max, (b.a_lo - a) / dt);
  const double u_max = std::min(b.j_max, (b.a_hi - a) / dt);
  u = std::clamp(u, std::min(u_min, u_max), std::max(u_min, u_max));
  if (axis_admissible(v, a, u, b, dt)) return u;

  // The admissible set is an interval in u; bisect from whichever extreme is
  // feasible toward the requested value.
  auto bisect = [&](double feasible) {
    double lo = feasible, hi = u;
    for (int i = 0; i < 60; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (axis_admissible(v, a, mid, b, dt))
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  };
  if (axis_admissible(v, a, u_min, b, dt)) return bisect(u_min);
  if (axis_admissible(v, a, u_max, b, dt)) return bisect(u_max);
  // Outside the invariant set entirely: brake against the velocity.
  return v > 0.0 ? u_min : u_max;
}

}  // namespace

ControlInput shape_command(const QuadState& x, const ControlInput& u, const MpcConfig& cfg,
                           double dt) {
  ControlInput out;
  for (int axis = 0; axis < 3; ++axis) {
    const AxisBounds b{cfg.v_max(axis), cfg.j_max(axis), cfg.a_lower(axis), cfg.a_upper(axis)};
    out.u(axis) = shape_axis(x.v(axis), x.a(axis), u.u(axis), b, dt);
  }
  return out;
}

namespace {

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json tracks_json(const std::vector<Track>& tracks) {
  json arr = json::array();
  for (const auto& tr : tracks) {
    json e;
    e["id"] = tr.id;
    e["center"] = vec3_json(tr.history.empty() ? Vec3::Zero().eval() : tr.history.back().center);
    e["extents"] = vec3_json(tr.half_extents);
    e["model_kind"] = !tr.model                       ? "none"
                      : tr.model->kind == MotionModel::FreeFall ? "free_fall"
                                                                : "constant_velocity";
    arr.push_back(e);
  }
  return arr;
}

struct Accumulator {
  double sum{0.0};
  double max{0.0};
  int n{0};
  void add(double v) {
    sum += v;
    max = std::max(max, v);
    ++n;
  }
  TimingStats stats() const { return {n > 0 ? sum / n : 0.0, max, n}; }
};

}  // namespace

EpisodeReport run_episode(const Scenario& scenario, const StackConfig& config,
                          const RunOptions& options) {
  StackConfig cfg = config;
  cfg.planner.unknown_passable = scenario.unknown_is_free;
  cfg.validate();
  {
    const ValidationReport vr = validate_scenario(scenario, cfg.map.d_rad);
    if (!vr.valid) {
      std::string msg = "scenario invalid:";
      for (const auto& issue : vr.issues) msg += " [" + issue.path + "] " + issue.message + ";";
      throw ConfigError(msg);
    }
  }

  EpisodeReport report;
  report.seed = options.seed.value_or(scenario.seed);
  report.trace_path = options.trace_path;

  std::mt19937_64 rng(report.seed);
  QuadState x;
  x.p = scenario.start;

  Detector detector(options.detector, cfg.perception);
  Tracker tracker(cfg.perception);
  DualLayerMap map(cfg.map, scenario.start);
  MpcController controller(cfg.mpc, cfg.solver);

  std::vector<Vec3> waypoints;
  Corridor corridor;
  bool have_path = false;
  bool have_corridor = false;
  bool path_reached_goal = false;
  uint64_t corridor_occ_version = ~0ull;
  bool fallback_since_sense = false;

  const double sensor_dt = 1.0 / scenario.sensor.rate;
  const double ctrl_dt = 1.0 / cfg.ctrl_rate;
  const double horizon = cfg.mpc.horizon();
  const double reach_needed = cfg.planner.v_ref * horizon + 2.0;

  Accumulator per_acc, replan_acc, e2e_acc;
  double pending_sense_ms = -1.0;
  double pending_front_ms = 0.0;

  std::ofstream trace;
  if (!options.trace_path.empty()) {
    trace.open(options.trace_path);
    if (!trace) throw ConfigError("cannot open trace file '" + options.trace_path + "'");
  }
  auto emit = [&](double t, const char* kind, const Vec3& cmd, double per_ms, double front_ms,
                  double back_ms, const std::vector<std::string>& events) {
    if (!trace.is_open()) return;
    json rec;
    rec["t"] = t;
    rec["kind"] = kind;
    rec["state"] = {{"p", vec3_json(x.p)}, {"v", vec3_json(x.v)}, {"a", vec3_json(x.a)}};
    rec["cmd"] = vec3_json(cmd);
    rec["tracks"] = tracks_json(tracker.tracks());
    rec["timings_ms"] = {{"per", per_ms}, {"front", front_ms}, {"back", back_ms}};
    rec["events"] = events;
    trace << rec.dump() << "\n";
  };

  long k_sense = 0, k_ctrl = 0;
  Vec3 last_cmd = Vec3::Zero();
  std::string end_reason = "timeout";
  double t_end = scenario.duration_limit;

  auto needs_replan = [&]() {
    if (!have_path) return true;
    if (fallback_since_sense) return true;
    if (replan_check(waypoints, map, cfg.planner)) return true;
    // Replan when the local path no longer reaches the goal region and the
    // remaining polyline cannot cover the horizon.
    if (!path_reached_goal) {
      double remaining = 0.0;
      for (size_t i = 0; i + 1 < waypoints.size(); ++i)
        remaining += (waypoints[i + 1] - waypoints[i]).norm();
      const double to_robot = (waypoints.back() - x.p).norm();
      if (std::min(remaining, to_robot) < reach_needed) return true;
    }
    return false;
  };

  while (true) {
    const double t_sense = k_sense * sensor_dt;
    const double t_ctrl = k_ctrl * ctrl_dt;
    const double t_next = std::min(t_sense, t_ctrl);
    if (t_next > scenario.duration_limit) break;

    if (t_sense <= t_ctrl) {
      // ---- sensor event: perceive, map, replan if needed ----
      ++k_sense;
      std::vector<std::string> events;
      const auto wall0 = Clock::now();
      Pose pose;
      pose.position = x.p;
      const LabeledFrame raw = sense(scenario, pose, t_sense, rng);
      const LabeledFrame labeled = detector.label_frame(raw);
      tracker.process(labeled);
      map.update_static(labeled);
      map.stamp_dynamic(tracker.tracks_with_models(), horizon, t_sense);
      const double per_ms = ms_since(wall0);
      per_acc.add(per_ms);

      double front_ms = 0.0;
      const auto wall1 = Clock::now();
      if (needs_replan()) {
        const SearchResult sr = search_path(map, x.p, scenario.goal, cfg.planner);
        if (sr.status == SearchStatus::Ok) {
          waypoints = sr.path.waypoints;
          have_path = true;
          path_reached_goal =
              sr.path.reached_goal &&
              (map.grid_to_world(sr.path.cells.back()) - scenario.goal).norm() < 1.0;
          ++report.replans;
          events.push_back("replan");
        } else {
          have_path = false;
          have_corridor = false;
          events.push_back("nopath");
        }
        if (have_path) {
          const CorridorResult cr =
              generate_sfc(map, waypoints, x.p, cfg.planner, nullptr, reach_needed);
          have_corridor = cr.status == CorridorStatus::Ok;
          if (have_corridor) {
            corridor = cr.corridor;
            corridor_occ_version = map.static_occupancy_version();
          } else {
            events.push_back("corridor_fail");
          }
        }
      } else if (have_path &&
                 (map.static_occupancy_version() != corridor_occ_version ||
                  !have_corridor || !corridor.any_contains(x.p))) {
        // Static layer changed or the robot left the corridor: refresh the
        // boxes without a new search.
        const CorridorResult cr =
            generate_sfc(map, waypoints, x.p, cfg.planner, nullptr, reach_needed);
        have_corridor = cr.status == CorridorStatus::Ok;
        if (have_corridor) {
          corridor = cr.corridor;
          corridor_occ_version = map.static_occupancy_version();
          events.push_back("corridor_refresh");
        }
      }
      front_ms = ms_since(wall1);
      if (front_ms > 1e-6) pending_front_ms += front_ms;
      fallback_since_sense = false;

      pending_sense_ms = per_ms + front_ms;
      emit(t_sense, "sense", last_cmd, per_ms, front_ms, 0.0, events);
      continue;
    }

    // ---- control event: reference, MPC, plant ----
    ++k_ctrl;
    std::vector<std::string> events;
    const auto wall0 = Clock::now();
    ControlInput cmd;
    if (have_path && have_corridor) {
      const std::vector<Vec3> p_ref =
          sample_reference(waypoints, x.p, cfg.planner.v_ref, cfg.mpc.N, cfg.mpc.dt);
      const MpcStepResult step =
          controller.step(x, p_ref, corridor, tracker.tracks_with_models(), t_ctrl, &map);
      cmd = step.command;
      if (step.used_fallback) {
        events.push_back("fallback");
        ++report.fallbacks;
        fallback_since_sense = true;
      }
    } else {
      cmd = controller.fallback(have_path ? FallbackKind::CorridorFailure : FallbackKind::NoPath,
                                x, &map);
      events.push_back("fallback");
      ++report.fallbacks;
      fallback_since_sense = true;
    }
    const double back_ms = ms_since(wall0);

    const double replan_sample = back_ms + pending_front_ms;
    replan_acc.add(replan_sample);
    pending_front_ms = 0.0;
    if (pending_sense_ms >= 0.0) {
      e2e_acc.add(pending_sense_ms + back_ms);
      pending_sense_ms = -1.0;
    }

    cmd = shape_command(x, cmd, cfg.mpc, ctrl_dt);
    x = step_plant(x, cmd, ctrl_dt);
    last_cmd = cmd.u;
    const double t_new = t_ctrl + ctrl_dt;
    report.v_max_mps = std::max(report.v_max_mps, x.v.cwiseAbs().maxCoeff());

    if (check_collision(x.p, scenario, t_new, cfg.map.d_rad, cfg.mpc.g)) {
      report.collision = true;
      end_reason = "collision";
      events.push_back("collision");
      emit(t_new, "control", cmd.u, 0.0, 0.0, back_ms, events);
      t_end = t_new;
      break;
    }
    if ((x.p - scenario.goal).norm() <= cfg.success_radius) {
      report.success = true;
      end_reason = "goal";
      events.push_back("goal");
      emit(t_new, "control", cmd.u, 0.0, 0.0, back_ms, events);
      t_end = t_new;
      break;
    }
    emit(t_new, "control", cmd.u, 0.0, 0.0, back_ms, events);
  }

  report.t_flight_s = report.success ? t_end : scenario.duration_limit;
  report.t_per = per_acc.stats();
  report.t_replan = replan_acc.stats();
  report.end_to_end_mean_ms = e2e_acc.stats().mean_ms;
  report.end_reason = end_reason;

  if (!options.map_dump_path.empty()) {
    std::ofstream dump(options.map_dump_path);
    if (dump) dump << map.dump_json();
  }
  return report;
}

std::string EpisodeReport::to_json(const StackConfig* effective_config) const {
  json j;
  j["seed"] = seed;
  j["success"] = success;
  j["collision"] = collision;
  if (success)
    j["t_flight_s"] = t_flight_s;
  else
    j["t_flight_s"] = nullptr;
  j["v_max_mps"] = v_max_mps;
  j["t_per_ms"] = {{"mean", t_per.mean_ms}, {"max", t_per.max_ms}};
  j["t_replan_ms"] = {{"mean", t_replan.mean_ms}, {"max", t_replan.max_ms}};
  j["end_to_end_ms"] = {{"mean", end_to_end_mean_ms}};
  if (trace_path.empty())
    j["trace_path"] = nullptr;
  else
    j["trace_path"] = trace_path;
  j["end_reason"] = end_reason;
  if (effective_config) j["config"] = json::parse(config_to_json(*effective_config));
  return j.dump();
}

BatchReport run_batch(const Scenario& scenario, const StackConfig& config, int runs,
                      uint64_t seed_base, const RunOptions& options) {
  if (runs < 1) throw ConfigError("batch: runs must be >= 1");
  BatchReport batch;
  batch.scenario = scenario.name;
  batch.runs = runs;

  int successes = 0;
  double per_sum = 0.0, replan_sum = 0.0, flight_sum = 0.0;
  for (int i = 0; i < runs; ++i) {
    RunOptions opt = options;
    opt.seed = seed_base + static_cast<uint64_t>(i);
    if (!options.trace_path.empty())
      opt.trace_path = options.trace_path + "." + std::to_string(i);
    const EpisodeReport ep = run_episode(scenario, config, opt);
    per_sum += ep.t_per.mean_ms;
    replan_sum += ep.t_replan.mean_ms;
    if (ep.success) {
      ++successes;
      flight_sum += ep.t_flight_s;
    }
    batch.v_max_mps = std::max(batch.v_max_mps, ep.v_max_mps);
    batch.episodes.push_back(ep);
  }
  batch.r = static_cast<double>(successes) / runs;
  batch.t_per_mean_ms = per_sum / runs;
  batch.t_replan_mean_ms = replan_sum / runs;
  if (successes > 0) batch.t_flight_mean_s = flight_sum / successes;
  return batch;
}

std::string BatchReport::to_json() const {
  json j;
  j["scenario"] = scenario;
  j["runs"] = runs;
  j["r"] = r;
  j["t_per_mean_ms"] = t_per_mean_ms;
  j["t_replan_mean_ms"] = t_replan_mean_ms;
  if (t_flight_mean_s)
    j["t_flight_mean_s"] = *t_flight_mean_s;
  else
    j["t_flight_mean_s"] = nullptr;
  j["v_max_mps"] = v_max_mps;
  j["episodes"] = json::array();
  for (const auto& ep : episodes) j["episodes"].push_back(json::parse(ep.to_json()));
  return j.dump(2);
}

}  // namespace dynavoid
