#include "dynavoid/scenario_io.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dynavoid {

using json = nlohmann::json;

namespace {

Vec3 parse_vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3)
    throw ConfigError(path + ": expected [x, y, z]");
  for (const auto& v : j)
    if (!v.is_number()) throw ConfigError(path + ": expected numeric components");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

double require_number(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number())
    throw ConfigError(path + "." + key + ": missing or non-numeric");
  return j[key].get<double>();
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario: JSON parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scenario: top level must be an object");

  Scenario sc;
  if (!j.contains("name") || !j["name"].is_string())
    throw ConfigError("scenario.name: missing or not a string");
  sc.name = j["name"].get<std::string>();
  if (!j.contains("start")) throw ConfigError("scenario.start: missing");
  sc.start = parse_vec3(j["start"], "scenario.start");
  if (!j.contains("goal")) throw ConfigError("scenario.goal: missing");
  sc.goal = parse_vec3(j["goal"], "scenario.goal");
  sc.duration_limit = require_number(j, "duration_limit", "scenario");
  if (j.contains("unknown_is_free")) {
    if (!j["unknown_is_free"].is_boolean())
      throw ConfigError("scenario.unknown_is_free: expected bool");
    sc.unknown_is_free = j["unknown_is_free"].get<bool>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
      throw ConfigError("scenario.seed: expected integer");
    sc.seed = j["seed"].get<uint64_t>();
  }

  if (j.contains("static")) {
    if (!j["static"].is_array()) throw ConfigError("scenario.static: expected array");
    int idx = 0;
    for (const auto& entry : j["static"]) {
      const std::string path = "scenario.static[" + std::to_string(idx++) + "]";
      if (entry.contains("box")) {
        const auto& b = entry["box"];
        StaticBox box;
        if (!b.contains("min") || !b.contains("max"))
          throw ConfigError(path + ".box: needs min and max");
        box.min = parse_vec3(b["min"], path + ".box.min");
        box.max = parse_vec3(b["max"], path + ".box.max");
        sc.boxes.push_back(box);
      } else if (entry.contains("cylinder")) {
        const auto& c = entry["cylinder"];
        StaticCylinder cyl;
        if (!c.contains("center")) throw ConfigError(path + ".cylinder: needs center");
        cyl.center = parse_vec3(c["center"], path + ".cylinder.center");
        cyl.radius = require_number(c, "radius", path + ".cylinder");
        cyl.height = require_number(c, "height", path + ".cylinder");
        sc.cylinders.push_back(cyl);
      } else {
        throw ConfigError(path + ": expected a box or cylinder entry");
      }
    }
  }

  if (j.contains("dynamic")) {
    if (!j["dynamic"].is_array()) throw ConfigError("scenario.dynamic: expected array");
    int idx = 0;
    for (const auto& entry : j["dynamic"]) {
      const std::string path = "scenario.dynamic[" + std::to_string(idx++) + "]";
      if (!entry.contains("kind") || !entry["kind"].is_string())
        throw ConfigError(path + ".kind: missing or not a string");
      const std::string kind = entry["kind"].get<std::string>();
      ObstacleScript script;
      if (!entry.contains("half_extents"))
        throw ConfigError(path + ".half_extents: missing");
      script.half_extents = parse_vec3(entry["half_extents"], path + ".half_extents");
      if (kind == "reciprocating") {
        script.kind = ObstacleScript::Kind::Reciprocating;
        if (!entry.contains("center")) throw ConfigError(path + ".center: missing");
        script.center = parse_vec3(entry["center"], path + ".center");
        if (!entry.contains("axis")) throw ConfigError(path + ".axis: missing");
        script.axis = parse_vec3(entry["axis"], path + ".axis");
        const double norm = script.axis.norm();
        if (norm < 1e-9) throw ConfigError(path + ".axis: zero vector");
        script.axis /= norm;
        script.amplitude = require_number(entry, "amplitude", path);
        script.speed = require_number(entry, "speed", path);
        if (entry.contains("phase")) script.phase = require_number(entry, "phase", path);
      } else if (kind == "ballistic") {
        script.kind = ObstacleScript::Kind::Ballistic;
        if (!entry.contains("p0")) throw ConfigError(path + ".p0: missing");
        script.p0 = parse_vec3(entry["p0"], path + ".p0");
        if (!entry.contains("v0")) throw ConfigError(path + ".v0: missing");
        script.v0 = parse_vec3(entry["v0"], path + ".v0");
        if (entry.contains("t_launch"))
          script.t_launch = require_number(entry, "t_launch", path);
      } else if (kind == "constvel") {
        script.kind = ObstacleScript::Kind::ConstVel;
        if (!entry.contains("p0")) throw ConfigError(path + ".p0: missing");
        script.cv_p0 = parse_vec3(entry["p0"], path + ".p0");
        if (!entry.contains("v")) throw ConfigError(path + ".v: missing");
        script.cv_v = parse_vec3(entry["v"], path + ".v");
        script.t_start = entry.contains("t_start") ? require_number(entry, "t_start", path) : 0.0;
        script.t_end = entry.contains("t_end") ? require_number(entry, "t_end", path) : 1e9;
      } else {
        throw ConfigError(path + ".kind: unknown value '" + kind + "'");
      }
      sc.scripts.push_back(script);
    }
  }

  if (j.contains("sensor")) {
    const auto& s = j["sensor"];
    const std::string path = "scenario.sensor";
    if (!s.is_object()) throw ConfigError(path + ": expected object");
    if (s.contains("rate")) sc.sensor.rate = require_number(s, "rate", path);
    if (s.contains("max_range")) sc.sensor.max_range = require_number(s, "max_range", path);
    if (s.contains("fov_h")) sc.sensor.fov_h = require_number(s, "fov_h", path);
    if (s.contains("fov_v")) sc.sensor.fov_v = require_number(s, "fov_v", path);
    if (s.contains("sigma")) sc.sensor.sigma = require_number(s, "sigma", path);
    if (s.contains("rays")) {
      const auto& r = s["rays"];
      if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() ||
          !r[1].is_number_integer())
        throw ConfigError(path + ".rays: expected [azimuth, elevation] integers");
      sc.sensor.rays_az = r[0].get<int>();
      sc.sensor.rays_el = r[1].get<int>();
    }
  }
  return sc;
}

Scenario scenario_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario: cannot open file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

ValidationReport validate_scenario(const Scenario& sc, double d_rad) {
  ValidationReport report;
  auto issue = [&report](const std::string& path, const std::string& msg) {
    report.valid = false;
    report.issues.push_back({path, msg});
  };

  if (sc.name.empty()) issue("name", "must not be empty");
  if (!(sc.duration_limit > 0.0)) issue("duration_limit", "must be > 0");
  if (!finite(sc.start)) issue("start", "must be finite");
  if (!finite(sc.goal)) issue("goal", "must be finite");

  int idx = 0;
  for (const auto& box : sc.boxes) {
    if ((box.max.array() <= box.min.array()).any())
      issue("static[" + std::to_string(idx) + "].box", "max must exceed min per axis");
    ++idx;
  }
  idx = 0;
  for (const auto& cyl : sc.cylinders) {
    if (cyl.radius <= 0.0 || cyl.height <= 0.0)
      issue("static[" + std::to_string(idx) + "].cylinder", "radius and height must be > 0");
    ++idx;
  }
  idx = 0;
  for (const auto& s : sc.scripts) {
    const std::string path = "dynamic[" + std::to_string(idx) + "]";
    if ((s.half_extents.array() < 0.0).any()) issue(path + ".half_extents", "must be >= 0");
    if (s.kind == ObstacleScript::Kind::Reciprocating) {
      if (!(s.amplitude > 0.0)) issue(path + ".amplitude", "must be > 0");
      if (s.speed < 0.0) issue(path + ".speed", "must be >= 0");
    }
    if (s.kind == ObstacleScript::Kind::ConstVel && !(s.t_end >= s.t_start))
      issue(path, "t_end must be >= t_start");
    ++idx;
  }

  if (sc.sensor.rate <= 0.0) issue("sensor.rate", "must be > 0");
  if (sc.sensor.rays_az < 1 || sc.sensor.rays_el < 1)
    issue("sensor.rays", "ray counts must be >= 1");
  if (sc.sensor.max_range <= 0.0) issue("sensor.max_range", "must be > 0");
  if (sc.sensor.sigma < 0.0) issue("sensor.sigma", "must be >= 0");

  // Start/goal must be statically free (with robot-radius clearance).
  const double start_clear = static_clearance(sc.start, sc);
  if (start_clear < d_rad) {
    std::ostringstream os;
    os << "statically blocked (clearance " << start_clear << " m < d_rad " << d_rad << " m)";
    issue("start", os.str());
  }
  const double goal_clear = static_clearance(sc.goal, sc);
  if (goal_clear < d_rad) {
    std::ostringstream os;
    os << "statically blocked (clearance " << goal_clear << " m < d_rad " << d_rad << " m)";
    issue("goal", os.str());
  }
  return report;
}

std::string ValidationReport::to_json() const {
  json j;
  j["valid"] = valid;
  j["issues"] = json::array();
  for (const auto& issue : issues)
    j["issues"].push_back({{"path", issue.path}, {"message", issue.message}});
  return j.dump();
}

std::string scenario_to_json(const Scenario& sc) {
  json j;
  j["name"] = sc.name;
  j["start"] = {sc.start.x(), sc.start.y(), sc.start.z()};
  j["goal"] = {sc.goal.x(), sc.goal.y(), sc.goal.z()};
  j["duration_limit"] = sc.duration_limit;
  j["unknown_is_free"] = sc.unknown_is_free;
  j["seed"] = sc.seed;
  j["static"] = json::array();
  for (const auto& box : sc.boxes)
    j["static"].push_back({{"box",
                            {{"min", {box.min.x(), box.min.y(), box.min.z()}},
                             {"max", {box.max.x(), box.max.y(), box.max.z()}}}}});
  for (const auto& cyl : sc.cylinders)
    j["static"].push_back(
        {{"cylinder",
          {{"center", {cyl.center.x(), cyl.center.y(), cyl.center.z()}},
           {"radius", cyl.radius},
           {"height", cyl.height}}}});
  j["dynamic"] = json::array();
  for (const auto& s : sc.scripts) {
    json e;
    e["half_extents"] = {s.half_extents.x(), s.half_extents.y(), s.half_extents.z()};
    switch (s.kind) {
      case ObstacleScript::Kind::Reciprocating:
        e["kind"] = "reciprocating";
        e["center"] = {s.center.x(), s.center.y(), s.center.z()};
        e["axis"] = {s.axis.x(), s.axis.y(), s.axis.z()};
        e["amplitude"] = s.amplitude;
        e["speed"] = s.speed;
        e["phase"] = s.phase;
        break;
      case ObstacleScript::Kind::Ballistic:
        e["kind"] = "ballistic";
        e["p0"] = {s.p0.x(), s.p0.y(), s.p0.z()};
        e["v0"] = {s.v0.x(), s.v0.y(), s.v0.z()};
        e["t_launch"] = s.t_launch;
        break;
      case ObstacleScript::Kind::ConstVel:
        e["kind"] = "constvel";
        e["p0"] = {s.cv_p0.x(), s.cv_p0.y(), s.cv_p0.z()};
        e["v"] = {s.cv_v.x(), s.cv_v.y(), s.cv_v.z()};
        e["t_start"] = s.t_start;
        e["t_end"] = s.t_end;
        break;
    }
    j["dynamic"].push_back(e);
  }
  j["sensor"] = {{"rate", sc.sensor.rate},      {"max_range", sc.sensor.max_range},
                 {"fov_h", sc.sensor.fov_h},    {"fov_v", sc.sensor.fov_v},
                 {"rays", {sc.sensor.rays_az, sc.sensor.rays_el}},
                 {"sigma", sc.sensor.sigma}};
  return j.dump(2);
}

}  // namespace dynavoid
