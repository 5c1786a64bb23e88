#include "dynavoid/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynavoid/mpc.hpp"

namespace dynavoid {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Vec3 obstacle_position(const ObstacleScript& s, double t, double g) {
  switch (s.kind) {
    case ObstacleScript::Kind::Reciprocating: {
      // Peak speed `speed` at the zero crossing of the sinusoid.
      const double arg = s.speed * t / s.amplitude + s.phase;
      return s.center + s.axis * (s.amplitude * std::sin(arg));
    }
    case ObstacleScript::Kind::Ballistic: {
      if (t <= s.t_launch) return s.p0;
      const Vec3 grav(0.0, 0.0, -g);
      // Freeze at ground contact (z = half_extents.z).
      const double ground = s.half_extents.z();
      if (s.p0.z() <= ground + 1e-12 && s.v0.z() <= 0.0) return s.p0;
      double dt = t - s.t_launch;
      const double a = -0.5 * g;
      const double b = s.v0.z();
      const double c = s.p0.z() - ground;
      // Solve a*dt^2 + b*dt + c = 0 for the first positive contact time.
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0 && std::abs(a) > 1e-12) {
        const double sq = std::sqrt(disc);
        double t1 = (-b + sq) / (2.0 * a);
        double t2 = (-b - sq) / (2.0 * a);
        if (t1 > t2) std::swap(t1, t2);
        double contact = t1 > 1e-12 ? t1 : (t2 > 1e-12 ? t2 : -1.0);
        if (contact > 0.0) dt = std::min(dt, contact);
      }
      return s.p0 + s.v0 * dt + 0.5 * grav * dt * dt;
    }
    case ObstacleScript::Kind::ConstVel: {
      const double tc = std::clamp(t, s.t_start, s.t_end);
      return s.cv_p0 + s.cv_v * (tc - s.t_start);
    }
  }
  return Vec3::Zero();
}

namespace {

double point_aabb_distance(const Vec3& p, const Vec3& bmin, const Vec3& bmax) {
  Vec3 d = Vec3::Zero();
  for (int i = 0; i < 3; ++i)
    d(i) = std::max({bmin(i) - p(i), 0.0, p(i) - bmax(i)});
  return d.norm();
}

double point_cylinder_distance(const Vec3& p, const StaticCylinder& cyl) {
  const double zmin = cyl.center.z() - cyl.height / 2.0;
  const double zmax = cyl.center.z() + cyl.height / 2.0;
  const double dr =
      std::max(0.0, std::hypot(p.x() - cyl.center.x(), p.y() - cyl.center.y()) - cyl.radius);
  const double dz = std::max({zmin - p.z(), 0.0, p.z() - zmax});
  return std::hypot(dr, dz);
}

}  // namespace

double static_clearance(const Vec3& p, const Scenario& sc) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& box : sc.boxes) best = std::min(best, point_aabb_distance(p, box.min, box.max));
  for (const auto& cyl : sc.cylinders) best = std::min(best, point_cylinder_distance(p, cyl));
  return best;
}

double dynamic_clearance(const Vec3& p, const Scenario& sc, double t, double g) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& script : sc.scripts) {
    const Vec3 c = obstacle_position(script, t, g);
    best = std::min(best,
                    point_aabb_distance(p, c - script.half_extents, c + script.half_extents));
  }
  return best;
}

bool check_collision(const Vec3& p, const Scenario& sc, double t, double d_rad, double g) {
  return static_clearance(p, sc) < d_rad || dynamic_clearance(p, sc, t, g) < d_rad;
}

double ray_aabb(const Vec3& origin, const Vec3& dir, const Vec3& bmin, const Vec3& bmax) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(dir(i)) < 1e-15) {
      if (origin(i) < bmin(i) || origin(i) > bmax(i)) return -1.0;
      continue;
    }
    double ta = (bmin(i) - origin(i)) / dir(i);
    double tb = (bmax(i) - origin(i)) / dir(i);
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return -1.0;
  }
  return t0;
}

namespace {

double ray_cylinder(const Vec3& origin, const Vec3& dir, const StaticCylinder& cyl) {
  const double zmin = cyl.center.z() - cyl.height / 2.0;
  const double zmax = cyl.center.z() + cyl.height / 2.0;
  double best = -1.0;
  auto consider = [&best](double t) {
    if (t >= 0.0 && (best < 0.0 || t < best)) best = t;
  };
  // Lateral surface: |xy(origin + t dir) - xy(center)| = radius.
  const double ox = origin.x() - cyl.center.x();
  const double oy = origin.y() - cyl.center.y();
  const double a = dir.x() * dir.x() + dir.y() * dir.y();
  const double b = 2.0 * (ox * dir.x() + oy * dir.y());
  const double c = ox * ox + oy * oy - cyl.radius * cyl.radius;
  if (a > 1e-15) {
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        const double z = origin.z() + t * dir.z();
        if (t >= 0.0 && z >= zmin && z <= zmax) consider(t);
      }
    }
  }
  // Caps.
  if (std::abs(dir.z()) > 1e-15) {
    for (double zcap : {zmin, zmax}) {
      const double t = (zcap - origin.z()) / dir.z();
      if (t < 0.0) continue;
      const double x = origin.x() + t * dir.x() - cyl.center.x();
      const double y = origin.y() + t * dir.y() - cyl.center.y();
      if (x * x + y * y <= cyl.radius * cyl.radius) consider(t);
    }
  }
  return best;
}

}  // namespace

RayHit raycast_scene(const Scenario& sc, const Vec3& origin, const Vec3& dir, double t,
                     double max_range, double g) {
  RayHit hit;
  double best = max_range;
  bool found = false;
  for (const auto& box : sc.boxes) {
    const double r = ray_aabb(origin, dir, box.min, box.max);
    if (r >= 0.0 && r <= best) {
      best = r;
      hit.dynamic = false;
      found = true;
    }
  }
  for (const auto& cyl : sc.cylinders) {
    const double r = ray_cylinder(origin, dir, cyl);
    if (r >= 0.0 && r <= best) {
      best = r;
      hit.dynamic = false;
      found = true;
    }
  }
  for (const auto& script : sc.scripts) {
    const Vec3 c = obstacle_position(script, t, g);
    const double r = ray_aabb(origin, dir, c - script.half_extents, c + script.half_extents);
    if (r >= 0.0 && r <= best) {
      best = r;
      hit.dynamic = true;
      found = true;
    }
  }
  if (found) hit.range = best;
  return hit;
}

LabeledFrame sense(const Scenario& sc, const Pose& pose, double t, std::mt19937_64& rng) {
  const SensorConfig& cfg = sc.sensor;
  LabeledFrame frame;
  frame.t = t;
  frame.sensor_pose = pose;

  std::normal_distribution<double> noise(0.0, cfg.sigma);
  const double fov_h = cfg.fov_h * kPi / 180.0;
  const double fov_v = cfg.fov_v * kPi / 180.0;
  const Eigen::Matrix3d rot = pose.orientation.toRotationMatrix();

  for (int i = 0; i < cfg.rays_az; ++i) {
    const double az = -fov_h / 2.0 + fov_h * (i + 0.5) / cfg.rays_az;
    for (int j = 0; j < cfg.rays_el; ++j) {
      const double el =
          cfg.rays_el == 1 ? 0.0 : -fov_v / 2.0 + fov_v * j / (cfg.rays_el - 1);
      const Vec3 dir = rot * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                  std::sin(el));
      const RayHit hit = raycast_scene(sc, pose.position, dir, t, cfg.max_range);
      if (hit.range < 0.0) continue;
      const double r = cfg.sigma > 0.0 ? hit.range + noise(rng) : hit.range;
      LabeledPoint pt;
      pt.position = pose.position + dir * std::max(r, 0.0);
      pt.label = hit.dynamic ? PointLabel::Dynamic : PointLabel::Static;
      pt.t = t;
      frame.points.push_back(pt);
    }
  }
  return frame;
}

QuadState step_plant(const QuadState& x, const ControlInput& u, double dt) {
  if (dt <= 0.0) throw ContractViolation("step_plant: dt must be > 0");
  return discrete_model(x, u, dt);
}

}  // namespace dynavoid
