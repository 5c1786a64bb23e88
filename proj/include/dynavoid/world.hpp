#pragma once

#include <random>
#include <string>
#include <vector>

#include "dynavoid/perception.hpp"
#include "dynavoid/types.hpp"

namespace dynavoid {

struct StaticBox {
  Vec3 min{Vec3::Zero()};
  Vec3 max{Vec3::Zero()};
};

/// Vertical cylinder; `center` is the geometric center, axis along z.
struct StaticCylinder {
  Vec3 center{Vec3::Zero()};
  double radius{0.0};
  double height{0.0};
};

struct ObstacleScript {
  enum class Kind { Reciprocating, Ballistic, ConstVel };
  Kind kind{Kind::Reciprocating};
  Vec3 half_extents{Vec3::Zero()};
  // Reciprocating: center + axis * amplitude * sin(speed * t / amplitude + phase)
  Vec3 center{Vec3::Zero()};
  Vec3 axis{Vec3::UnitY()};
  double amplitude{0.0};
  double speed{0.0};
  double phase{0.0};
  // Ballistic
  Vec3 p0{Vec3::Zero()};
  Vec3 v0{Vec3::Zero()};
  double t_launch{0.0};
  // ConstVel
  Vec3 cv_p0{Vec3::Zero()};
  Vec3 cv_v{Vec3::Zero()};
  double t_start{0.0};
  double t_end{0.0};
};

/// Scripted true position of a dynamic obstacle at time t.
Vec3 obstacle_position(const ObstacleScript& script, double t, double g = 9.81);

struct SensorConfig {
  double rate{30.0};       // Hz
  double max_range{30.0};  // m
  double fov_h{360.0};     // degrees
  double fov_v{60.0};      // degrees
  int rays_az{64};
  int rays_el{16};
  double sigma{0.01};      // m range noise
};

struct Scenario {
  std::string name;
  std::vector<StaticBox> boxes;
  std::vector<StaticCylinder> cylinders;
  std::vector<ObstacleScript> scripts;
  Vec3 start{0.0, 0.0, 2.0};
  Vec3 goal{30.0, 0.0, 2.0};
  SensorConfig sensor;
  bool unknown_is_free{true};
  double duration_limit{30.0};
  uint64_t seed{0};
};

/// Distance from a point to the closest static solid (boxes and cylinders).
double static_clearance(const Vec3& p, const Scenario& sc);

/// Distance to the closest scripted dynamic cuboid at its true position.
double dynamic_clearance(const Vec3& p, const Scenario& sc, double t, double g = 9.81);

/// True iff the robot point is closer than d_rad to any solid, static or
/// scripted dynamic (strict inequality).
bool check_collision(const Vec3& p, const Scenario& sc, double t, double d_rad,
                     double g = 9.81);

/// First-hit distance of a ray against the full scene (static solids and
/// dynamic cuboids at time t). Returns range and whether the hit object is
/// dynamic; range < 0 means no hit within max_range.
struct RayHit {
  double range{-1.0};
  bool dynamic{false};
};
RayHit raycast_scene(const Scenario& sc, const Vec3& origin, const Vec3& dir, double t,
                     double max_range, double g = 9.81);

/// Casts the configured ray grid from the pose; each first hit within range
/// becomes a labeled world-frame point with Gaussian range noise. Points on
/// scripted dynamic obstacles are labeled Dynamic. Deterministic per rng.
LabeledFrame sense(const Scenario& sc, const Pose& pose, double t, std::mt19937_64& rng);

/// Plant update; identical formula to the MPC's discrete model.
QuadState step_plant(const QuadState& x, const ControlInput& u, double dt);

// Exposed for tests: slab-method ray/AABB intersection (entry distance, or
// negative when the ray misses). Origin inside the box reports 0.
double ray_aabb(const Vec3& origin, const Vec3& dir, const Vec3& bmin, const Vec3& bmax);

}  // namespace dynavoid
