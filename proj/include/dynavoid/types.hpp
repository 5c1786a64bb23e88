#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace dynavoid {

using Vec3 = Eigen::Vector3d;
using Vec3i = Eigen::Vector3i;
using Quat = Eigen::Quaterniond;

/// Thrown when a configuration value or input file is unusable.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown when a caller violates a documented precondition.
struct ContractViolation : std::logic_error {
  using std::logic_error::logic_error;
};

/// Flat-output quadrotor state: position, velocity, acceleration per axis.
struct QuadState {
  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Vec3 a{Vec3::Zero()};
};

/// Jerk command, m/s^3.
struct ControlInput {
  Vec3 u{Vec3::Zero()};
};

/// Sensor pose: position plus orientation (unit quaternion).
struct Pose {
  Vec3 position{Vec3::Zero()};
  Quat orientation{Quat::Identity()};
};

inline bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace dynavoid
