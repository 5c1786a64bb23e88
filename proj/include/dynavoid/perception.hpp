#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dynavoid/types.hpp"

namespace dynavoid {

enum class PointLabel { Static, Dynamic };

struct LabeledPoint {
  Vec3 position{Vec3::Zero()};
  PointLabel label{PointLabel::Static};
  double t{0.0};
};

/// One sensor frame of world-frame points, each tagged static/dynamic.
struct LabeledFrame {
  double t{0.0};
  Pose sensor_pose;
  std::vector<LabeledPoint> points;
};

/// Cuboid summary of one dynamic cluster: mean center, per-axis farthest
/// distance from the center.
struct ObstacleObservation {
  Vec3 center{Vec3::Zero()};
  Vec3 half_extents{Vec3::Zero()};
  double t{0.0};
  int point_count{0};
};

enum class MotionModel { ConstantVelocity, FreeFall };

/// Per-axis polynomial c0 + c1*s + c2*s^2 with s = t - epoch.
struct TrajectoryModel {
  MotionModel kind{MotionModel::ConstantVelocity};
  Eigen::Matrix<double, 3, 3> coeffs{Eigen::Matrix<double, 3, 3>::Zero()};  // row=axis, col=order
  double epoch{0.0};
  double window_min{0.0};
  double window_max{0.0};

  Vec3 velocity_at_epoch() const { return coeffs.col(1); }
};

enum class TrackState { Tentative, Confirmed, Stale };

struct Track {
  int id{-1};
  std::vector<ObstacleObservation> history;  // strictly increasing timestamps
  Vec3 half_extents{Vec3::Zero()};
  std::optional<TrajectoryModel> model;
  double last_seen{0.0};
  TrackState state{TrackState::Tentative};

  Vec3 predicted_center(double t, double horizon) const;
};

struct PerceptionConfig {
  double dbscan_eps{0.5};
  int dbscan_min_pts{4};
  double w_pos{1.0};
  double w_size{0.5};
  double gate_cost{1.5};
  double tol_ff{2.45};           // m/s^2 band around -g/2 on the z quadratic coefficient
  double history_window{2.0};    // s of observations kept / fitted
  double reserve_period{1.0};    // s a track survives without a match
  double prediction_horizon{1.5};  // s, evaluation clamp for models
  double baseline_disp_threshold{0.3};  // m between consecutive frames
  double g{9.81};
};

// -- frame labeling ----------------------------------------------------------

enum class DetectorKind { Oracle, VelocityBaseline };

DetectorKind detector_from_string(const std::string& name);

/// Tags every point of a frame static/dynamic. Oracle passes the simulator's
/// ground-truth labels through; VelocityBaseline relabels by nearest-neighbour
/// displacement against the previous frame.
class Detector {
 public:
  Detector(DetectorKind kind, const PerceptionConfig& cfg) : kind_(kind), cfg_(cfg) {}

  LabeledFrame label_frame(const LabeledFrame& raw);
  DetectorKind kind() const { return kind_; }

 private:
  DetectorKind kind_;
  PerceptionConfig cfg_;
  std::vector<Vec3> prev_points_;
  bool has_prev_{false};
};

// -- clustering and fitting --------------------------------------------------

ObstacleObservation cluster_to_observation(const std::vector<Vec3>& cluster_points, double t);

TrajectoryModel fit_trajectory(const std::vector<ObstacleObservation>& history,
                               const PerceptionConfig& cfg);

Vec3 predict_position(const TrajectoryModel& model, double t, double horizon);

// -- association and lifecycle -----------------------------------------------

struct Association {
  std::vector<std::pair<int, int>> pairs;  // (track id, observation index)
  std::vector<int> unmatched_tracks;       // track ids
  std::vector<int> unmatched_observations; // observation indices
};

Association associate(const std::vector<Track>& tracks,
                      const std::vector<ObstacleObservation>& observations, double t,
                      const PerceptionConfig& cfg);

/// Applies one association result: appends matched observations, spawns
/// tentative tracks for unmatched observations, drops tracks unseen for
/// longer than the reserve period, trims histories to the fitting window
/// and (re)fits models once a track has three observations.
void update_tracks(std::vector<Track>& tracks, const Association& assoc,
                   const std::vector<ObstacleObservation>& observations, double t,
                   const PerceptionConfig& cfg, int& next_track_id);

/// Full per-frame pipeline: label -> cluster -> associate -> update.
class Tracker {
 public:
  explicit Tracker(const PerceptionConfig& cfg) : cfg_(cfg) {}

  void process(const LabeledFrame& frame);
  const std::vector<Track>& tracks() const { return tracks_; }
  std::vector<const Track*> tracks_with_models() const;
  const PerceptionConfig& config() const { return cfg_; }

 private:
  PerceptionConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_{0};
};

}  // namespace dynavoid
