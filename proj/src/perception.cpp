#include "dynavoid/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynavoid/dbscan.hpp"
#include "dynavoid/hungarian.hpp"

namespace dynavoid {

namespace {
constexpr double kPadCost = 1e9;
}

Vec3 Track::predicted_center(double t, double horizon) const {
  if (model) return predict_position(*model, t, horizon);
  if (history.empty()) throw ContractViolation("Track::predicted_center: empty history");
  return history.back().center;
}

DetectorKind detector_from_string(const std::string& name) {
  if (name == "oracle") return DetectorKind::Oracle;
  if (name == "baseline") return DetectorKind::VelocityBaseline;
  throw ConfigError("unknown detector kind: '" + name + "' (expected oracle|baseline)");
}

LabeledFrame Detector::label_frame(const LabeledFrame& raw) {
  if (!finite(raw.sensor_pose.position))
    throw ContractViolation("label_frame: non-finite sensor pose");
  LabeledFrame out = raw;
  if (kind_ == DetectorKind::Oracle) {
    return out;  // ground-truth labels pass through untouched
  }
  // VelocityBaseline: a point is dynamic when its nearest neighbour in the
  // previous frame is farther than the displacement threshold.
  const double thr2 = cfg_.baseline_disp_threshold * cfg_.baseline_disp_threshold;
  for (auto& pt : out.points) {
    if (!has_prev_) {
      pt.label = PointLabel::Static;
      continue;
    }
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : prev_points_) {
      best = std::min(best, (pt.position - q).squaredNorm());
      if (best <= thr2) break;
    }
    pt.label = best > thr2 ? PointLabel::Dynamic : PointLabel::Static;
  }
  prev_points_.clear();
  prev_points_.reserve(raw.points.size());
  for (const auto& pt : raw.points) prev_points_.push_back(pt.position);
  has_prev_ = true;
  return out;
}

ObstacleObservation cluster_to_observation(const std::vector<Vec3>& cluster_points, double t) {
  if (cluster_points.empty())
    throw ContractViolation("cluster_to_observation: empty cluster");
  ObstacleObservation obs;
  obs.t = t;
  obs.point_count = static_cast<int>(cluster_points.size());
  Vec3 sum = Vec3::Zero();
  for (const Vec3& p : cluster_points) sum += p;
  obs.center = sum / static_cast<double>(cluster_points.size());
  for (const Vec3& p : cluster_points)
    obs.half_extents = obs.half_extents.cwiseMax((p - obs.center).cwiseAbs());
  return obs;
}

namespace {

// Least-squares polynomial fit of degree `deg` on (s_i, y_i).
Eigen::VectorXd polyfit(const Eigen::VectorXd& s, const Eigen::VectorXd& y, int deg) {
  Eigen::MatrixXd vand(s.size(), deg + 1);
  for (int i = 0; i < s.size(); ++i) {
    double pw = 1.0;
    for (int j = 0; j <= deg; ++j) {
      vand(i, j) = pw;
      pw *= s(i);
    }
  }
  return vand.colPivHouseholderQr().solve(y);
}

}  // namespace

TrajectoryModel fit_trajectory(const std::vector<ObstacleObservation>& history,
                               const PerceptionConfig& cfg) {
  const int n = static_cast<int>(history.size());
  if (n < 3) throw ContractViolation("fit_trajectory: need at least 3 observations");
  for (int i = 1; i < n; ++i)
    if (!(history[i].t > history[i - 1].t))
      throw ContractViolation("fit_trajectory: timestamps must be strictly increasing");

  TrajectoryModel model;
  model.epoch = history.back().t;
  model.window_min = history.front().t;
  model.window_max = history.back().t;

  Eigen::VectorXd s(n);
  std::array<Eigen::VectorXd, 3> axis_y;
  for (auto& y : axis_y) y.resize(n);
  for (int i = 0; i < n; ++i) {
    s(i) = history[i].t - model.epoch;
    for (int d = 0; d < 3; ++d) axis_y[d](i) = history[i].center(d);
  }

  const Eigen::VectorXd quad_z = polyfit(s, axis_y[2], 2);
  const bool free_fall = std::abs(quad_z(2) - (-cfg.g / 2.0)) <= cfg.tol_ff;

  model.kind = free_fall ? MotionModel::FreeFall : MotionModel::ConstantVelocity;
  for (int d = 0; d < 3; ++d) {
    if (free_fall && d == 2) {
      model.coeffs.row(2) = quad_z.transpose();
    } else {
      const Eigen::VectorXd lin = polyfit(s, axis_y[d], 1);
      model.coeffs(d, 0) = lin(0);
      model.coeffs(d, 1) = lin(1);
      model.coeffs(d, 2) = 0.0;
    }
  }
  return model;
}

Vec3 predict_position(const TrajectoryModel& model, double t, double horizon) {
  double s = t - model.epoch;
  s = std::clamp(s, 0.0, horizon);
  Vec3 out;
  for (int d = 0; d < 3; ++d)
    out(d) = model.coeffs(d, 0) + model.coeffs(d, 1) * s + model.coeffs(d, 2) * s * s;
  return out;
}

Association associate(const std::vector<Track>& tracks,
                      const std::vector<ObstacleObservation>& observations, double t,
                      const PerceptionConfig& cfg) {
  Association out;
  const int nt = static_cast<int>(tracks.size());
  const int no = static_cast<int>(observations.size());
  if (nt == 0 || no == 0) {
    for (const auto& tr : tracks) out.unmatched_tracks.push_back(tr.id);
    for (int j = 0; j < no; ++j) out.unmatched_observations.push_back(j);
    return out;
  }

  Eigen::MatrixXd cost(nt, no);
  for (int i = 0; i < nt; ++i) {
    const Vec3 pred = tracks[i].predicted_center(t, cfg.prediction_horizon);
    for (int j = 0; j < no; ++j) {
      const double pos_err = (pred - observations[j].center).norm();
      const double size_err =
          (tracks[i].half_extents - observations[j].half_extents).cwiseAbs().sum();
      cost(i, j) = cfg.w_pos * pos_err + cfg.w_size * size_err;
    }
  }

  const std::vector<int> row_to_col = hungarian_min_cost_rect(cost, kPadCost);
  std::vector<bool> obs_taken(no, false);
  for (int i = 0; i < nt; ++i) {
    const int j = row_to_col[i];
    if (j >= 0 && cost(i, j) <= cfg.gate_cost) {
      out.pairs.emplace_back(tracks[i].id, j);
      obs_taken[j] = true;
    } else {
      out.unmatched_tracks.push_back(tracks[i].id);
    }
  }
  for (int j = 0; j < no; ++j)
    if (!obs_taken[j]) out.unmatched_observations.push_back(j);
  return out;
}

namespace {

void trim_history(Track& track, double now, double window) {
  auto& h = track.history;
  const double cutoff = now - window;
  size_t keep_from = 0;
  while (keep_from < h.size() && h[keep_from].t < cutoff) ++keep_from;
  if (keep_from > 0) h.erase(h.begin(), h.begin() + static_cast<long>(keep_from));
}

void refit_if_ready(Track& track, const PerceptionConfig& cfg) {
  if (track.history.size() >= 3) {
    track.model = fit_trajectory(track.history, cfg);
    track.state = TrackState::Confirmed;
  }
}

}  // namespace

void update_tracks(std::vector<Track>& tracks, const Association& assoc,
                   const std::vector<ObstacleObservation>& observations, double t,
                   const PerceptionConfig& cfg, int& next_track_id) {
  auto find_track = [&tracks](int id) -> Track& {
    for (auto& tr : tracks)
      if (tr.id == id) return tr;
    throw ContractViolation("update_tracks: assignment references unknown track id");
  };

  for (const auto& [track_id, obs_idx] : assoc.pairs) {
    if (obs_idx < 0 || obs_idx >= static_cast<int>(observations.size()))
      throw ContractViolation("update_tracks: assignment references unknown observation");
    Track& tr = find_track(track_id);
    const ObstacleObservation& obs = observations[obs_idx];
    if (!tr.history.empty() && !(obs.t > tr.history.back().t))
      throw ContractViolation("update_tracks: observation time not after history");
    tr.history.push_back(obs);
    tr.half_extents = obs.half_extents;
    tr.last_seen = t;
    trim_history(tr, t, cfg.history_window);
    if (tr.state != TrackState::Confirmed && tr.history.size() < 3) {
      tr.state = TrackState::Tentative;
      tr.model.reset();  // a tentative track never carries a model
    }
    refit_if_ready(tr, cfg);
  }

  for (int obs_idx : assoc.unmatched_observations) {
    if (obs_idx < 0 || obs_idx >= static_cast<int>(observations.size()))
      throw ContractViolation("update_tracks: assignment references unknown observation");
    Track tr;
    tr.id = next_track_id++;
    tr.history.push_back(observations[obs_idx]);
    tr.half_extents = observations[obs_idx].half_extents;
    tr.last_seen = t;
    tr.state = TrackState::Tentative;
    tracks.push_back(std::move(tr));
  }

  // Unmatched tracks: drop after the reserve period, otherwise mark stale.
  // A previously confirmed track keeps its fitted model so its predicted
  // trajectory stays usable while the track is reserved.
  tracks.erase(std::remove_if(tracks.begin(), tracks.end(),
                              [&](const Track& tr) {
                                return t - tr.last_seen > cfg.reserve_period;
                              }),
               tracks.end());
  for (auto& tr : tracks)
    if (tr.last_seen < t) tr.state = TrackState::Stale;
}

void Tracker::process(const LabeledFrame& frame) {
  std::vector<Vec3> dynamic_points;
  for (const auto& pt : frame.points)
    if (pt.label == PointLabel::Dynamic) dynamic_points.push_back(pt.position);

  std::vector<ObstacleObservation> observations;
  for (const auto& cluster : cluster_dynamic(dynamic_points, cfg_.dbscan_eps, cfg_.dbscan_min_pts)) {
    std::vector<Vec3> pts;
    pts.reserve(cluster.size());
    for (int idx : cluster) pts.push_back(dynamic_points[idx]);
    observations.push_back(cluster_to_observation(pts, frame.t));
  }

  const Association assoc = associate(tracks_, observations, frame.t, cfg_);
  update_tracks(tracks_, assoc, observations, frame.t, cfg_, next_id_);
}

std::vector<const Track*> Tracker::tracks_with_models() const {
  std::vector<const Track*> out;
  for (const auto& tr : tracks_)
    if (tr.model) out.push_back(&tr);
  return out;
}

}  // namespace dynavoid
