#include <doctest.h>

#include <random>

#include "dynavoid/dbscan.hpp"
#include "dynavoid/hungarian.hpp"
#include "dynavoid/perception.hpp"
#include "oracles.hpp"

using namespace dynavoid;

namespace {

LabeledFrame make_frame(double t, const std::vector<Vec3>& pts, PointLabel label) {
  LabeledFrame frame;
  frame.t = t;
  for (const Vec3& p : pts) frame.points.push_back({p, label, t});
  return frame;
}

ObstacleObservation obs_at(const Vec3& center, double t, const Vec3& extents = Vec3::Zero()) {
  ObstacleObservation o;
  o.center = center;
  o.half_extents = extents;
  o.t = t;
  o.point_count = 1;
  return o;
}

}  // namespace

TEST_CASE("oracle detector passes ground-truth labels through") {
  PerceptionConfig cfg;
  Detector det(DetectorKind::Oracle, cfg);

  auto frame = make_frame(0.0, {{1, 0, 0}, {2, 0, 0}}, PointLabel::Static);
  auto out = det.label_frame(frame);
  for (const auto& pt : out.points) CHECK(pt.label == PointLabel::Static);

  frame = make_frame(0.1, {{1, 0, 0}}, PointLabel::Dynamic);
  out = det.label_frame(frame);
  CHECK(out.points[0].label == PointLabel::Dynamic);
  CHECK(out.points.size() == frame.points.size());
}

TEST_CASE("velocity baseline flags displaced points") {
  PerceptionConfig cfg;  // threshold 0.3 m
  Detector det(DetectorKind::VelocityBaseline, cfg);

  // Frame 1: establishes the reference; everything static by convention.
  auto f1 = make_frame(0.0, {{0, 0, 0}, {5, 5, 0}}, PointLabel::Static);
  det.label_frame(f1);

  // Frame 2: one point displaced 0.5 m (15 m/s apparent at 30 Hz), one still.
  auto f2 = make_frame(1.0 / 30.0, {{0.5, 0, 0}, {5, 5, 0}}, PointLabel::Static);
  const auto out = det.label_frame(f2);

  // Brute-force nearest neighbour distances against frame 1.
  for (size_t i = 0; i < out.points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : f1.points) best = std::min(best, (out.points[i].position - q.position).norm());
    const bool expect_dynamic = best > cfg.baseline_disp_threshold;
    CHECK((out.points[i].label == PointLabel::Dynamic) == expect_dynamic);
  }
  CHECK(out.points[0].label == PointLabel::Dynamic);
  CHECK(out.points[1].label == PointLabel::Static);
}

TEST_CASE("unknown detector kind is a configuration error") {
  CHECK_THROWS_AS(detector_from_string("magic"), ConfigError);
  CHECK(detector_from_string("oracle") == DetectorKind::Oracle);
  CHECK(detector_from_string("baseline") == DetectorKind::VelocityBaseline);
}

TEST_CASE("dbscan separates two well-spaced groups") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(Vec3(0.05 * i, 0, 0));
  for (int i = 0; i < 10; ++i) pts.push_back(Vec3(3.0 + 0.05 * i, 0, 0));
  const auto clusters = cluster_dynamic(pts, 0.3, 3);
  REQUIRE(clusters.size() == 2);
  CHECK(clusters[0].size() == 10);
  CHECK(clusters[1].size() == 10);
  CHECK(oracles::same_partition(clusters, oracles::dbscan_reference(pts, 0.3, 3)));
}

TEST_CASE("dbscan: single point below density threshold is noise") {
  CHECK(cluster_dynamic({Vec3(1, 2, 3)}, 0.3, 3).empty());
}

TEST_CASE("dbscan: empty input") { CHECK(cluster_dynamic({}, 0.3, 3).empty()); }

TEST_CASE("dbscan matches the naive reference on random point sets") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coord(-2.0, 2.0);
  std::uniform_int_distribution<int> count(0, 60);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> pts;
    const int n = count(rng);
    for (int i = 0; i < n; ++i) pts.push_back(Vec3(coord(rng), coord(rng), coord(rng)));
    const auto ours = cluster_dynamic(pts, 0.5, 4);
    const auto ref = oracles::dbscan_reference(pts, 0.5, 4);
    CHECK(oracles::same_partition(ours, ref));
  }
}

TEST_CASE("dbscan is invariant under input permutation") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(-1.5, 1.5);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 40; ++i) pts.push_back(Vec3(coord(rng), coord(rng), coord(rng)));
    const auto base = cluster_dynamic(pts, 0.5, 4);

    std::vector<int> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Vec3> shuffled;
    for (int idx : order) shuffled.push_back(pts[idx]);
    const auto permuted = cluster_dynamic(shuffled, 0.5, 4);

    // Compare as point sets (indices refer to different orders).
    auto to_point_sets = [](const std::vector<std::vector<int>>& cs,
                            const std::vector<Vec3>& ps) {
      std::set<std::set<std::array<double, 3>>> out;
      for (const auto& c : cs) {
        std::set<std::array<double, 3>> members;
        for (int i : c) members.insert({ps[i].x(), ps[i].y(), ps[i].z()});
        out.insert(members);
      }
      return out;
    };
    CHECK(to_point_sets(base, pts) == to_point_sets(permuted, shuffled));
    // Disjointness.
    std::set<int> seen;
    size_t total = 0;
    for (const auto& c : base) {
      seen.insert(c.begin(), c.end());
      total += c.size();
    }
    CHECK(seen.size() == total);
  }
}

TEST_CASE("cluster_to_observation computes mean center and farthest extents") {
  SUBCASE("two-point symmetry") {
    const auto obs = cluster_to_observation({Vec3(0, 0, 0), Vec3(2, 0, 0)}, 1.0);
    CHECK(obs.center == Vec3(1, 0, 0));
    CHECK(obs.half_extents == Vec3(1, 0, 0));
    CHECK(obs.point_count == 2);
  }
  SUBCASE("single point degenerates to zero extents") {
    const auto obs = cluster_to_observation({Vec3(4, -1, 2)}, 0.5);
    CHECK(obs.center == Vec3(4, -1, 2));
    CHECK(obs.half_extents == Vec3(0, 0, 0));
  }
  SUBCASE("unit cube corners") {
    std::vector<Vec3> corners;
    for (int dx : {-1, 1})
      for (int dy : {-1, 1})
        for (int dz : {-1, 1}) corners.push_back(Vec3(5 + 0.5 * dx, 5 + 0.5 * dy, 1 + 0.5 * dz));
    const auto obs = cluster_to_observation(corners, 2.0);
    CHECK(obs.center.isApprox(Vec3(5, 5, 1)));
    CHECK(obs.half_extents.isApprox(Vec3(0.5, 0.5, 0.5)));
  }
  SUBCASE("points all lie inside the cuboid by construction") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> coord(-1, 1);
    std::vector<Vec3> pts;
    for (int i = 0; i < 50; ++i) pts.push_back(Vec3(coord(rng), coord(rng), coord(rng)));
    const auto obs = cluster_to_observation(pts, 0.0);
    for (const auto& p : pts)
      CHECK(((p - obs.center).cwiseAbs().array() <= obs.half_extents.array() + 1e-12).all());
  }
  SUBCASE("empty cluster rejected") {
    CHECK_THROWS_AS(cluster_to_observation({}, 0.0), ContractViolation);
  }
}

TEST_CASE("hungarian equals brute force on random matrices up to 6x6") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> cost(0.0, 10.0);
  for (int n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      Eigen::MatrixXd m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = cost(rng);
      const auto assign = hungarian_min_cost(m);
      double total = 0.0;
      std::set<int> used;
      for (int i = 0; i < n; ++i) {
        REQUIRE(assign[i] >= 0);
        total += m(i, assign[i]);
        used.insert(assign[i]);
      }
      CHECK(used.size() == static_cast<size_t>(n));  // one-to-one
      CHECK(total == doctest::Approx(oracles::brute_force_assignment(m)).epsilon(1e-12));
    }
  }
}

TEST_CASE("associate: single candidate within gate matches") {
  PerceptionConfig cfg;
  Track tr;
  tr.id = 0;
  tr.history.push_back(obs_at(Vec3(0, 0, 0), 0.0));
  tr.last_seen = 0.0;
  const std::vector<ObstacleObservation> obs{obs_at(Vec3(0.1, 0, 0), 0.1)};
  const auto assoc = associate({tr}, obs, 0.1, cfg);
  REQUIRE(assoc.pairs.size() == 1);
  CHECK(assoc.pairs[0].first == 0);
  CHECK(assoc.pairs[0].second == 0);
  CHECK(assoc.unmatched_tracks.empty());
  CHECK(assoc.unmatched_observations.empty());
}

TEST_CASE("associate: matched total cost equals exhaustive search (3x3)") {
  PerceptionConfig cfg;
  cfg.gate_cost = 1e18;  // disable gating for the optimality check
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Track> tracks(3);
    std::vector<ObstacleObservation> obs;
    Eigen::MatrixXd cost(3, 3);
    for (int i = 0; i < 3; ++i) {
      tracks[i].id = i;
      tracks[i].history.push_back(obs_at(Vec3(coord(rng), coord(rng), coord(rng)), 0.0));
      tracks[i].half_extents = Vec3(0.2, 0.2, 0.2);
    }
    for (int j = 0; j < 3; ++j)
      obs.push_back(obs_at(Vec3(coord(rng), coord(rng), coord(rng)), 0.1,
                           Vec3(0.1 * j, 0.2, 0.3)));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        cost(i, j) =
            cfg.w_pos * (tracks[i].history[0].center - obs[j].center).norm() +
            cfg.w_size * (tracks[i].half_extents - obs[j].half_extents).cwiseAbs().sum();

    const auto assoc = associate(tracks, obs, 0.1, cfg);
    REQUIRE(assoc.pairs.size() == 3);
    double total = 0.0;
    for (const auto& [tid, oj] : assoc.pairs) total += cost(tid, oj);
    CHECK(total == doctest::Approx(oracles::brute_force_assignment(cost)).epsilon(1e-12));
  }
}

TEST_CASE("associate: no observations leaves all tracks unmatched") {
  PerceptionConfig cfg;
  Track tr;
  tr.id = 5;
  tr.history.push_back(obs_at(Vec3(1, 1, 1), 0.0));
  const auto assoc = associate({tr}, {}, 0.1, cfg);
  CHECK(assoc.pairs.empty());
  REQUIRE(assoc.unmatched_tracks.size() == 1);
  CHECK(assoc.unmatched_tracks[0] == 5);
}

TEST_CASE("associate: gate breaks distant pairs") {
  PerceptionConfig cfg;  // gate_cost 1.5
  Track tr;
  tr.id = 0;
  tr.history.push_back(obs_at(Vec3(0, 0, 0), 0.0));
  const auto assoc = associate({tr}, {obs_at(Vec3(5, 0, 0), 0.1)}, 0.1, cfg);
  CHECK(assoc.pairs.empty());
  CHECK(assoc.unmatched_tracks.size() == 1);
  CHECK(assoc.unmatched_observations.size() == 1);
}

TEST_CASE("fit_trajectory: exact ballistic data classifies as free fall") {
  PerceptionConfig cfg;
  std::vector<ObstacleObservation> hist;
  for (double t : {0.0, 0.1, 0.2, 0.3})
    hist.push_back(obs_at(Vec3(0, 0, 5.0 - 4.905 * t * t), t));
  const auto model = fit_trajectory(hist, cfg);
  CHECK(model.kind == MotionModel::FreeFall);
  CHECK(model.coeffs(2, 2) == doctest::Approx(-4.905).epsilon(1e-9));
  CHECK(model.epoch == 0.3);
}

TEST_CASE("fit_trajectory: exact linear data classifies as constant velocity") {
  PerceptionConfig cfg;
  std::vector<ObstacleObservation> hist;
  for (double t : {0.0, 0.1, 0.2}) hist.push_back(obs_at(Vec3(1.0 + 2.0 * t, 0, 1), t));
  const auto model = fit_trajectory(hist, cfg);
  CHECK(model.kind == MotionModel::ConstantVelocity);
  CHECK(model.coeffs(0, 1) == doctest::Approx(2.0).epsilon(1e-9));
  for (int axis = 0; axis < 3; ++axis) CHECK(model.coeffs(axis, 2) == 0.0);
}

TEST_CASE("fit_trajectory matches the normal-equations oracle on noisy data") {
  PerceptionConfig cfg;
  std::mt19937_64 rng(31);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<ObstacleObservation> hist;
  std::vector<double> s, zs;
  const double t_last = 0.9;
  for (int i = 0; i < 10; ++i) {
    const double t = 0.1 * i;
    const Vec3 c(1.0 + 0.5 * t + noise(rng), -2.0 + noise(rng),
                 5.0 - 4.905 * t * t + 1.0 * t + noise(rng));
    hist.push_back(obs_at(c, t));
    s.push_back(t - t_last);
    zs.push_back(c.z());
  }
  const auto model = fit_trajectory(hist, cfg);
  // The z quadratic must match the independent normal-equations fit.
  const auto beta = oracles::normal_equations_fit(s, zs, 2);
  if (model.kind == MotionModel::FreeFall) {
    for (int k = 0; k < 3; ++k)
      CHECK(model.coeffs(2, k) == doctest::Approx(beta[k]).epsilon(1e-9));
  }
  // Linear axes match their own linear normal-equations fits.
  std::vector<double> xs;
  for (const auto& h : hist) xs.push_back(h.center.x());
  const auto beta_x = oracles::normal_equations_fit(s, xs, 1);
  CHECK(model.coeffs(0, 0) == doctest::Approx(beta_x[0]).epsilon(1e-9));
  CHECK(model.coeffs(0, 1) == doctest::Approx(beta_x[1]).epsilon(1e-9));
}

TEST_CASE("fit residuals are locally optimal") {
  PerceptionConfig cfg;
  std::mt19937_64 rng(37);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<ObstacleObservation> hist;
  for (int i = 0; i < 8; ++i) {
    const double t = 0.1 * i;
    hist.push_back(obs_at(Vec3(2 * t + noise(rng), noise(rng), 3 + noise(rng)), t));
  }
  const auto model = fit_trajectory(hist, cfg);
  auto sse = [&](int axis, double dc0, double dc1) {
    double acc = 0.0;
    for (const auto& h : hist) {
      const double s = h.t - model.epoch;
      const double pred =
          (model.coeffs(axis, 0) + dc0) + (model.coeffs(axis, 1) + dc1) * s +
          model.coeffs(axis, 2) * s * s;
      acc += (h.center(axis) - pred) * (h.center(axis) - pred);
    }
    return acc;
  };
  for (int axis = 0; axis < 3; ++axis) {
    const double base = sse(axis, 0, 0);
    for (double d : {-1e-6, 1e-6}) {
      CHECK(base <= sse(axis, d, 0) + 1e-15);
      CHECK(base <= sse(axis, 0, d) + 1e-15);
    }
  }
}

TEST_CASE("fit_trajectory rejects bad input") {
  PerceptionConfig cfg;
  std::vector<ObstacleObservation> two{obs_at(Vec3(0, 0, 0), 0.0), obs_at(Vec3(1, 0, 0), 0.1)};
  CHECK_THROWS_AS(fit_trajectory(two, cfg), ContractViolation);
  std::vector<ObstacleObservation> dup{obs_at(Vec3(0, 0, 0), 0.0), obs_at(Vec3(1, 0, 0), 0.1),
                                       obs_at(Vec3(2, 0, 0), 0.1)};
  CHECK_THROWS_AS(fit_trajectory(dup, cfg), ContractViolation);
}

TEST_CASE("predict_position evaluates the polynomial and clamps the horizon") {
  TrajectoryModel cv;
  cv.kind = MotionModel::ConstantVelocity;
  cv.coeffs.setZero();
  cv.coeffs(0, 0) = 1.0;
  cv.coeffs(0, 1) = 2.0;
  cv.epoch = 0.0;
  CHECK(predict_position(cv, 0.5, 1.5).x() == doctest::Approx(2.0));
  CHECK(predict_position(cv, 0.0, 1.5).x() == doctest::Approx(1.0));  // identity at epoch
  CHECK(predict_position(cv, 99.0, 1.5).x() == doctest::Approx(1.0 + 2.0 * 1.5));  // clamped

  TrajectoryModel ff;
  ff.kind = MotionModel::FreeFall;
  ff.coeffs.setZero();
  ff.coeffs(2, 0) = 5.0;
  ff.coeffs(2, 2) = -4.905;
  ff.epoch = 0.0;
  CHECK(predict_position(ff, 1.0, 1.5).z() == doctest::Approx(0.095));
}

TEST_CASE("track lifecycle: spawn, confirm at three detections, remove at 1 s") {
  PerceptionConfig cfg;
  std::vector<Track> tracks;
  int next_id = 0;

  // Bootstrap: unmatched observation spawns a tentative track without model.
  {
    Association assoc;
    assoc.unmatched_observations = {0};
    update_tracks(tracks, assoc, {obs_at(Vec3(0, 0, 0), 0.0)}, 0.0, cfg, next_id);
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].state == TrackState::Tentative);
    CHECK(!tracks[0].model);
  }
  // Second observation: still tentative.
  {
    Association assoc;
    assoc.pairs = {{0, 0}};
    update_tracks(tracks, assoc, {obs_at(Vec3(0.1, 0, 0), 0.033)}, 0.033, cfg, next_id);
    CHECK(tracks[0].state == TrackState::Tentative);
    CHECK(!tracks[0].model);
  }
  // Third observation: confirmed, model fitted.
  {
    Association assoc;
    assoc.pairs = {{0, 0}};
    update_tracks(tracks, assoc, {obs_at(Vec3(0.2, 0, 0), 0.066)}, 0.066, cfg, next_id);
    CHECK(tracks[0].state == TrackState::Confirmed);
    CHECK(tracks[0].model.has_value());
  }
  // Match once more at t = 1.0 so last_seen = 1.0 s exactly.
  {
    Association assoc;
    assoc.pairs = {{0, 0}};
    update_tracks(tracks, assoc, {obs_at(Vec3(0.3, 0, 0), 1.0)}, 1.0, cfg, next_id);
    CHECK(tracks[0].last_seen == 1.0);
  }
  // Missed updates keep the track (reserved, stale) until the 1.0 s period
  // elapses; an update at 2.05 s removes it.
  {
    Association assoc;
    assoc.unmatched_tracks = {0};
    update_tracks(tracks, assoc, {}, 1.5, cfg, next_id);
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].state == TrackState::Stale);
    CHECK(tracks[0].model.has_value());  // reserved tracks keep their curve
    update_tracks(tracks, assoc, {}, 2.0, cfg, next_id);  // exactly 1.0 s: kept
    REQUIRE(tracks.size() == 1);
    update_tracks(tracks, assoc, {}, 2.05, cfg, next_id);  // 1.05 s: removed
    CHECK(tracks.empty());
  }
}

TEST_CASE("lifecycle properties: no model while tentative; stale removal bound") {
  PerceptionConfig cfg;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> coord(-5.0, 5.0);
  std::uniform_int_distribution<int> n_obs(0, 4);

  std::vector<Track> tracks;
  int next_id = 0;
  double t = 0.0;
  for (int frame = 0; frame < 200; ++frame) {
    t += 1.0 / 30.0;
    std::vector<ObstacleObservation> obs;
    for (int i = 0; i < n_obs(rng); ++i)
      obs.push_back(obs_at(Vec3(coord(rng), coord(rng), coord(rng)), t));
    const auto assoc = associate(tracks, obs, t, cfg);
    update_tracks(tracks, assoc, obs, t, cfg, next_id);
    for (const auto& tr : tracks) {
      if (tr.state == TrackState::Tentative) CHECK(!tr.model);
      if (tr.model) CHECK(tr.history.size() >= 3);
      CHECK(t - tr.last_seen <= cfg.reserve_period + 1e-9);
      for (size_t i = 1; i < tr.history.size(); ++i)
        CHECK(tr.history[i].t > tr.history[i - 1].t);
      // History trimmed to the fitting window.
      CHECK(tr.history.back().t - tr.history.front().t <= cfg.history_window + 1e-9);
    }
  }
}

TEST_CASE("tracker pipeline confirms a ballistic object and predicts ahead") {
  PerceptionConfig cfg;
  Tracker tracker(cfg);
  for (int frame = 0; frame < 6; ++frame) {
    const double t = frame / 30.0;
    const double z = 5.0 - 4.905 * t * t;
    std::vector<Vec3> pts;
    for (int i = 0; i < 6; ++i)
      pts.push_back(Vec3(10 + 0.03 * (i % 3), 0.03 * (i / 3), z + 0.02 * (i % 2)));
    LabeledFrame f = make_frame(t, pts, PointLabel::Dynamic);
    tracker.process(f);
  }
  REQUIRE(tracker.tracks().size() == 1);
  const Track& tr = tracker.tracks()[0];
  CHECK(tr.state == TrackState::Confirmed);
  REQUIRE(tr.model.has_value());
  CHECK(tr.model->kind == MotionModel::FreeFall);
}
