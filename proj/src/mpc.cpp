#include "dynavoid/mpc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace dynavoid {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void MpcConfig::validate() const {
  if (dt <= 0.0) throw ConfigError("mpc.dt must be > 0");
  if (N < 2) throw ConfigError("mpc.N must be >= 2");
  for (const Vec3* w : {&r_p, &r_u, &r_c, &r_vn, &r_an, &r_o})
    if ((w->array() < 0.0).any()) throw ConfigError("mpc weights must be nonnegative");
  if ((v_max.array() <= 0.0).any() || (j_max.array() <= 0.0).any())
    throw ConfigError("mpc velocity/jerk limits must be positive");
  if (a_max_xy <= 0.0 || a_z_max <= 0.0 || a_z_min >= 0.0)
    throw ConfigError("mpc acceleration limits malformed");
  if (d_dyn <= 0.0) throw ConfigError("mpc.d_dyn must be > 0");
  if (k_cap < 1) throw ConfigError("mpc.k_cap must be >= 1");
  // PSD guard: the per-step tracking weight must dominate the worst-case sum
  // of active obstacle weights, else H can lose positive semidefiniteness.
  const Vec3 slack = r_p - static_cast<double>(k_cap) * r_o;
  if ((slack.array() < -1e-12).any())
    throw ConfigError("mpc: R_p - k_cap*R_o must be positive semidefinite");
}

QuadState discrete_model(const QuadState& x, const ControlInput& u, double dt) {
  QuadState out;
  out.p = x.p + x.v * dt + 0.5 * x.a * dt * dt + (dt * dt * dt / 6.0) * u.u;
  out.v = x.v + x.a * dt + 0.5 * dt * dt * u.u;
  out.a = x.a + dt * u.u;
  return out;
}

ObstacleConstraintSet select_active_obstacles(const std::vector<const Track*>& tracks,
                                              const std::vector<Vec3>& p_ref, double now,
                                              const MpcConfig& cfg,
                                              double prediction_horizon) {
  ObstacleConstraintSet set;
  set.per_step.resize(p_ref.size());
  for (size_t n = 0; n < p_ref.size(); ++n) {
    const double t = now + (static_cast<double>(n) + 1.0) * cfg.dt;
    std::vector<std::tuple<double, int, Vec3>> candidates;
    for (size_t k = 0; k < tracks.size(); ++k) {
      if (!tracks[k] || !tracks[k]->model) continue;
      const Vec3 obs = predict_position(*tracks[k]->model, t, prediction_horizon);
      const double dist = (p_ref[n] - obs).norm();
      if (dist < cfg.d_dyn) candidates.emplace_back(dist, static_cast<int>(k), obs);
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
    if (static_cast<int>(candidates.size()) > cfg.k_cap)
      candidates.resize(static_cast<size_t>(cfg.k_cap));
    for (const auto& [dist, k, obs] : candidates) set.per_step[n].emplace_back(k, obs);
  }
  return set;
}

namespace {

// Per-axis condensation of the triple integrator: state at step n is
// F.row(n-1) * x0_axis + G.row(n-1) * u_axis.
struct Lift {
  Eigen::MatrixXd Gp, Gv, Ga;                      // N x N
  Eigen::Matrix<double, Eigen::Dynamic, 3> Fp, Fv, Fa;  // N x 3
};

Lift build_lift(int N, double dt) {
  Eigen::Matrix3d Ad;
  Ad << 1.0, dt, 0.5 * dt * dt, 0.0, 1.0, dt, 0.0, 0.0, 1.0;
  Eigen::Vector3d Bd(dt * dt * dt / 6.0, 0.5 * dt * dt, dt);

  Lift lift;
  lift.Gp.setZero(N, N);
  lift.Gv.setZero(N, N);
  lift.Ga.setZero(N, N);
  lift.Fp.resize(N, 3);
  lift.Fv.resize(N, 3);
  lift.Fa.resize(N, 3);

  Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(3, N);  // coeff of each input on [p,v,a]
  for (int n = 1; n <= N; ++n) {
    C = Ad * C;
    C.col(n - 1) += Bd;
    F = Ad * F;
    lift.Gp.row(n - 1) = C.row(0);
    lift.Gv.row(n - 1) = C.row(1);
    lift.Ga.row(n - 1) = C.row(2);
    lift.Fp.row(n - 1) = F.row(0);
    lift.Fv.row(n - 1) = F.row(1);
    lift.Fa.row(n - 1) = F.row(2);
  }
  return lift;
}

Eigen::Vector3d axis_state(const QuadState& x0, int axis) {
  return Eigen::Vector3d(x0.p(axis), x0.v(axis), x0.a(axis));
}

}  // namespace

MpcQp build_qp(const MpcConfig& cfg, const QuadState& x0, const std::vector<Vec3>& p_ref,
               const Corridor& corridor, const ObstacleConstraintSet& active) {
  cfg.validate();
  const int N = cfg.N;
  if (static_cast<int>(p_ref.size()) != N)
    throw ContractViolation("build_qp: p_ref must have N entries");
  if (active.per_step.size() != static_cast<size_t>(N))
    throw ContractViolation("build_qp: active set must cover N steps");
  if (corridor.polytopes.empty())
    throw ContractViolation("build_qp: corridor must contain at least one polytope");

  MpcQp out;
  const Lift lift = build_lift(N, cfg.dt);
  out.Gp = lift.Gp;
  out.Gv = lift.Gv;
  out.Ga = lift.Ga;
  out.Fp = lift.Fp;
  out.Fv = lift.Fv;
  out.Fa = lift.Fa;

  // Difference operator for the control-consistency term.
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(N - 1, N);
  for (int i = 0; i < N - 1; ++i) {
    D(i, i) = -1.0;
    D(i, i + 1) = 1.0;
  }

  // Per-axis Hessian/linear blocks, interleaved into the 3N decision vector
  // [u0x u0y u0z u1x ...]. Axis-aligned corridors keep everything separable.
  const int nv = 3 * N;
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nv, nv);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(nv);
  double offset = 0.0;

  out.step_polytopes = corridor.step_map.size() == static_cast<size_t>(N)
                           ? corridor.step_map
                           : corridor.assign_steps(p_ref);

  for (int axis = 0; axis < 3; ++axis) {
    Eigen::MatrixXd Hd = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd cd = Eigen::VectorXd::Zero(N);
    const Eigen::Vector3d x0a = axis_state(x0, axis);
    const Eigen::VectorXd fp = lift.Fp * x0a;  // free position response
    const Eigen::VectorXd fv = lift.Fv * x0a;
    const Eigen::VectorXd fa = lift.Fa * x0a;

    for (int n = 0; n < N; ++n) {
      const double w_track = cfg.r_p(axis);
      const double w_obs = cfg.r_o(axis);
      const int n_act = static_cast<int>(active.per_step[n].size());
      const double w_net = w_track - w_obs * n_act;
      const Eigen::RowVectorXd gp = lift.Gp.row(n);
      Hd += 2.0 * w_net * gp.transpose() * gp;

      const double track_err = fp(n) - p_ref[n](axis);
      cd += 2.0 * w_track * gp.transpose() * track_err;
      offset += w_track * track_err * track_err;
      for (const auto& [k, obs] : active.per_step[n]) {
        const double obs_err = fp(n) - obs(axis);
        cd -= 2.0 * w_obs * gp.transpose() * obs_err;
        offset -= w_obs * obs_err * obs_err;
        offset += cfg.d_dyn * cfg.d_dyn / 3.0;  // d_dyn^2 split across axes
      }
    }
    Hd += 2.0 * cfg.r_u(axis) * Eigen::MatrixXd::Identity(N, N);
    Hd += 2.0 * cfg.r_c(axis) * D.transpose() * D;
    const Eigen::RowVectorXd gvN = lift.Gv.row(N - 1);
    const Eigen::RowVectorXd gaN = lift.Ga.row(N - 1);
    Hd += 2.0 * cfg.r_vn(axis) * gvN.transpose() * gvN;
    Hd += 2.0 * cfg.r_an(axis) * gaN.transpose() * gaN;
    cd += 2.0 * cfg.r_vn(axis) * gvN.transpose() * fv(N - 1);
    cd += 2.0 * cfg.r_an(axis) * gaN.transpose() * fa(N - 1);
    offset += cfg.r_vn(axis) * fv(N - 1) * fv(N - 1);
    offset += cfg.r_an(axis) * fa(N - 1) * fa(N - 1);

    for (int i = 0; i < N; ++i) {
      c(3 * i + axis) = cd(i);
      for (int j = 0; j < N; ++j) H(3 * i + axis, 3 * j + axis) = Hd(i, j);
    }
  }
  out.cost_offset = offset;

  // Rows: velocity (3N), acceleration (3N), jerk (3N), corridor position (3N
  // for boxes, general halfspaces otherwise).
  bool all_boxes = true;
  for (int idx : out.step_polytopes)
    if (idx < 0 || corridor.polytopes[idx].A.rows() != 6) all_boxes = false;
  int pos_rows = 0;
  if (all_boxes) {
    pos_rows = 3 * N;
  } else {
    for (int n = 0; n < N; ++n)
      pos_rows += out.step_polytopes[n] >= 0
                      ? static_cast<int>(corridor.polytopes[out.step_polytopes[n]].A.rows())
                      : 0;
  }
  const int m = 9 * N + pos_rows;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, nv);
  Eigen::VectorXd lower(m), upper(m);

  int row = 0;
  for (int n = 0; n < N; ++n)
    for (int axis = 0; axis < 3; ++axis) {
      const Eigen::Vector3d x0a = axis_state(x0, axis);
      for (int j = 0; j < N; ++j) A(row, 3 * j + axis) = lift.Gv(n, j);
      const double free_v = lift.Fv.row(n).dot(x0a);
      lower(row) = -cfg.v_max(axis) - free_v;
      upper(row) = cfg.v_max(axis) - free_v;
      ++row;
    }
  for (int n = 0; n < N; ++n)
    for (int axis = 0; axis < 3; ++axis) {
      const Eigen::Vector3d x0a = axis_state(x0, axis);
      for (int j = 0; j < N; ++j) A(row, 3 * j + axis) = lift.Ga(n, j);
      const double free_a = lift.Fa.row(n).dot(x0a);
      lower(row) = cfg.a_lower(axis) - free_a;
      upper(row) = cfg.a_upper(axis) - free_a;
      ++row;
    }
  for (int n = 0; n < N; ++n)
    for (int axis = 0; axis < 3; ++axis) {
      A(row, 3 * n + axis) = 1.0;
      lower(row) = -cfg.j_max(axis);
      upper(row) = cfg.j_max(axis);
      ++row;
    }
  for (int n = 0; n < N; ++n) {
    const int poly_idx = out.step_polytopes[n];
    if (poly_idx < 0) continue;
    const Polytope& poly = corridor.polytopes[poly_idx];
    const Eigen::Vector3d fp(lift.Fp.row(n).dot(axis_state(x0, 0)),
                             lift.Fp.row(n).dot(axis_state(x0, 1)),
                             lift.Fp.row(n).dot(axis_state(x0, 2)));
    if (all_boxes) {
      for (int axis = 0; axis < 3; ++axis) {
        for (int j = 0; j < N; ++j) A(row, 3 * j + axis) = lift.Gp(n, j);
        lower(row) = poly.box_min(axis) - fp(axis);
        upper(row) = poly.box_max(axis) - fp(axis);
        ++row;
      }
    } else {
      for (int r = 0; r < poly.A.rows(); ++r) {
        for (int axis = 0; axis < 3; ++axis)
          for (int j = 0; j < N; ++j) A(row, 3 * j + axis) += poly.A(r, axis) * lift.Gp(n, j);
        lower(row) = -kInf;
        upper(row) = poly.b(r) - poly.A.row(r).dot(fp);
        ++row;
      }
    }
  }

  out.qp.H = std::move(H);
  out.qp.c = std::move(c);
  out.qp.A = std::move(A);
  out.qp.lower = std::move(lower);
  out.qp.upper = std::move(upper);
  return out;
}

namespace {

std::vector<QuadState> rollout(const QuadState& x0, const Eigen::VectorXd& U, int N,
                               double dt) {
  std::vector<QuadState> states;
  states.reserve(N + 1);
  states.push_back(x0);
  for (int n = 0; n < N; ++n) {
    ControlInput u;
    u.u = U.segment<3>(3 * n);
    states.push_back(discrete_model(states.back(), u, dt));
  }
  return states;
}

double base_cost(const MpcConfig& cfg, const std::vector<QuadState>& states,
                 const std::vector<Vec3>& p_ref, const Eigen::VectorXd& U) {
  const int N = cfg.N;
  double cost = 0.0;
  for (int n = 1; n <= N; ++n) {
    const Vec3 err = p_ref[n - 1] - states[n].p;
    cost += err.cwiseProduct(cfg.r_p).dot(err);
    const Vec3 u = U.segment<3>(3 * (n - 1));
    cost += u.cwiseProduct(cfg.r_u).dot(u);
  }
  for (int n = 0; n + 1 < N; ++n) {
    const Vec3 du = U.segment<3>(3 * (n + 1)) - U.segment<3>(3 * n);
    cost += du.cwiseProduct(cfg.r_c).dot(du);
  }
  cost += states[N].v.cwiseProduct(cfg.r_vn).dot(states[N].v);
  cost += states[N].a.cwiseProduct(cfg.r_an).dot(states[N].a);
  return cost;
}

}  // namespace

double eval_cost_reformulated(const MpcConfig& cfg, const QuadState& x0,
                              const std::vector<Vec3>& p_ref,
                              const ObstacleConstraintSet& active,
                              const Eigen::VectorXd& U) {
  const auto states = rollout(x0, U, cfg.N, cfg.dt);
  double cost = base_cost(cfg, states, p_ref, U);
  for (int n = 1; n <= cfg.N; ++n)
    for (const auto& [k, obs] : active.per_step[n - 1]) {
      const Vec3 d = states[n].p - obs;
      cost += cfg.d_dyn * cfg.d_dyn - d.cwiseProduct(cfg.r_o).dot(d);
    }
  return cost;
}

double eval_cost_maxform(const MpcConfig& cfg, const QuadState& x0,
                         const std::vector<Vec3>& p_ref,
                         const ObstacleConstraintSet& active, const Eigen::VectorXd& U) {
  const auto states = rollout(x0, U, cfg.N, cfg.dt);
  double cost = base_cost(cfg, states, p_ref, U);
  for (int n = 1; n <= cfg.N; ++n)
    for (const auto& [k, obs] : active.per_step[n - 1]) {
      const Vec3 d = states[n].p - obs;
      cost += std::max(cfg.d_dyn * cfg.d_dyn - d.cwiseProduct(cfg.r_o).dot(d), 0.0);
    }
  return cost;
}

MpcController::MpcController(const MpcConfig& cfg, const QpSettings& solver_settings)
    : cfg_(cfg), solver_settings_(solver_settings) {
  cfg_.validate();
}

ControlInput braking_command(const QuadState& x0, const MpcConfig& cfg) {
  ControlInput cmd;
  for (int axis = 0; axis < 3; ++axis) {
    double a_target = std::clamp(-x0.v(axis) / cfg.brake_dt, cfg.a_lower(axis),
                                 cfg.a_upper(axis));
    const double u = (a_target - x0.a(axis)) / cfg.dt;
    cmd.u(axis) = std::clamp(u, -cfg.j_max(axis), cfg.j_max(axis));
  }
  return cmd;
}

bool MpcController::previous_rollout_clear(const DualLayerMap& map) const {
  if (!prev_) return false;
  for (size_t i = static_cast<size_t>(prev_shift_); i < prev_->states.size(); ++i) {
    const CellState s = map.query(prev_->states[i].p);
    if (s == CellState::Occupied) return false;
  }
  return true;
}

ControlInput MpcController::fallback(FallbackKind kind, const QuadState& x0,
                                     const DualLayerMap* map) {
  (void)kind;
  if (prev_ && prev_shift_ + 1 < static_cast<int>(prev_->inputs.size()) && map &&
      previous_rollout_clear(*map)) {
    ++prev_shift_;
    ControlInput cmd = prev_->inputs[static_cast<size_t>(prev_shift_)];
    for (int axis = 0; axis < 3; ++axis)
      cmd.u(axis) = std::clamp(cmd.u(axis), -cfg_.j_max(axis), cfg_.j_max(axis));
    return cmd;
  }
  return braking_command(x0, cfg_);
}

MpcStepResult MpcController::step(const QuadState& x0, const std::vector<Vec3>& p_ref,
                                  const Corridor& corridor,
                                  const std::vector<const Track*>& tracks, double now,
                                  const DualLayerMap* map_for_fallback) {
  const auto wall0 = std::chrono::steady_clock::now();
  MpcStepResult result;

  const ObstacleConstraintSet active =
      select_active_obstacles(tracks, p_ref, now, cfg_, cfg_.horizon());
  MpcQp built = build_qp(cfg_, x0, p_ref, corridor, active);

  // The constraint matrix layout is constant across ticks for box corridors,
  // so the cached A'A survives; a structural change forces a fresh setup.
  const bool same_structure = solver_ready_ &&
                              solver_.problem().num_rows() == built.qp.num_rows() &&
                              solver_.problem().num_vars() == built.qp.num_vars() &&
                              (solver_.problem().A - built.qp.A).cwiseAbs().maxCoeff() == 0.0;
  if (!same_structure) {
    solver_.setup(built.qp, solver_settings_);
    solver_ready_ = true;
  } else {
    solver_.update_cost(built.qp.H, built.qp.c);
    solver_.update_bounds(built.qp.lower, built.qp.upper);
  }

  std::optional<QpWarmStart> warm;
  if (prev_ && prev_->raw_u.size() == built.qp.c.size()) {
    QpWarmStart w;
    // Shift the previous plan by one step, repeating the terminal input.
    w.x = prev_->raw_u;
    const int N = cfg_.N;
    w.x.head(3 * (N - 1)) = prev_->raw_u.tail(3 * (N - 1));
    w.x.tail(3) = prev_->raw_u.tail(3);
    if (prev_->dual.size() == built.qp.lower.size()) w.y = prev_->dual;
    warm = std::move(w);
  }

  const QpResult qp_result = solver_.solve(warm);

  MpcSolution sol;
  sol.raw_u = qp_result.x;
  sol.dual = qp_result.y;
  sol.iterations = qp_result.iterations;
  sol.objective = qp_result.objective + built.cost_offset;
  switch (qp_result.status) {
    case QpStatus::Optimal:
      sol.status = MpcStatus::Optimal;
      break;
    case QpStatus::MaxIter:
      sol.status = MpcStatus::MaxIter;
      break;
    case QpStatus::Infeasible:
      sol.status = MpcStatus::Infeasible;
      break;
  }

  if (sol.status != MpcStatus::Infeasible) {
    sol.states = rollout(x0, qp_result.x, cfg_.N, cfg_.dt);
    sol.inputs.resize(cfg_.N);
    for (int n = 0; n < cfg_.N; ++n) sol.inputs[n].u = qp_result.x.segment<3>(3 * n);
    result.command = sol.inputs.front();
    prev_ = sol;
    prev_shift_ = 0;
  } else {
    result.used_fallback = true;
    result.fallback_kind = FallbackKind::Infeasible;
    result.command = fallback(FallbackKind::Infeasible, x0, map_for_fallback);
  }

  sol.solve_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - wall0)
          .count();
  result.solution = std::move(sol);
  return result;
}

}  // namespace dynavoid
