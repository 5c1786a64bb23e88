#pragma once

#include <optional>
#include <vector>

#include "dynavoid/perception.hpp"
#include "dynavoid/planner.hpp"
#include "dynavoid/qp_solver.hpp"
#include "dynavoid/types.hpp"

namespace dynavoid {

struct MpcConfig {
  double dt{0.1};
  int N{15};
  Vec3 r_p{200.0, 200.0, 200.0};
  Vec3 r_u{0.0, 0.0, 0.0};
  Vec3 r_c{0.0, 0.0, 0.0};
  Vec3 r_vn{30.0, 30.0, 30.0};
  Vec3 r_an{30.0, 30.0, 30.0};
  Vec3 r_o{20.0, 20.0, 20.0};
  Vec3 v_max{4.0, 4.0, 4.0};
  Vec3 j_max{20.0, 20.0, 20.0};
  double a_max_xy{2.0 * 9.81};
  double a_z_min{-9.81};
  double a_z_max{2.0 * 9.81};
  double d_dyn{0.8};
  double g{9.81};
  int k_cap{9};              // max active obstacles per step, PSD guard
  double brake_dt{0.3};      // fallback braking time constant

  double horizon() const { return N * dt; }
  void validate() const;    // throws ConfigError (incl. R_p - k_cap*R_o PSD check)

  double a_upper(int axis) const { return axis == 2 ? a_z_max : a_max_xy; }
  double a_lower(int axis) const { return axis == 2 ? a_z_min : -a_max_xy; }
};

/// Exact zero-order-hold triple integrator in jerk.
QuadState discrete_model(const QuadState& x, const ControlInput& u, double dt);

/// Active dynamic-obstacle terms: for each horizon step (index 0 = step 1),
/// the (track index, predicted position) pairs whose distance to the step's
/// reference position is below d_dyn, capped at k_cap nearest.
struct ObstacleConstraintSet {
  std::vector<std::vector<std::pair<int, Vec3>>> per_step;

  int total() const {
    int t = 0;
    for (const auto& v : per_step) t += static_cast<int>(v.size());
    return t;
  }
};

ObstacleConstraintSet select_active_obstacles(const std::vector<const Track*>& tracks,
                                              const std::vector<Vec3>& p_ref, double now,
                                              const MpcConfig& cfg,
                                              double prediction_horizon);

enum class MpcStatus { Optimal, MaxIter, Infeasible };

struct MpcSolution {
  std::vector<ControlInput> inputs;    // N jerk vectors
  std::vector<QuadState> states;       // N+1 rollout incl. x0
  MpcStatus status{MpcStatus::Infeasible};
  double solve_time_ms{0.0};
  double objective{0.0};
  int iterations{0};
  Eigen::VectorXd raw_u;               // stacked decision vector (3N)
  Eigen::VectorXd dual;                // row multipliers for warm starting
};

/// The assembled QP plus the affine maps used to build it (exposed so cost
/// and feasibility checks can evaluate states as functions of U).
struct MpcQp {
  QpProblem qp;
  Eigen::MatrixXd Gp, Gv, Ga;   // N x N per-axis input maps (shared by axes)
  Eigen::Matrix<double, Eigen::Dynamic, 3> Fp, Fv, Fa;  // N x 3 free response
  double cost_offset{0.0};      // constant dropped from the quadratic form
  std::vector<int> step_polytopes;  // polytope index per step
};

MpcQp build_qp(const MpcConfig& cfg, const QuadState& x0, const std::vector<Vec3>& p_ref,
               const Corridor& corridor, const ObstacleConstraintSet& active);

/// Reformulated quadratic cost (activation fixed, max dropped) at U,
/// including the constant terms; equals 0.5 U'HU + c'U + cost_offset.
double eval_cost_reformulated(const MpcConfig& cfg, const QuadState& x0,
                              const std::vector<Vec3>& p_ref,
                              const ObstacleConstraintSet& active,
                              const Eigen::VectorXd& U);

/// Original max-form cost at U: obstacle terms contribute
/// max(d_dyn^2 - |p - p_obs|^2_{R_o}, 0) over the active set.
double eval_cost_maxform(const MpcConfig& cfg, const QuadState& x0,
                         const std::vector<Vec3>& p_ref,
                         const ObstacleConstraintSet& active,
                         const Eigen::VectorXd& U);

enum class FallbackKind { Infeasible, NoPath, CorridorFailure };

struct MpcStepResult {
  ControlInput command;
  MpcSolution solution;
  bool used_fallback{false};
  FallbackKind fallback_kind{FallbackKind::Infeasible};
};

/// Receding-horizon controller: caches the constraint structure (constant for
/// axis-aligned corridors), warm-starts each solve from the previous solution
/// shifted by one step, and falls back to the previous plan or a braking jerk
/// when the solver fails.
class MpcController {
 public:
  MpcController(const MpcConfig& cfg, const QpSettings& solver_settings);

  MpcStepResult step(const QuadState& x0, const std::vector<Vec3>& p_ref,
                     const Corridor& corridor, const std::vector<const Track*>& tracks,
                     double now, const DualLayerMap* map_for_fallback = nullptr);

  /// Fallback policy: replay the previous plan if its remaining rollout stays
  /// collision-free on the given map, else a bounded braking jerk.
  ControlInput fallback(FallbackKind kind, const QuadState& x0,
                        const DualLayerMap* map = nullptr);

  const MpcConfig& config() const { return cfg_; }
  const std::optional<MpcSolution>& previous_solution() const { return prev_; }
  void reset() { prev_.reset(); prev_shift_ = 0; }

 private:
  bool previous_rollout_clear(const DualLayerMap& map) const;

  MpcConfig cfg_;
  QpSettings solver_settings_;
  QpSolver solver_;
  bool solver_ready_{false};
  std::optional<MpcSolution> prev_;
  int prev_shift_{0};
};

/// Braking command: drives acceleration toward -v/brake_dt, saturated at the
/// jerk limit and respecting the acceleration bounds.
ControlInput braking_command(const QuadState& x0, const MpcConfig& cfg);

}  // namespace dynavoid
