#pragma once

#include <Eigen/Dense>
#include <optional>

#include "dynavoid/types.hpp"

namespace dynavoid {

/// min 0.5 x'Hx + c'x  s.t.  lower <= A x <= upper  (one-sided rows use +-inf)
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd c;
  Eigen::MatrixXd A;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  int num_vars() const { return static_cast<int>(H.rows()); }
  int num_rows() const { return static_cast<int>(A.rows()); }
};

struct QpSettings {
  double eps{1e-4};          // absolute primal/dual residual tolerance (inf-norm)
  int max_iter{4000};
  double alpha{1.6};         // over-relaxation
  double rho0{0.1};
  double sigma{1e-6};
  bool adaptive_rho{true};
  bool polish{true};
  int check_interval{10};
  double eps_pinf{1e-5};     // primal infeasibility certificate tolerance
};

enum class QpStatus { Optimal, MaxIter, Infeasible };

struct QpResult {
  Eigen::VectorXd x;
  Eigen::VectorXd y;   // row multipliers (>0 upper active, <0 lower active)
  QpStatus status{QpStatus::MaxIter};
  int iterations{0};
  double primal_residual{0.0};
  double dual_residual{0.0};
  double objective{0.0};
  bool polished{false};
};

struct QpWarmStart {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

/// Operator-splitting (ADMM) QP solver with over-relaxation, adaptive rho,
/// optional active-set polishing and warm starting. Deterministic for
/// identical inputs and warm starts.
class QpSolver {
 public:
  QpSolver() = default;

  /// Full setup: caches A'A and the reduced KKT factorization.
  void setup(const QpProblem& problem, const QpSettings& settings);

  /// Replaces cost and bounds while keeping A (and A'A) cached.
  void update_cost(const Eigen::MatrixXd& H, const Eigen::VectorXd& c);
  void update_bounds(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

  QpResult solve(const std::optional<QpWarmStart>& warm = std::nullopt);

  const QpProblem& problem() const { return prob_; }

 private:
  void factorize();
  void compute_residuals(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& z, double& r_prim, double& r_dual) const;
  bool polish(QpResult& result) const;

  QpProblem prob_;
  QpSettings settings_;
  Eigen::MatrixXd ata_;
  Eigen::LDLT<Eigen::MatrixXd> kkt_;
  double rho_{0.1};
  bool factored_{false};
};

/// One-shot convenience wrapper.
QpResult solve_qp(const QpProblem& problem, const QpSettings& settings = {},
                  const std::optional<QpWarmStart>& warm = std::nullopt);

}  // namespace dynavoid
