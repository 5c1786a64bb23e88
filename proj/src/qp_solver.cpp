#include "dynavoid/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace dynavoid {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Eigen::VectorXd& v) {
  return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
}
}  // namespace

void QpSolver::setup(const QpProblem& problem, const QpSettings& settings) {
  if (problem.H.rows() != problem.H.cols() || problem.H.rows() != problem.c.size())
    throw ContractViolation("QpSolver: inconsistent H/c dimensions");
  if (problem.A.rows() != problem.lower.size() || problem.A.rows() != problem.upper.size())
    throw ContractViolation("QpSolver: inconsistent A/bounds dimensions");
  if (problem.A.rows() > 0 && problem.A.cols() != problem.H.rows())
    throw ContractViolation("QpSolver: inconsistent A columns");
  prob_ = problem;
  settings_ = settings;
  rho_ = settings.rho0;
  if (prob_.num_rows() > 0)
    ata_ = prob_.A.transpose() * prob_.A;
  else
    ata_ = Eigen::MatrixXd::Zero(prob_.num_vars(), prob_.num_vars());
  factored_ = false;
}

void QpSolver::update_cost(const Eigen::MatrixXd& H, const Eigen::VectorXd& c) {
  if (H.rows() != prob_.H.rows() || c.size() != prob_.c.size())
    throw ContractViolation("QpSolver::update_cost: dimension change requires setup()");
  prob_.H = H;
  prob_.c = c;
  factored_ = false;
}

void QpSolver::update_bounds(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  if (lower.size() != prob_.lower.size() || upper.size() != prob_.upper.size())
    throw ContractViolation("QpSolver::update_bounds: dimension change requires setup()");
  prob_.lower = lower;
  prob_.upper = upper;
}

void QpSolver::factorize() {
  const int n = prob_.num_vars();
  Eigen::MatrixXd W = prob_.H + settings_.sigma * Eigen::MatrixXd::Identity(n, n);
  if (prob_.num_rows() > 0) W += rho_ * ata_;
  kkt_.compute(W);
  if (kkt_.info() != Eigen::Success)
    throw ContractViolation("QpSolver: reduced KKT factorization failed (H not PSD?)");
  factored_ = true;
}

void QpSolver::compute_residuals(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& z, double& r_prim,
                                 double& r_dual) const {
  if (prob_.num_rows() > 0)
    r_prim = inf_norm(prob_.A * x - z);
  else
    r_prim = 0.0;
  Eigen::VectorXd grad = prob_.H * x + prob_.c;
  if (prob_.num_rows() > 0) grad += prob_.A.transpose() * y;
  r_dual = inf_norm(grad);
}

QpResult QpSolver::solve(const std::optional<QpWarmStart>& warm) {
  const int n = prob_.num_vars();
  const int m = prob_.num_rows();
  QpResult result;

  if (!factored_) factorize();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (warm) {
    if (warm->x.size() == n) x = warm->x;
    if (warm->y.size() == m) y = warm->y;
  }
  Eigen::VectorXd z =
      m > 0 ? (prob_.A * x).cwiseMax(prob_.lower).cwiseMin(prob_.upper) : Eigen::VectorXd();

  if (m == 0) {
    // Unconstrained: direct solve with iterative refinement.
    Eigen::VectorXd sol = kkt_.solve(-prob_.c);
    for (int i = 0; i < 3; ++i) sol += kkt_.solve(-prob_.c - prob_.H * sol);
    result.x = sol;
    result.y = Eigen::VectorXd();
    result.status = QpStatus::Optimal;
    compute_residuals(result.x, result.y, z, result.primal_residual, result.dual_residual);
    result.objective = 0.5 * result.x.dot(prob_.H * result.x) + prob_.c.dot(result.x);
    return result;
  }

  double best_score = kInf;
  Eigen::VectorXd best_x = x, best_y = y;
  const double alpha = settings_.alpha;
  Eigen::VectorXd y_prev = y;

  int iter = 0;
  while (iter < settings_.max_iter) {
    ++iter;
    // x-update (reduced form), then over-relaxed z/y updates.
    const Eigen::VectorXd rhs =
        settings_.sigma * x - prob_.c + prob_.A.transpose() * (rho_ * z - y);
    const Eigen::VectorXd x_tilde = kkt_.solve(rhs);
    const Eigen::VectorXd z_tilde = prob_.A * x_tilde;

    x = alpha * x_tilde + (1.0 - alpha) * x;
    const Eigen::VectorXd z_relaxed = alpha * z_tilde + (1.0 - alpha) * z;
    y_prev = y;
    const Eigen::VectorXd v = z_relaxed + y / rho_;
    z = v.cwiseMax(prob_.lower).cwiseMin(prob_.upper);
    y = rho_ * (v - z);

    if (iter % settings_.check_interval != 0 && iter != settings_.max_iter) continue;

    double r_prim, r_dual;
    compute_residuals(x, y, z, r_prim, r_dual);
    const double score = std::max(r_prim, r_dual);
    if (score < best_score) {
      best_score = score;
      best_x = x;
      best_y = y;
    }
    if (r_prim <= settings_.eps && r_dual <= settings_.eps) {
      result.status = QpStatus::Optimal;
      break;
    }

    // Primal infeasibility certificate from the latest dual step.
    const Eigen::VectorXd dy = y - y_prev;
    const double dy_norm = inf_norm(dy);
    if (dy_norm > 1e-12) {
      bool cert = inf_norm(prob_.A.transpose() * dy) <= settings_.eps_pinf * dy_norm;
      double support = 0.0;
      for (int i = 0; i < m && cert; ++i) {
        const double up = std::max(dy(i), 0.0);
        const double dn = std::min(dy(i), 0.0);
        if (up > settings_.eps_pinf * dy_norm && prob_.upper(i) == kInf) cert = false;
        if (dn < -settings_.eps_pinf * dy_norm && prob_.lower(i) == -kInf) cert = false;
        if (cert) {
          if (up > 0 && prob_.upper(i) != kInf) support += prob_.upper(i) * up;
          if (dn < 0 && prob_.lower(i) != -kInf) support += prob_.lower(i) * dn;
        }
      }
      if (cert && support <= -settings_.eps_pinf * dy_norm) {
        result.status = QpStatus::Infeasible;
        result.x = x;
        result.y = dy / dy_norm;  // infeasibility certificate direction
        result.iterations = iter;
        compute_residuals(x, y, z, result.primal_residual, result.dual_residual);
        result.objective = 0.5 * x.dot(prob_.H * x) + prob_.c.dot(x);
        return result;
      }
    }

    if (settings_.adaptive_rho && iter % (settings_.check_interval * 5) == 0) {
      const double prim_scale =
          std::max({inf_norm(prob_.A * x), inf_norm(z), 1e-10});
      const double dual_scale = std::max(
          {inf_norm(prob_.H * x), inf_norm(prob_.A.transpose() * y), inf_norm(prob_.c), 1e-10});
      const double ratio = std::sqrt((r_prim / prim_scale) / std::max(r_dual / dual_scale, 1e-16));
      if (std::isfinite(ratio) && (ratio > 5.0 || ratio < 0.2)) {
        rho_ = std::clamp(rho_ * ratio, 1e-6, 1e6);
        factorize();
      }
    }
  }

  if (result.status != QpStatus::Optimal) {
    result.status = QpStatus::MaxIter;
    x = best_x;
    y = best_y;
  }
  result.x = x;
  result.y = y;
  result.iterations = iter;
  compute_residuals(x, y, m > 0 ? (prob_.A * x).cwiseMax(prob_.lower).cwiseMin(prob_.upper)
                                : Eigen::VectorXd(),
                    result.primal_residual, result.dual_residual);
  if (settings_.polish && result.status == QpStatus::Optimal) {
    QpResult polished = result;
    if (polish(polished)) result = polished;
  }
  result.objective = 0.5 * result.x.dot(prob_.H * result.x) + prob_.c.dot(result.x);
  return result;
}

bool QpSolver::polish(QpResult& result) const {
  const int n = prob_.num_vars();
  const int m = prob_.num_rows();
  const Eigen::VectorXd ax = prob_.A * result.x;

  std::vector<int> active;
  std::vector<double> active_bound;
  std::vector<int> active_sign;
  for (int i = 0; i < m; ++i) {
    if (result.y(i) > 1e-10 && prob_.upper(i) != kInf) {
      active.push_back(i);
      active_bound.push_back(prob_.upper(i));
      active_sign.push_back(+1);
    } else if (result.y(i) < -1e-10 && prob_.lower(i) != -kInf) {
      active.push_back(i);
      active_bound.push_back(prob_.lower(i));
      active_sign.push_back(-1);
    }
  }
  const int na = static_cast<int>(active.size());

  // Equality-constrained KKT solve on the guessed active set, with
  // regularization + iterative refinement (same scheme as OSQP's polish).
  const double delta = 1e-9;
  Eigen::MatrixXd K(n + na, n + na);
  K.setZero();
  K.topLeftCorner(n, n) = prob_.H + delta * Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd Aact(na, n);
  for (int r = 0; r < na; ++r) Aact.row(r) = prob_.A.row(active[r]);
  if (na > 0) {
    K.topRightCorner(n, na) = Aact.transpose();
    K.bottomLeftCorner(na, n) = Aact;
    K.bottomRightCorner(na, na) = -delta * Eigen::MatrixXd::Identity(na, na);
  }
  Eigen::VectorXd rhs(n + na);
  rhs.head(n) = -prob_.c;
  for (int r = 0; r < na; ++r) rhs(n + r) = active_bound[r];

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  Eigen::VectorXd sol = lu.solve(rhs);
  for (int pass = 0; pass < 3; ++pass) {
    // Refine against the unregularized KKT system.
    Eigen::VectorXd resid(n + na);
    resid.head(n) = -prob_.c - prob_.H * sol.head(n);
    if (na > 0) {
      resid.head(n) -= Aact.transpose() * sol.tail(na);
      for (int r = 0; r < na; ++r) resid(n + r) = active_bound[r] - Aact.row(r).dot(sol.head(n));
    }
    sol += lu.solve(resid);
  }

  Eigen::VectorXd x_pol = sol.head(n);
  Eigen::VectorXd y_pol = Eigen::VectorXd::Zero(m);
  for (int r = 0; r < na; ++r) y_pol(active[r]) = sol(n + r);

  // Reject a polish that breaks multiplier signs or feasibility/optimality.
  for (int r = 0; r < na; ++r) {
    if (active_sign[r] > 0 && y_pol(active[r]) < -1e-9) return false;
    if (active_sign[r] < 0 && y_pol(active[r]) > 1e-9) return false;
  }
  const Eigen::VectorXd ax_pol = prob_.A * x_pol;
  const Eigen::VectorXd z_pol = ax_pol.cwiseMax(prob_.lower).cwiseMin(prob_.upper);
  double r_prim, r_dual;
  compute_residuals(x_pol, y_pol, z_pol, r_prim, r_dual);
  if (std::max(r_prim, r_dual) >
      std::max({result.primal_residual, result.dual_residual, 1e-12}))
    return false;

  result.x = x_pol;
  result.y = y_pol;
  result.primal_residual = r_prim;
  result.dual_residual = r_dual;
  result.polished = true;
  return true;
}

QpResult solve_qp(const QpProblem& problem, const QpSettings& settings,
                  const std::optional<QpWarmStart>& warm) {
  QpSolver solver;
  solver.setup(problem, settings);
  return solver.solve(warm);
}

}  // namespace dynavoid
