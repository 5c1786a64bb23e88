#include "dynavoid/hungarian.hpp"

#include <limits>

#include "dynavoid/types.hpp"

namespace dynavoid {

std::vector<int> hungarian_min_cost(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw ContractViolation("hungarian_min_cost: matrix must be square");
  if (n == 0) return {};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-indexed potentials; p[j] = row matched to column j (0 = none).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);

  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

std::vector<int> hungarian_min_cost_rect(const Eigen::MatrixXd& cost, double pad_cost) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  const int n = std::max(rows, cols);
  Eigen::MatrixXd square = Eigen::MatrixXd::Constant(n, n, pad_cost);
  square.topLeftCorner(rows, cols) = cost;
  std::vector<int> assign = hungarian_min_cost(square);
  std::vector<int> out(rows, -1);
  for (int i = 0; i < rows; ++i)
    if (assign[i] < cols) out[i] = assign[i];
  return out;
}

}  // namespace dynavoid
