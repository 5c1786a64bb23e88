#pragma once

#include <Eigen/Dense>
#include <vector>

namespace dynavoid {

/// Exact minimum-cost assignment for a square cost matrix (Kuhn-Munkres with
/// potentials, O(n^3)). Returns col index assigned to each row.
std::vector<int> hungarian_min_cost(const Eigen::MatrixXd& cost);

/// Rectangular variant: pads to square with `pad_cost` and reports -1 for
/// rows left unassigned (more rows than columns).
std::vector<int> hungarian_min_cost_rect(const Eigen::MatrixXd& cost, double pad_cost);

}  // namespace dynavoid
