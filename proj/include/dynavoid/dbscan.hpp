#pragma once

#include <vector>

#include "dynavoid/types.hpp"

namespace dynavoid {

/// Density-based clustering of 3D points.
///
/// Core points (>= min_pts neighbours within eps, self included) are grouped
/// into maximal density-connected components; border points join the cluster
/// of their nearest core point; everything else is noise. Border ties are
/// broken by lexicographic core coordinates so the result is invariant under
/// permutation of the input.
///
/// Returns index sets into `points`, ordered by each cluster's
/// lexicographically smallest member point.
std::vector<std::vector<int>> cluster_dynamic(const std::vector<Vec3>& points,
                                              double eps, int min_pts);

}  // namespace dynavoid
