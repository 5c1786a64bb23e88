#pragma once

#include <optional>
#include <vector>

#include "dynavoid/grid_map.hpp"
#include "dynavoid/types.hpp"

namespace dynavoid {

struct PlannerConfig {
  double expansion_bound{5.0};   // m a corridor face may grow beyond its seed
  double v_ref{4.0};             // m/s reference progression speed
  bool unknown_passable{true};   // whether unexplored cells count as free
  double los_step{0.5};          // line-of-sight sample step, fraction of resolution
  int max_polytopes{16};
  int max_expansions{150000};    // A* node budget
};

struct ReferencePath {
  std::vector<Vec3i> cells;     // 26-connected grid path, start..goal
  std::vector<Vec3> waypoints;  // pruned world-frame polyline
  double t_created{0.0};
  double cost{0.0};             // m, grid-path cost
  bool reached_goal{true};      // false: best-effort progress toward the goal
};

enum class SearchStatus { Ok, NoPath };

struct SearchResult {
  SearchStatus status{SearchStatus::NoPath};
  ReferencePath path;
};

/// Cell passability under the dual-layer query and the unknown-cell policy.
bool passable(const DualLayerMap& map, const Vec3i& g, const PlannerConfig& cfg);

/// Dynamic-aware A* over the 26-connected grid with Euclidean edge costs and
/// heuristic. A goal outside the window is projected onto the window boundary
/// along the start-goal segment; an unreachable goal yields the best-effort
/// path to the expanded cell closest to it, or NoPath when no progress exists.
SearchResult search_path(const DualLayerMap& map, const Vec3& start, const Vec3& goal,
                         const PlannerConfig& cfg);

/// Greedy line-of-sight shortcutting of a grid path; keeps endpoints.
std::vector<Vec3> prune_path(const std::vector<Vec3i>& cells, const DualLayerMap& map,
                             const PlannerConfig& cfg);

/// Arc-length positions along the waypoint polyline at speed v_ref, starting
/// from the point of the polyline closest to `robot`; clamps at the end.
std::vector<Vec3> sample_reference(const std::vector<Vec3>& waypoints, const Vec3& robot,
                                   double v_ref, int n_steps, double dt);

struct Polytope {
  Eigen::Matrix<double, Eigen::Dynamic, 3> A;
  Eigen::VectorXd b;
  Vec3 box_min{Vec3::Zero()};
  Vec3 box_max{Vec3::Zero()};

  bool contains(const Vec3& p, double tol = 1e-9) const;
  double margin(const Vec3& p) const;  // min over rows of b - A p
};

struct Corridor {
  std::vector<Polytope> polytopes;
  std::vector<int> step_map;  // horizon step -> polytope index, from creation refs

  /// First polytope containing p, else the one with maximum margin.
  int assign(const Vec3& p) const;
  std::vector<int> assign_steps(const std::vector<Vec3>& refs) const;
  bool any_contains(const Vec3& p) const;
};

enum class CorridorStatus { Ok, Failure };

struct CorridorResult {
  CorridorStatus status{CorridorStatus::Failure};
  Corridor corridor;
};

/// Grows one axis-aligned box per polyline segment (starting at the segment
/// nearest the robot) against the raw static layer only, shrinks faces by
/// d_rad without giving up the seed segment, and maps reference steps to the
/// first polytope containing them.
CorridorResult generate_sfc(const DualLayerMap& map, const std::vector<Vec3>& waypoints,
                            const Vec3& robot, const PlannerConfig& cfg,
                            const std::vector<Vec3>* refs_for_step_map = nullptr,
                            double needed_reach = -1.0);

/// True when any sub-resolution sample of the waypoint polyline is no longer
/// passable, i.e. the pre-planned path now collides in either layer.
bool replan_check(const std::vector<Vec3>& waypoints, const DualLayerMap& map,
                  const PlannerConfig& cfg);

}  // namespace dynavoid
