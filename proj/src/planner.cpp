#include "dynavoid/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <unordered_map>

namespace dynavoid {

bool passable(const DualLayerMap& map, const Vec3i& g, const PlannerConfig& cfg) {
  const CellState s = map.query(g);
  if (s == CellState::Occupied) return false;
  if (s == CellState::Unknown && !cfg.unknown_passable) return false;
  return true;
}

namespace {

struct OpenNode {
  double f;
  double g;
  int64_t key;
  bool operator<(const OpenNode& o) const {
    if (f != o.f) return f > o.f;  // min-heap
    return g < o.g;                // prefer larger g on ties (deeper nodes)
  }
};

struct NodeInfo {
  double g{std::numeric_limits<double>::infinity()};
  int64_t parent{-1};
  bool closed{false};
};

// Clip the start->goal segment to the map window (shrunk one cell) and return
// the in-window point nearest the goal.
Vec3 project_goal(const DualLayerMap& map, const Vec3& start, const Vec3& goal) {
  const double res = map.config().resolution;
  const Vec3 lo = (map.center_cell() - map.config().half_size).cast<double>() * res +
                  Vec3::Constant(0.5 * res);
  const Vec3 hi = (map.center_cell() + map.config().half_size).cast<double>() * res +
                  Vec3::Constant(0.5 * res);
  Vec3 dir = goal - start;
  double t_max = 1.0;
  for (int d = 0; d < 3; ++d) {
    if (std::abs(dir(d)) < 1e-12) continue;
    const double t1 = (lo(d) - start(d)) / dir(d);
    const double t2 = (hi(d) - start(d)) / dir(d);
    t_max = std::min(t_max, std::max(t1, t2));
  }
  t_max = std::clamp(t_max, 0.0, 1.0);
  return start + t_max * dir;
}

// Nearest passable cell by breadth-first search over the 26-neighbourhood.
std::optional<Vec3i> nearest_passable(const DualLayerMap& map, const Vec3i& from,
                                      const PlannerConfig& cfg, int max_radius) {
  if (passable(map, from, cfg) && map.in_bounds(from)) return from;
  std::queue<Vec3i> q;
  std::unordered_set<int64_t> seen;
  q.push(from);
  seen.insert(pack_cell(from));
  while (!q.empty()) {
    const Vec3i cur = q.front();
    q.pop();
    if ((cur - from).cwiseAbs().maxCoeff() > max_radius) continue;
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const Vec3i nb = cur + Vec3i(dx, dy, dz);
          if (!map.in_bounds(nb)) continue;
          if (!seen.insert(pack_cell(nb)).second) continue;
          if (passable(map, nb, cfg)) return nb;
          q.push(nb);
        }
  }
  return std::nullopt;
}

}  // namespace

SearchResult search_path(const DualLayerMap& map, const Vec3& start, const Vec3& goal,
                         const PlannerConfig& cfg) {
  SearchResult result;
  const double res = map.config().resolution;

  Vec3i start_cell = map.world_to_grid(start);
  if (!map.in_bounds(start_cell)) return result;
  if (!passable(map, start_cell, cfg)) {
    // The robot can drift into freshly stamped or inflated cells; rescue from
    // the nearest passable cell instead of giving up outright.
    const auto rescued = nearest_passable(map, start_cell, cfg, 5);
    if (!rescued) return result;
    start_cell = *rescued;
  }

  const Vec3 goal_in = project_goal(map, start, goal);
  Vec3i goal_cell = map.world_to_grid(goal_in);
  if (!passable(map, goal_cell, cfg)) {
    const auto moved = nearest_passable(map, goal_cell, cfg, 10);
    if (moved) goal_cell = *moved;
  }
  const bool goal_reachable_cell = passable(map, goal_cell, cfg);

  auto heuristic = [&](const Vec3i& g) {
    return (g - goal_cell).cast<double>().norm() * res;
  };

  std::unordered_map<int64_t, NodeInfo> nodes;
  std::priority_queue<OpenNode> open;
  const int64_t start_key = pack_cell(start_cell);
  nodes[start_key].g = 0.0;
  open.push({heuristic(start_cell), 0.0, start_key});

  int64_t best_key = start_key;
  double best_h = heuristic(start_cell);
  bool found = false;
  int expansions = 0;

  while (!open.empty() && expansions < cfg.max_expansions) {
    const OpenNode top = open.top();
    open.pop();
    auto& info = nodes[top.key];
    if (info.closed || top.g > info.g + 1e-12) continue;
    info.closed = true;
    ++expansions;

    const Vec3i cur = unpack_cell(top.key);
    const double h = heuristic(cur);
    if (h < best_h - 1e-12) {
      best_h = h;
      best_key = top.key;
    }
    if (cur == goal_cell) {
      found = true;
      break;
    }
    if (!goal_reachable_cell && h < res * 0.9) {
      // Adjacent to an impassable goal cell: closest achievable.
      found = false;
      best_key = top.key;
      best_h = h;
      break;
    }

    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const Vec3i nb = cur + Vec3i(dx, dy, dz);
          if (!map.in_bounds(nb) || !passable(map, nb, cfg)) continue;
          const double step = res * std::sqrt(double(dx * dx + dy * dy + dz * dz));
          const double ng = top.g + step;
          const int64_t nb_key = pack_cell(nb);
          auto& ni = nodes[nb_key];
          if (ng < ni.g - 1e-12) {
            ni.g = ng;
            ni.parent = top.key;
            open.push({ng + heuristic(nb), ng, nb_key});
          }
        }
  }

  const bool exhausted = open.empty() && expansions < cfg.max_expansions;
  if (!found && goal_reachable_cell && exhausted) {
    // The goal cell is passable but walled off from the start: no path.
    return result;
  }
  const int64_t end_key = found ? pack_cell(goal_cell) : best_key;
  if (!found) {
    // Best-effort progress toward an unreachable/unknown goal region; give up
    // only when the search made no progress at all.
    const double start_h = heuristic(start_cell);
    if (best_h > start_h - res * 0.5 || end_key == start_key) return result;
  }

  std::vector<Vec3i> cells;
  for (int64_t key = end_key; key != -1; key = nodes[key].parent)
    cells.push_back(unpack_cell(key));
  std::reverse(cells.begin(), cells.end());

  result.status = SearchStatus::Ok;
  result.path.cells = std::move(cells);
  result.path.cost = nodes[end_key].g;
  result.path.reached_goal = found;
  result.path.waypoints = prune_path(result.path.cells, map, cfg);
  return result;
}

namespace {

bool segment_clear(const DualLayerMap& map, const Vec3& a, const Vec3& b,
                   const PlannerConfig& cfg) {
  const double step = map.config().resolution * cfg.los_step;
  const double len = (b - a).norm();
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  for (int i = 0; i <= n; ++i) {
    const Vec3 p = a + (b - a) * (static_cast<double>(i) / n);
    if (!passable(map, map.world_to_grid(p), cfg)) return false;
  }
  return true;
}

}  // namespace

std::vector<Vec3> prune_path(const std::vector<Vec3i>& cells, const DualLayerMap& map,
                             const PlannerConfig& cfg) {
  std::vector<Vec3> waypoints;
  if (cells.empty()) return waypoints;
  waypoints.push_back(map.grid_to_world(cells.front()));
  size_t anchor = 0;
  while (anchor + 1 < cells.size()) {
    size_t best = anchor + 1;  // consecutive cells are always mutually visible
    for (size_t j = cells.size() - 1; j > anchor + 1; --j) {
      if (segment_clear(map, map.grid_to_world(cells[anchor]), map.grid_to_world(cells[j]),
                        cfg)) {
        best = j;
        break;
      }
    }
    waypoints.push_back(map.grid_to_world(cells[best]));
    anchor = best;
  }
  return waypoints;
}

namespace {

struct PolylinePoint {
  size_t segment;
  double t_on_segment;
  double arc;
  Vec3 point;
};

PolylinePoint closest_on_polyline(const std::vector<Vec3>& wp, const Vec3& p) {
  PolylinePoint best{0, 0.0, 0.0, wp.front()};
  double best_d2 = std::numeric_limits<double>::infinity();
  double arc = 0.0;
  if (wp.size() == 1) {
    best.point = wp[0];
    return best;
  }
  for (size_t i = 0; i + 1 < wp.size(); ++i) {
    const Vec3 a = wp[i], b = wp[i + 1];
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    double t = len2 > 1e-18 ? (p - a).dot(ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec3 q = a + t * ab;
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2 - 1e-15) {
      best_d2 = d2;
      best = {i, t, arc + t * std::sqrt(len2), q};
    }
    arc += std::sqrt(len2);
  }
  return best;
}

Vec3 point_at_arc(const std::vector<Vec3>& wp, double s) {
  if (wp.size() == 1) return wp[0];
  double acc = 0.0;
  for (size_t i = 0; i + 1 < wp.size(); ++i) {
    const double len = (wp[i + 1] - wp[i]).norm();
    if (s <= acc + len || i + 2 == wp.size()) {
      if (len < 1e-15) return wp[i + 1];
      const double t = std::clamp((s - acc) / len, 0.0, 1.0);
      return wp[i] + t * (wp[i + 1] - wp[i]);
    }
    acc += len;
  }
  return wp.back();
}

}  // namespace

std::vector<Vec3> sample_reference(const std::vector<Vec3>& waypoints, const Vec3& robot,
                                   double v_ref, int n_steps, double dt) {
  if (waypoints.empty()) throw ContractViolation("sample_reference: empty polyline");
  if (v_ref <= 0.0) throw ContractViolation("sample_reference: v_ref must be > 0");
  const PolylinePoint origin = closest_on_polyline(waypoints, robot);
  std::vector<Vec3> refs;
  refs.reserve(n_steps);
  for (int n = 1; n <= n_steps; ++n)
    refs.push_back(point_at_arc(waypoints, origin.arc + v_ref * dt * n));
  return refs;
}

bool Polytope::contains(const Vec3& p, double tol) const {
  return margin(p) >= -tol;
}

double Polytope::margin(const Vec3& p) const {
  return (b - A * p).minCoeff();
}

int Corridor::assign(const Vec3& p) const {
  int best = -1;
  double best_margin = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < polytopes.size(); ++i) {
    const double m = polytopes[i].margin(p);
    if (m >= -1e-9) return static_cast<int>(i);
    if (m > best_margin) {
      best_margin = m;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<int> Corridor::assign_steps(const std::vector<Vec3>& refs) const {
  std::vector<int> out;
  out.reserve(refs.size());
  for (const Vec3& p : refs) out.push_back(assign(p));
  return out;
}

bool Corridor::any_contains(const Vec3& p) const {
  for (const auto& poly : polytopes)
    if (poly.contains(p, 1e-9)) return true;
  return false;
}

namespace {

struct CellBox {
  Vec3i lo, hi;
};

// True when any cell of the axis slab at `pos` on `axis` (bounds from box,
// other axes) is statically occupied (raw layer).
bool slab_blocked(const DualLayerMap& map, const CellBox& box, int axis, int pos) {
  Vec3i lo = box.lo, hi = box.hi;
  lo(axis) = hi(axis) = pos;
  for (int x = lo.x(); x <= hi.x(); ++x)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int z = lo.z(); z <= hi.z(); ++z)
        if (map.static_state(Vec3i(x, y, z)) == CellState::Occupied) return true;
  return false;
}

Polytope grow_box(const DualLayerMap& map, const Vec3& seg_a, const Vec3& seg_b,
                  const PlannerConfig& cfg) {
  const double res = map.config().resolution;
  CellBox box{map.world_to_grid(seg_a).cwiseMin(map.world_to_grid(seg_b)),
              map.world_to_grid(seg_a).cwiseMax(map.world_to_grid(seg_b))};
  const CellBox seed = box;
  const int grow_cells = static_cast<int>(std::floor(cfg.expansion_bound / res + 1e-9));
  const Vec3i win_lo = map.center_cell() - map.config().half_size;
  const Vec3i win_hi = map.center_cell() + map.config().half_size;

  bool blocked[6] = {false, false, false, false, false, false};
  while (true) {
    bool progressed = false;
    for (int face = 0; face < 6; ++face) {
      if (blocked[face]) continue;
      const int axis = face / 2;
      const bool positive = (face % 2) == 0;
      const int next = positive ? box.hi(axis) + 1 : box.lo(axis) - 1;
      const bool at_limit = positive ? (next > seed.hi(axis) + grow_cells || next > win_hi(axis))
                                     : (next < seed.lo(axis) - grow_cells || next < win_lo(axis));
      if (at_limit || slab_blocked(map, box, axis, next)) {
        blocked[face] = true;
        continue;
      }
      if (positive)
        box.hi(axis) = next;
      else
        box.lo(axis) = next;
      progressed = true;
    }
    if (!progressed) break;
  }

  // Metric bounds, shrunk by the robot radius but never into the seed cells.
  Vec3 lo = box.lo.cast<double>() * res;
  Vec3 hi = (box.hi.cast<double>() + Vec3::Ones()) * res;
  const Vec3 seed_lo = seed.lo.cast<double>() * res;
  const Vec3 seed_hi = (seed.hi.cast<double>() + Vec3::Ones()) * res;
  const double d_rad = map.config().d_rad;
  for (int d = 0; d < 3; ++d) {
    lo(d) = std::min(lo(d) + d_rad, seed_lo(d));
    hi(d) = std::max(hi(d) - d_rad, seed_hi(d));
  }

  Polytope poly;
  poly.box_min = lo;
  poly.box_max = hi;
  poly.A.resize(6, 3);
  poly.b.resize(6);
  poly.A.setZero();
  for (int d = 0; d < 3; ++d) {
    poly.A(2 * d, d) = 1.0;
    poly.b(2 * d) = hi(d);
    poly.A(2 * d + 1, d) = -1.0;
    poly.b(2 * d + 1) = -lo(d);
  }
  return poly;
}

}  // namespace

namespace {

bool cell_box_free(const DualLayerMap& map, const Vec3i& lo, const Vec3i& hi) {
  for (int x = lo.x(); x <= hi.x(); ++x)
    for (int y = lo.y(); y <= hi.y(); ++y)
      for (int z = lo.z(); z <= hi.z(); ++z)
        if (map.static_state(Vec3i(x, y, z)) == CellState::Occupied) return false;
  return true;
}

// A diagonal segment's cell AABB can clip an obstacle corner even when the
// segment itself has line of sight; split until every seed box is free.
bool emit_segment_boxes(const DualLayerMap& map, const Vec3& a, const Vec3& b,
                        const PlannerConfig& cfg, int depth, Corridor& corridor) {
  if (static_cast<int>(corridor.polytopes.size()) >= cfg.max_polytopes) return true;
  const Vec3i lo = map.world_to_grid(a).cwiseMin(map.world_to_grid(b));
  const Vec3i hi = map.world_to_grid(a).cwiseMax(map.world_to_grid(b));
  if (cell_box_free(map, lo, hi)) {
    corridor.polytopes.push_back(grow_box(map, a, b, cfg));
    return true;
  }
  if (depth >= 6) return false;
  const Vec3 mid = 0.5 * (a + b);
  return emit_segment_boxes(map, a, mid, cfg, depth + 1, corridor) &&
         emit_segment_boxes(map, mid, b, cfg, depth + 1, corridor);
}

}  // namespace

CorridorResult generate_sfc(const DualLayerMap& map, const std::vector<Vec3>& waypoints,
                            const Vec3& robot, const PlannerConfig& cfg,
                            const std::vector<Vec3>* refs_for_step_map, double needed_reach) {
  CorridorResult result;
  if (waypoints.empty()) return result;
  if (map.static_state(map.world_to_grid(robot)) == CellState::Occupied) return result;

  const PolylinePoint at = closest_on_polyline(waypoints, robot);
  Corridor corridor;

  if (waypoints.size() == 1) {
    if (!emit_segment_boxes(map, robot, waypoints[0], cfg, 0, corridor)) return result;
  } else {
    double covered = 0.0;
    // First box spans from the robot itself to the end of its segment.
    Vec3 from = robot;
    for (size_t seg = at.segment;
         seg + 1 < waypoints.size() &&
         static_cast<int>(corridor.polytopes.size()) < cfg.max_polytopes;
         ++seg) {
      const Vec3 to = waypoints[seg + 1];
      if (!emit_segment_boxes(map, from, to, cfg, 0, corridor)) return result;
      covered += (to - from).norm();
      from = to;
      if (needed_reach > 0.0 && covered >= needed_reach) break;
    }
  }
  if (corridor.polytopes.empty()) return result;

  if (refs_for_step_map) corridor.step_map = corridor.assign_steps(*refs_for_step_map);
  result.status = CorridorStatus::Ok;
  result.corridor = std::move(corridor);
  return result;
}

bool replan_check(const std::vector<Vec3>& waypoints, const DualLayerMap& map,
                  const PlannerConfig& cfg) {
  if (waypoints.empty()) return true;
  if (waypoints.size() == 1)
    return !passable(map, map.world_to_grid(waypoints[0]), cfg);
  for (size_t i = 0; i + 1 < waypoints.size(); ++i)
    if (!segment_clear(map, waypoints[i], waypoints[i + 1], cfg)) return true;
  return false;
}

}  // namespace dynavoid
