#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "dynavoid/perception.hpp"
#include "dynavoid/types.hpp"

namespace dynavoid {

enum class CellState { Unknown, Free, Occupied };

struct GridMapConfig {
  double resolution{0.1};          // m / cell
  Vec3i half_size{200, 200, 50};   // cells; window dims are 2*half+1
  double d_rad{0.3};               // quadrotor radius, m
  double k_vel{0.01};              // velocity weight in dynamic inflation, s
  int hit_increment{3};
  int miss_decrement{1};
  int occupied_threshold{2};
  int counter_min{-5};
  int counter_max{10};
  double recenter_threshold{2.0};  // m of robot travel before the window recenters
  double stamp_dt{0.1};            // s between stamped prediction samples

  void validate() const;
};

/// Packs a global cell index into a hashable key. Valid for |coord| < 2^20.
int64_t pack_cell(const Vec3i& g);
Vec3i unpack_cell(int64_t key);

/// Robot-centered occupancy grid with an evidence-counted static layer and a
/// binary stamped layer of predicted dynamic occupancy. Cell indices are
/// global (floor(p / resolution)), stable across window recentering.
///
/// Single-writer: all mutation happens on one task; planner calls take the
/// map by const reference as an immutable snapshot of the current cycle.
class DualLayerMap {
 public:
  explicit DualLayerMap(const GridMapConfig& cfg, const Vec3& initial_center = Vec3::Zero());

  const GridMapConfig& config() const { return cfg_; }
  Vec3 center() const { return (center_cell_.cast<double>() + Vec3::Constant(0.5)) * cfg_.resolution; }
  Vec3i center_cell() const { return center_cell_; }

  Vec3i world_to_grid(const Vec3& p) const;
  Vec3 grid_to_world(const Vec3i& g) const;  // cell center
  bool in_bounds(const Vec3i& g) const;

  /// Raycast update from the frame's static points only; dynamic points are
  /// ignored entirely. Recenters the window toward the sensor first when it
  /// has drifted past the recenter threshold.
  void update_static(const LabeledFrame& frame);

  /// Clears all previously stamped cells, then stamps the predicted cuboid of
  /// every given track at sample times now + i*stamp_dt for i = 0..ceil(h/dt),
  /// inflated by d_rad + k_vel * |model velocity|.
  void stamp_dynamic(const std::vector<const Track*>& tracks, double horizon, double now);

  /// Combined query: occupied if the (inflated) static layer or the dynamic
  /// layer claims the cell; unknown only when never observed and unstamped.
  CellState query(const Vec3i& g) const;
  CellState query(const Vec3& p) const { return query(world_to_grid(p)); }

  /// Raw static layer state (no inflation).
  CellState static_state(const Vec3i& g) const;
  bool static_occupied_inflated(const Vec3i& g) const;
  bool dynamic_occupied(const Vec3i& g) const;

  const std::unordered_set<int64_t>& stamped_cells() const { return stamped_; }
  const std::unordered_set<int64_t>& static_occupied_cells() const { return occupied_; }

  /// Increments whenever any cell's raw static occupancy flips.
  uint64_t static_occupancy_version() const { return occ_version_; }

  double inflation_distance(double vel) const { return cfg_.d_rad + cfg_.k_vel * vel; }

  std::string dump_json() const;

 private:
  size_t slot(const Vec3i& g) const;
  void recenter(const Vec3& robot);
  void apply_miss(const Vec3i& g);
  void apply_hit(const Vec3i& g);
  void set_counter(const Vec3i& g, int value);
  void rebuild_inflation();
  void add_inflation(const Vec3i& g, int delta);

  GridMapConfig cfg_;
  Vec3i dims_;
  Vec3i center_cell_;
  int inf_cells_;
  std::vector<int8_t> counter_;    // kUnknown sentinel = never observed
  std::vector<uint16_t> inflated_; // # raw-occupied cells within inf_cells (Chebyshev)
  std::unordered_set<int64_t> occupied_;
  std::unordered_set<int64_t> stamped_;
  uint64_t occ_version_{0};

  static constexpr int8_t kUnknown = INT8_MIN;
};

/// Traverses the grid cells along a segment (Amanatides-Woo).
/// Visits every cell from the start cell to the end cell inclusive; the
/// callback returns false to stop early.
void traverse_ray(const Vec3& from, const Vec3& to, double resolution,
                  const std::function<bool(const Vec3i&)>& visit);

}  // namespace dynavoid
