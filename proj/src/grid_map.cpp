#include "dynavoid/grid_map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dynavoid {

namespace {
constexpr int64_t kOffset = 1 << 20;
}

int64_t pack_cell(const Vec3i& g) {
  return ((static_cast<int64_t>(g.x()) + kOffset) << 42) |
         ((static_cast<int64_t>(g.y()) + kOffset) << 21) |
         (static_cast<int64_t>(g.z()) + kOffset);
}

Vec3i unpack_cell(int64_t key) {
  const int64_t mask = (1 << 21) - 1;
  return Vec3i(static_cast<int>(((key >> 42) & mask) - kOffset),
               static_cast<int>(((key >> 21) & mask) - kOffset),
               static_cast<int>((key & mask) - kOffset));
}

void GridMapConfig::validate() const {
  if (resolution <= 0.0) throw ConfigError("map.resolution must be > 0");
  if (d_rad <= 0.0) throw ConfigError("map.d_rad must be > 0");
  if (k_vel < 0.0) throw ConfigError("map.k must be >= 0");
  if ((half_size.array() < 1).any()) throw ConfigError("map.half_size must be >= 1 per axis");
  if (hit_increment <= 0 || miss_decrement <= 0)
    throw ConfigError("map hit/miss increments must be positive");
  if (counter_min >= counter_max) throw ConfigError("map counter saturation range is empty");
}

DualLayerMap::DualLayerMap(const GridMapConfig& cfg, const Vec3& initial_center) : cfg_(cfg) {
  cfg_.validate();
  dims_ = 2 * cfg_.half_size + Vec3i::Ones();
  center_cell_ = (initial_center / cfg_.resolution).array().floor().cast<int>();
  // Cells whose center lies within d_rad (Chebyshev) of an occupied cell's
  // center count as inflated.
  inf_cells_ = static_cast<int>(std::floor(cfg_.d_rad / cfg_.resolution + 1e-9));
  const size_t n = static_cast<size_t>(dims_.x()) * dims_.y() * dims_.z();
  counter_.assign(n, kUnknown);
  inflated_.assign(n, 0);
}

Vec3i DualLayerMap::world_to_grid(const Vec3& p) const {
  return (p / cfg_.resolution).array().floor().cast<int>();
}

Vec3 DualLayerMap::grid_to_world(const Vec3i& g) const {
  return (g.cast<double>() + Vec3::Constant(0.5)) * cfg_.resolution;
}

bool DualLayerMap::in_bounds(const Vec3i& g) const {
  return ((g - center_cell_).cwiseAbs().array() <= cfg_.half_size.array()).all();
}

size_t DualLayerMap::slot(const Vec3i& g) const {
  auto wrap = [](int v, int n) {
    int m = v % n;
    return m < 0 ? m + n : m;
  };
  return (static_cast<size_t>(wrap(g.x(), dims_.x())) * dims_.y() +
          wrap(g.y(), dims_.y())) *
             dims_.z() +
         wrap(g.z(), dims_.z());
}

void DualLayerMap::add_inflation(const Vec3i& g, int delta) {
  for (int dx = -inf_cells_; dx <= inf_cells_; ++dx)
    for (int dy = -inf_cells_; dy <= inf_cells_; ++dy)
      for (int dz = -inf_cells_; dz <= inf_cells_; ++dz) {
        const Vec3i n = g + Vec3i(dx, dy, dz);
        if (!in_bounds(n)) continue;
        auto& c = inflated_[slot(n)];
        c = static_cast<uint16_t>(static_cast<int>(c) + delta);
      }
}

void DualLayerMap::rebuild_inflation() {
  std::fill(inflated_.begin(), inflated_.end(), 0);
  for (int64_t key : occupied_) add_inflation(unpack_cell(key), +1);
}

void DualLayerMap::set_counter(const Vec3i& g, int value) {
  value = std::clamp(value, cfg_.counter_min, cfg_.counter_max);
  auto& c = counter_[slot(g)];
  const bool was_occ = c != kUnknown && c >= cfg_.occupied_threshold;
  const bool now_occ = value >= cfg_.occupied_threshold;
  c = static_cast<int8_t>(value);
  if (was_occ != now_occ) {
    ++occ_version_;
    if (now_occ) {
      occupied_.insert(pack_cell(g));
      add_inflation(g, +1);
    } else {
      occupied_.erase(pack_cell(g));
      add_inflation(g, -1);
    }
  }
}

void DualLayerMap::apply_miss(const Vec3i& g) {
  const int8_t c = counter_[slot(g)];
  set_counter(g, (c == kUnknown ? 0 : c) - cfg_.miss_decrement);
}

void DualLayerMap::apply_hit(const Vec3i& g) {
  const int8_t c = counter_[slot(g)];
  set_counter(g, (c == kUnknown ? 0 : c) + cfg_.hit_increment);
}

void DualLayerMap::recenter(const Vec3& robot) {
  const Vec3i new_center = (robot / cfg_.resolution).array().floor().cast<int>();
  if (new_center == center_cell_) return;
  const Vec3i old_center = center_cell_;
  center_cell_ = new_center;

  // Drop content that left the window. Ring storage means an entering cell
  // reuses the slot of a departed one, so entering slots are reset here.
  for (auto it = occupied_.begin(); it != occupied_.end();) {
    if (!in_bounds(unpack_cell(*it))) {
      it = occupied_.erase(it);
      ++occ_version_;
    } else {
      ++it;
    }
  }
  for (auto it = stamped_.begin(); it != stamped_.end();) {
    if (!in_bounds(unpack_cell(*it)))
      it = stamped_.erase(it);
    else
      ++it;
  }
  // Reset only the entering slabs (one per shifted axis); double resets from
  // slab overlap are harmless.
  const Vec3i lo = center_cell_ - cfg_.half_size;
  const Vec3i hi = center_cell_ + cfg_.half_size;
  const Vec3i shift = center_cell_ - old_center;
  for (int axis = 0; axis < 3; ++axis) {
    if (shift(axis) == 0) continue;
    Vec3i slab_lo = lo, slab_hi = hi;
    const int width = std::min(std::abs(shift(axis)), dims_(axis));
    if (shift(axis) > 0)
      slab_lo(axis) = hi(axis) - width + 1;
    else
      slab_hi(axis) = lo(axis) + width - 1;
    for (int x = slab_lo.x(); x <= slab_hi.x(); ++x)
      for (int y = slab_lo.y(); y <= slab_hi.y(); ++y)
        for (int z = slab_lo.z(); z <= slab_hi.z(); ++z)
          counter_[slot(Vec3i(x, y, z))] = kUnknown;
  }
  rebuild_inflation();
}

void DualLayerMap::update_static(const LabeledFrame& frame) {
  const Vec3& origin = frame.sensor_pose.position;
  if ((origin - center()).cwiseAbs().maxCoeff() > cfg_.recenter_threshold) recenter(origin);
  if (!in_bounds(world_to_grid(origin)))
    throw ContractViolation("update_static: sensor pose outside map bounds");

  // Misses first, hits second, so a surface seen by many rays in one frame
  // cannot be erased by grazing rays of the same frame.
  std::vector<Vec3i> hits;
  hits.reserve(frame.points.size());
  for (const auto& pt : frame.points) {
    if (pt.label != PointLabel::Static) continue;
    const Vec3i end_cell = world_to_grid(pt.position);
    traverse_ray(origin, pt.position, cfg_.resolution, [&](const Vec3i& g) {
      if (!in_bounds(g)) return false;
      if (g == end_cell) return false;  // endpoint handled as a hit below
      apply_miss(g);
      return true;
    });
    if (in_bounds(end_cell)) hits.push_back(end_cell);
  }
  for (const Vec3i& g : hits) apply_hit(g);
}

void DualLayerMap::stamp_dynamic(const std::vector<const Track*>& tracks, double horizon,
                                 double now) {
  stamped_.clear();
  const int steps = static_cast<int>(std::ceil(horizon / cfg_.stamp_dt - 1e-9));
  for (const Track* tr : tracks) {
    if (!tr || !tr->model) continue;
    const double vel = tr->model->velocity_at_epoch().norm();
    const Vec3 half = tr->half_extents + Vec3::Constant(inflation_distance(vel));
    for (int i = 0; i <= steps; ++i) {
      const Vec3 c = predict_position(*tr->model, now + i * cfg_.stamp_dt, horizon);
      // Cells whose center lies inside the inflated cuboid.
      Vec3i lo, hi;
      for (int d = 0; d < 3; ++d) {
        lo(d) = static_cast<int>(std::ceil((c(d) - half(d)) / cfg_.resolution - 0.5 - 1e-12));
        hi(d) = static_cast<int>(std::floor((c(d) + half(d)) / cfg_.resolution - 0.5 + 1e-12));
      }
      for (int x = lo.x(); x <= hi.x(); ++x)
        for (int y = lo.y(); y <= hi.y(); ++y)
          for (int z = lo.z(); z <= hi.z(); ++z) {
            const Vec3i g(x, y, z);
            if (in_bounds(g)) stamped_.insert(pack_cell(g));
          }
    }
  }
}

CellState DualLayerMap::static_state(const Vec3i& g) const {
  if (!in_bounds(g)) return CellState::Unknown;
  const int8_t c = counter_[slot(g)];
  if (c == kUnknown) return CellState::Unknown;
  return c >= cfg_.occupied_threshold ? CellState::Occupied : CellState::Free;
}

bool DualLayerMap::static_occupied_inflated(const Vec3i& g) const {
  return in_bounds(g) && inflated_[slot(g)] > 0;
}

bool DualLayerMap::dynamic_occupied(const Vec3i& g) const {
  return stamped_.count(pack_cell(g)) > 0;
}

CellState DualLayerMap::query(const Vec3i& g) const {
  if (!in_bounds(g)) return CellState::Unknown;
  if (dynamic_occupied(g) || static_occupied_inflated(g)) return CellState::Occupied;
  if (counter_[slot(g)] == kUnknown) return CellState::Unknown;
  return CellState::Free;
}

std::string DualLayerMap::dump_json() const {
  std::ostringstream os;
  os << "{\"resolution\":" << cfg_.resolution << ",\"center\":[" << center().x() << ","
     << center().y() << "," << center().z() << "]";
  auto emit = [&os](const char* name, const std::unordered_set<int64_t>& cells) {
    os << ",\"" << name << "\":[";
    bool first = true;
    std::vector<int64_t> sorted(cells.begin(), cells.end());
    std::sort(sorted.begin(), sorted.end());
    for (int64_t key : sorted) {
      const Vec3i g = unpack_cell(key);
      if (!first) os << ",";
      os << "[" << g.x() << "," << g.y() << "," << g.z() << "]";
      first = false;
    }
    os << "]";
  };
  emit("occupied_static", occupied_);
  emit("occupied_dynamic", stamped_);
  os << "}";
  return os.str();
}

void traverse_ray(const Vec3& from, const Vec3& to, double resolution,
                  const std::function<bool(const Vec3i&)>& visit) {
  Vec3i g = (from / resolution).array().floor().cast<int>();
  const Vec3i end = (to / resolution).array().floor().cast<int>();
  const Vec3 dir = to - from;
  const double len = dir.norm();
  if (!visit(g)) return;
  if (g == end || len < 1e-12) return;

  Vec3i step;
  Vec3 t_max, t_delta;
  for (int d = 0; d < 3; ++d) {
    if (dir(d) > 0) {
      step(d) = 1;
      t_max(d) = ((g(d) + 1) * resolution - from(d)) / dir(d);
      t_delta(d) = resolution / dir(d);
    } else if (dir(d) < 0) {
      step(d) = -1;
      t_max(d) = (g(d) * resolution - from(d)) / dir(d);
      t_delta(d) = -resolution / dir(d);
    } else {
      step(d) = 0;
      t_max(d) = std::numeric_limits<double>::infinity();
      t_delta(d) = std::numeric_limits<double>::infinity();
    }
  }
  // Guard against degenerate floating-point loops.
  for (int iter = 0; iter < 100000; ++iter) {
    int axis = 0;
    if (t_max(1) < t_max(axis)) axis = 1;
    if (t_max(2) < t_max(axis)) axis = 2;
    g(axis) += step(axis);
    t_max(axis) += t_delta(axis);
    if (!visit(g)) return;
    if (g == end) return;
    if (t_max.minCoeff() > 1.0 + 1e-9) return;  // passed the segment end
  }
}

}  // namespace dynavoid
