#include "dynavoid/dbscan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace dynavoid {

namespace {

struct CellKey {
  int64_t x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellKeyHash {
  size_t operator()(const CellKey& k) const {
    uint64_t h = 1469598103934665603ull;
    for (int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<size_t>(h);
  }
};

// Union-find over point indices.
struct Dsu {
  std::vector<int> parent;
  explicit Dsu(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[b] = a;
  }
};

bool lex_less(const Vec3& a, const Vec3& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

}  // namespace

std::vector<std::vector<int>> cluster_dynamic(const std::vector<Vec3>& points,
                                              double eps, int min_pts) {
  if (eps <= 0.0) throw ContractViolation("cluster_dynamic: eps must be > 0");
  if (min_pts < 1) throw ContractViolation("cluster_dynamic: min_pts must be >= 1");
  const int n = static_cast<int>(points.size());
  if (n == 0) return {};

  // Voxel hash at cell size eps: neighbours of a point live in its 27-cell
  // neighbourhood.
  std::unordered_map<CellKey, std::vector<int>, CellKeyHash> grid;
  grid.reserve(static_cast<size_t>(n) * 2);
  auto key_of = [eps](const Vec3& p) {
    return CellKey{static_cast<int64_t>(std::floor(p.x() / eps)),
                   static_cast<int64_t>(std::floor(p.y() / eps)),
                   static_cast<int64_t>(std::floor(p.z() / eps))};
  };
  for (int i = 0; i < n; ++i) grid[key_of(points[i])].push_back(i);

  const double eps2 = eps * eps;
  std::vector<std::vector<int>> neigh(n);
  for (int i = 0; i < n; ++i) {
    const CellKey k = key_of(points[i]);
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          auto it = grid.find(CellKey{k.x + dx, k.y + dy, k.z + dz});
          if (it == grid.end()) continue;
          for (int j : it->second)
            if ((points[i] - points[j]).squaredNorm() <= eps2) neigh[i].push_back(j);
        }
  }

  std::vector<bool> core(n, false);
  for (int i = 0; i < n; ++i) core[i] = static_cast<int>(neigh[i].size()) >= min_pts;

  Dsu dsu(n);
  for (int i = 0; i < n; ++i) {
    if (!core[i]) continue;
    for (int j : neigh[i])
      if (core[j]) dsu.unite(i, j);
  }

  // Border points attach to the nearest core point in range; ties broken by
  // the core point's coordinates so ordering of the input cannot matter.
  std::vector<int> owner(n, -1);
  for (int i = 0; i < n; ++i) {
    if (core[i]) {
      owner[i] = dsu.find(i);
      continue;
    }
    int best = -1;
    double best_d2 = 0.0;
    for (int j : neigh[i]) {
      if (!core[j]) continue;
      const double d2 = (points[i] - points[j]).squaredNorm();
      if (best < 0 || d2 < best_d2 - 1e-15 ||
          (std::abs(d2 - best_d2) <= 1e-15 && lex_less(points[j], points[best]))) {
        best = j;
        best_d2 = d2;
      }
    }
    if (best >= 0) owner[i] = dsu.find(best);
  }

  std::unordered_map<int, std::vector<int>> by_root;
  for (int i = 0; i < n; ++i)
    if (owner[i] >= 0) by_root[owner[i]].push_back(i);

  std::vector<std::vector<int>> clusters;
  clusters.reserve(by_root.size());
  for (auto& [root, members] : by_root) {
    std::sort(members.begin(), members.end());
    clusters.push_back(std::move(members));
  }
  std::sort(clusters.begin(), clusters.end(),
            [&](const std::vector<int>& a, const std::vector<int>& b) {
              Vec3 ma = points[a[0]], mb = points[b[0]];
              for (int i : a)
                if (lex_less(points[i], ma)) ma = points[i];
              for (int i : b)
                if (lex_less(points[i], mb)) mb = points[i];
              return lex_less(ma, mb);
            });
  return clusters;
}

}  // namespace dynavoid
