#pragma once

#include <cmath>
#include <limits>
#include <unordered_map>
#include <vector>

#include "cocoplan/workspace.hpp"

namespace cocoplan {

/// Memoized shortest-path oracle over one map. Distances equal
/// `travel_distance` but are served from cached single-source fields, so a
/// planning call pays one Dijkstra per distinct endpoint cell.
/// Not thread-safe; give each planner or simulation its own instance.
class TravelCache {
 public:
  explicit TravelCache(const GridMap& map, std::size_t capacity = 2048)
      : map_(&map), capacity_(capacity) {}

  const GridMap& map() const { return *map_; }

  /// Meters; +inf when unreachable or either endpoint is occupied.
  double distance(const Position& a, const Position& b) {
    const Cell ca = map_->cell_of(a);
    const Cell cb = map_->cell_of(b);
    if (map_->occupied(ca) || map_->occupied(cb)) return kInf;
    if (ca == cb) return ::cocoplan::distance(a, b);
    const auto ia = map_->index(ca);
    const auto ib = map_->index(cb);
    double grid;
    if (auto it = fields_.find(ia); it != fields_.end() && !fields_.count(ib)) {
      grid = it->second[ib];
    } else {
      grid = field(cb)[ia];
    }
    if (!std::isfinite(grid)) return kInf;
    return std::max(grid, ::cocoplan::distance(a, b));
  }

  double time(const Position& a, const Position& b, double v_max) {
    return distance(a, b) / v_max;
  }

  /// Cell-center waypoints from cell(a) to cell(b), both inclusive. Empty if unreachable.
  std::vector<Position> path(const Position& a, const Position& b) {
    const Cell ca = map_->cell_of(a);
    const Cell cb = map_->cell_of(b);
    std::vector<Position> out;
    if (map_->occupied(ca) || map_->occupied(cb)) return out;
    const auto& f = field(cb);
    if (!std::isfinite(f[map_->index(ca)])) return out;
    const double res = map_->resolution();
    Cell c = ca;
    out.push_back(map_->center(c));
    while (!(c == cb)) {
      Cell best = c;
      double best_val = kInf;
      for (const auto& m : detail::kMoves) {
        if (!detail::move_allowed(*map_, c, m)) continue;
        const Cell nb{c.x + m.dx, c.y + m.dy};
        const double v = f[map_->index(nb)] + m.cost * res;
        if (v < best_val - 1e-12) {
          best_val = v;
          best = nb;
        }
      }
      if (best == c) break;
      c = best;
      out.push_back(map_->center(c));
    }
    return out;
  }

  std::size_t cached_fields() const { return fields_.size(); }

  /// Grid distance (meters) from the cell of `p` to every cell, by map index.
  /// The reference is invalidated by the next call that adds a field.
  const std::vector<double>& field_from(const Position& p) { return field(map_->cell_of(p)); }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  const std::vector<double>& field(Cell root) {
    const auto key = map_->index(root);
    if (auto it = fields_.find(key); it != fields_.end()) return it->second;
    if (fields_.size() >= capacity_) fields_.clear();
    return fields_.emplace(key, distance_field(root, *map_)).first->second;
  }

  const GridMap* map_;
  std::size_t capacity_;
  std::unordered_map<std::size_t, std::vector<double>> fields_;
};

}  // namespace cocoplan
