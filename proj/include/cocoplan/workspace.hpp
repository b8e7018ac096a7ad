#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cocoplan {

/// Metric point in the workspace plane (meters).
struct Position {
  double x{0.0};
  double y{0.0};

  friend bool operator==(const Position&, const Position&) = default;
};

inline double distance(const Position& a, const Position& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

struct Cell {
  int x{0};
  int y{0};

  friend bool operator==(const Cell&, const Cell&) = default;
};

class Unreachable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable 2D occupancy grid. Cell (x, y) covers
/// [x*res, (x+1)*res) x [y*res, (y+1)*res); row y of the map file is cell row y.
class GridMap {
 public:
  GridMap(int width, int height, double resolution)
      : width_(width), height_(height), resolution_(resolution),
        occupied_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), 0) {
    if (width < 1 || height < 1) throw std::domain_error("grid dimensions must be >= 1");
    if (!(resolution > 0.0) || !std::isfinite(resolution))
      throw std::domain_error("grid resolution must be > 0");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double resolution() const { return resolution_; }
  double width_m() const { return width_ * resolution_; }
  double height_m() const { return height_ * resolution_; }
  std::size_t cell_count() const { return occupied_.size(); }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  bool in_bounds(const Position& p) const {
    return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= 0.0 && p.y >= 0.0 &&
           p.x < width_m() && p.y < height_m();
  }

  std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * width_ + c.x; }
  Cell cell_at(std::size_t idx) const {
    return {static_cast<int>(idx % width_), static_cast<int>(idx / width_)};
  }

  Cell cell_of(const Position& p) const {
    if (!in_bounds(p))
      throw std::domain_error("position (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                              ") outside map");
    return {std::min(static_cast<int>(p.x / resolution_), width_ - 1),
            std::min(static_cast<int>(p.y / resolution_), height_ - 1)};
  }

  Position center(Cell c) const {
    return {(c.x + 0.5) * resolution_, (c.y + 0.5) * resolution_};
  }
  Position snap(const Position& p) const { return center(cell_of(p)); }

  bool occupied(Cell c) const { return occupied_[index(c)] != 0; }
  bool occupied(const Position& p) const { return occupied(cell_of(p)); }
  bool free(const Position& p) const { return in_bounds(p) && !occupied(p); }

  void set_occupied(Cell c, bool value = true) {
    if (!in_bounds(c)) throw std::domain_error("cell outside map");
    occupied_[index(c)] = value ? 1 : 0;
  }

  std::vector<Cell> free_cells() const {
    std::vector<Cell> out;
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (!occupied(Cell{x, y})) out.push_back({x, y});
    return out;
  }

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int width_;
  int height_;
  double resolution_;
  std::vector<std::uint8_t> occupied_;
};

// ---------------------------------------------------------------------------
// Map file: "width height resolution" then `height` rows of '.' / '#'.

inline GridMap parse_map(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("map: missing header line");
  std::istringstream hs(header);
  int width = 0, height = 0;
  double resolution = 0.0;
  if (!(hs >> width >> height >> resolution))
    throw std::runtime_error("map: header must be 'width height resolution'");
  std::string extra;
  if (hs >> extra) throw std::runtime_error("map: unexpected token in header: " + extra);
  GridMap map(width, height, resolution);
  std::string line;
  for (int y = 0; y < height; ++y) {
    if (!std::getline(in, line))
      throw std::runtime_error("map: expected " + std::to_string(height) + " rows, got " +
                               std::to_string(y));
    while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
      line.pop_back();
    if (static_cast<int>(line.size()) != width)
      throw std::runtime_error("map: row " + std::to_string(y + 2) + " has " +
                               std::to_string(line.size()) + " cells, expected " +
                               std::to_string(width));
    for (int x = 0; x < width; ++x) {
      if (line[x] == '#') map.set_occupied({x, y});
      else if (line[x] != '.')
        throw std::runtime_error("map: invalid character '" + std::string(1, line[x]) +
                                 "' at row " + std::to_string(y + 2));
    }
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos)
      throw std::runtime_error("map: trailing content after grid rows");
  }
  return map;
}

inline GridMap load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("map: cannot open " + path);
  return parse_map(in);
}

inline std::string format_map(const GridMap& map) {
  std::ostringstream os;
  os << map.width() << ' ' << map.height() << ' ' << map.resolution() << '\n';
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) os << (map.occupied(Cell{x, y}) ? '#' : '.');
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Line of sight

/// Length of segment a-b lying inside occupied cells (grid traversal).
inline double los_obstacle_length(const Position& a, const Position& b, const GridMap& map) {
  Cell ca = map.cell_of(a);
  const Cell cb = map.cell_of(b);
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len = std::hypot(dx, dy);
  if (len == 0.0) return 0.0;

  const double res = map.resolution();
  const int step_x = dx > 0 ? 1 : (dx < 0 ? -1 : 0);
  const int step_y = dy > 0 ? 1 : (dy < 0 ? -1 : 0);
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto boundary_t = [](double origin, double delta, int cell, int step, double r) {
    if (step == 0) return inf;
    const double edge = (step > 0 ? cell + 1 : cell) * r;
    return (edge - origin) / delta;
  };
  double t_max_x = boundary_t(a.x, dx, ca.x, step_x, res);
  double t_max_y = boundary_t(a.y, dy, ca.y, step_y, res);
  const double t_delta_x = step_x ? res / std::abs(dx) : inf;
  const double t_delta_y = step_y ? res / std::abs(dy) : inf;

  double t = 0.0;
  double blocked = 0.0;
  Cell c = ca;
  const int max_steps = map.width() + map.height() + 4;
  for (int guard = 0; guard < max_steps; ++guard) {
    const bool last = (c == cb);
    const double t_exit = last ? 1.0 : std::min({t_max_x, t_max_y, 1.0});
    if (map.in_bounds(c) && map.occupied(c)) blocked += (t_exit - t) * len;
    if (last || t_exit >= 1.0) break;
    t = t_exit;
    if (t_max_x < t_max_y) {
      c.x += step_x;
      t_max_x += t_delta_x;
    } else if (t_max_y < t_max_x) {
      c.y += step_y;
      t_max_y += t_delta_y;
    } else {
      c.x += step_x;
      c.y += step_y;
      t_max_x += t_delta_x;
      t_max_y += t_delta_y;
    }
  }
  return blocked;
}

// ---------------------------------------------------------------------------
// 8-connected grid search

namespace detail {

struct Move {
  int dx;
  int dy;
  double cost;  // in cells
};

inline constexpr double kSqrt2 = 1.41421356237309504880;
inline constexpr Move kMoves[8] = {{1, 0, 1.0},  {-1, 0, 1.0},     {0, 1, 1.0},      {0, -1, 1.0},
                                   {1, 1, kSqrt2}, {1, -1, kSqrt2}, {-1, 1, kSqrt2}, {-1, -1, kSqrt2}};

// Diagonal moves may not cut an occupied corner.
inline bool move_allowed(const GridMap& map, Cell from, const Move& m) {
  const Cell to{from.x + m.dx, from.y + m.dy};
  if (!map.in_bounds(to) || map.occupied(to)) return false;
  if (m.dx != 0 && m.dy != 0) {
    if (map.occupied(Cell{from.x + m.dx, from.y}) || map.occupied(Cell{from.x, from.y + m.dy}))
      return false;
  }
  return true;
}

inline double octile(Cell a, Cell b) {
  const double dx = std::abs(a.x - b.x);
  const double dy = std::abs(a.y - b.y);
  return std::max(dx, dy) + (kSqrt2 - 1.0) * std::min(dx, dy);
}

}  // namespace detail

/// Shortest 8-connected path length in meters between two cells; +inf if none.
inline double astar_cell_distance(Cell start, Cell goal, const GridMap& map) {
  if (start == goal) return 0.0;
  const std::size_t n = map.cell_count();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(n, inf);
  std::vector<std::uint8_t> closed(n, 0);
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  g[map.index(start)] = 0.0;
  open.push({detail::octile(start, goal), map.index(start)});
  const std::size_t goal_idx = map.index(goal);
  while (!open.empty()) {
    const auto [f, idx] = open.top();
    open.pop();
    if (closed[idx]) continue;
    closed[idx] = 1;
    if (idx == goal_idx) return g[idx] * map.resolution();
    const Cell c = map.cell_at(idx);
    for (const auto& m : detail::kMoves) {
      if (!detail::move_allowed(map, c, m)) continue;
      const Cell nb{c.x + m.dx, c.y + m.dy};
      const std::size_t ni = map.index(nb);
      const double cand = g[idx] + m.cost;
      if (cand < g[ni]) {
        g[ni] = cand;
        open.push({cand + detail::octile(nb, goal), ni});
      }
    }
  }
  return inf;
}

/// Travel distance used everywhere in planning: grid path between the snapped
/// cells, never shorter than the straight line between the raw points.
inline double travel_distance(const Position& a, const Position& b, const GridMap& map) {
  const Cell ca = map.cell_of(a);
  const Cell cb = map.cell_of(b);
  if (map.occupied(ca) || map.occupied(cb))
    throw std::domain_error("travel endpoint lies on an obstacle");
  const double grid = astar_cell_distance(ca, cb, map);
  if (!std::isfinite(grid)) throw Unreachable("no path between endpoints");
  return std::max(grid, distance(a, b));
}

inline double astar_travel_time(const Position& a, const Position& b, const GridMap& map,
                                double v_max) {
  if (!(v_max > 0.0)) throw std::domain_error("v_max must be > 0");
  return travel_distance(a, b, map) / v_max;
}

/// Full single-source distance field (meters) over the grid; +inf where unreachable.
inline std::vector<double> distance_field(Cell source, const GridMap& map) {
  const std::size_t n = map.cell_count();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(n, inf);
  if (map.occupied(source)) return dist;
  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  dist[map.index(source)] = 0.0;
  open.push({0.0, map.index(source)});
  while (!open.empty()) {
    const auto [d, idx] = open.top();
    open.pop();
    if (d > dist[idx]) continue;
    const Cell c = map.cell_at(idx);
    for (const auto& m : detail::kMoves) {
      if (!detail::move_allowed(map, c, m)) continue;
      const std::size_t ni = map.index(Cell{c.x + m.dx, c.y + m.dy});
      const double cand = d + m.cost;
      if (cand < dist[ni]) {
        dist[ni] = cand;
        open.push({cand, ni});
      }
    }
  }
  for (auto& d : dist)
    if (std::isfinite(d)) d *= map.resolution();
  return dist;
}

}  // namespace cocoplan
