#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cocoplan/workspace.hpp"

namespace cocoplan {

/// Log-distance path loss with per-meter obstacle attenuation. All in dB.
struct CommParams {
  double tx_power{20.0};
  double pl_ref{40.0};
  double ref_dist{1.0};
  double path_exponent{2.0};
  double attenuation{5.0};
  double threshold{-40.0};

  void validate() const {
    if (!(ref_dist > 0.0)) throw std::domain_error("comm: ref_dist must be > 0");
    if (!(path_exponent > 0.0)) throw std::domain_error("comm: path_exponent must be > 0");
    if (!(attenuation >= 0.0)) throw std::domain_error("comm: attenuation must be >= 0");
  }

  /// Obstacle-free distance at which quality equals the threshold.
  double free_space_range() const {
    return ref_dist * std::pow(10.0, (tx_power - pl_ref - threshold) / (10.0 * path_exponent));
  }

  friend bool operator==(const CommParams&, const CommParams&) = default;
};

/// Quality for a given separation and obstacle length. Separations below
/// ref_dist/10 are clamped there to keep the log finite.
inline double quality_at(double dist, double obstacle_len, const CommParams& params) {
  const double d = std::max(dist, params.ref_dist / 10.0);
  const double path_loss = params.pl_ref + 10.0 * params.path_exponent * std::log10(d / params.ref_dist);
  return params.tx_power - path_loss - params.attenuation * obstacle_len;
}

inline double quality(const Position& a, const Position& b, const GridMap& map,
                      const CommParams& params) {
  return quality_at(distance(a, b), los_obstacle_length(a, b, map), params);
}

/// Edge rule for two positions: coincident points always link, otherwise
/// quality must strictly exceed the threshold.
inline bool linked(const Position& a, const Position& b, const GridMap& map,
                   const CommParams& params) {
  const double d = distance(a, b);
  if (d == 0.0) return true;
  // Quality can only drop below the free-space value; skip the ray cast when
  // the pair is out of range anyway.
  if (quality_at(d, 0.0, params) <= params.threshold) return false;
  return quality_at(d, los_obstacle_length(a, b, map), params) > params.threshold;
}

/// Undirected communication graph over agents 0..n-1.
class CommGraph {
 public:
  explicit CommGraph(std::size_t nodes) : adj_(nodes) {}

  std::size_t size() const { return adj_.size(); }

  void add_edge(int i, int j) {
    if (i == j) throw std::domain_error("comm graph: self loop");
    if (has_edge(i, j)) return;
    adj_.at(i).push_back(j);
    adj_.at(j).push_back(i);
  }

  bool has_edge(int i, int j) const {
    const auto& n = adj_.at(i);
    return std::find(n.begin(), n.end(), j) != n.end();
  }

  const std::vector<int>& neighbors(int i) const { return adj_.at(i); }

  std::vector<std::pair<int, int>> edges() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < static_cast<int>(adj_.size()); ++i)
      for (int j : adj_[i])
        if (i < j) out.emplace_back(i, j);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Component label per node, labels assigned in order of lowest member id.
  std::vector<int> components() const {
    std::vector<int> label(adj_.size(), -1);
    int next = 0;
    std::vector<int> stack;
    for (int s = 0; s < static_cast<int>(adj_.size()); ++s) {
      if (label[s] >= 0) continue;
      label[s] = next;
      stack.push_back(s);
      while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj_[u])
          if (label[v] < 0) {
            label[v] = next;
            stack.push_back(v);
          }
      }
      ++next;
    }
    return label;
  }

 private:
  std::vector<std::vector<int>> adj_;
};

inline CommGraph comm_graph(std::span<const Position> positions, const GridMap& map,
                            const CommParams& params) {
  CommGraph g(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (std::size_t j = i + 1; j < positions.size(); ++j)
      if (linked(positions[i], positions[j], map, params))
        g.add_edge(static_cast<int>(i), static_cast<int>(j));
  return g;
}

inline bool is_connected(const CommGraph& g) {
  if (g.size() == 0) throw std::domain_error("comm graph: empty node set");
  const auto labels = g.components();
  return std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; });
}

}  // namespace cocoplan
