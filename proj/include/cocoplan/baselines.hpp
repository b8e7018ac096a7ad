#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cocoplan/planner.hpp"

namespace cocoplan {

enum class StrategyKind { cocoplan, fix, fpmr, frdt, fimr, ring, greedy };

inline const char* to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::cocoplan: return "COCOPLAN";
    case StrategyKind::fix: return "FIX";
    case StrategyKind::fpmr: return "FPMR";
    case StrategyKind::frdt: return "FRDT";
    case StrategyKind::fimr: return "FIMR";
    case StrategyKind::ring: return "RING";
    case StrategyKind::greedy: return "GREEDY";
  }
  return "?";
}

inline StrategyKind strategy_kind_from_string(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto k : {StrategyKind::cocoplan, StrategyKind::fix, StrategyKind::fpmr, StrategyKind::frdt,
                 StrategyKind::fimr, StrategyKind::ring, StrategyKind::greedy})
    if (s == to_string(k)) return k;
  throw std::domain_error("unknown strategy '" + s + "'");
}

struct StrategyConfig {
  StrategyKind kind{StrategyKind::cocoplan};
  std::optional<int> threshold_n;
  std::optional<double> interval;
  std::optional<Position> fixed_point;
  std::optional<AgentId> leader;
  std::optional<std::vector<AgentId>> ring_order;

  /// Throws std::domain_error naming the missing or bad field.
  void validate(std::size_t n_agents, const GridMap& map, double dt) const {
    switch (kind) {
      case StrategyKind::fix:
        if (!threshold_n) throw std::domain_error("strategy.threshold_n is required for FIX");
        if (*threshold_n < 1) throw std::domain_error("strategy.threshold_n must be >= 1");
        break;
      case StrategyKind::fimr: {
        if (!interval) throw std::domain_error("strategy.interval is required for FIMR");
        if (!(*interval > 0.0)) throw std::domain_error("strategy.interval must be > 0");
        const double ticks = *interval / dt;
        if (std::abs(ticks - std::round(ticks)) > 1e-6)
          throw std::domain_error("strategy.interval must be a multiple of dt");
        break;
      }
      case StrategyKind::fpmr:
        if (!fixed_point) throw std::domain_error("strategy.fixed_point is required for FPMR");
        if (!map.in_bounds(*fixed_point) || map.occupied(*fixed_point))
          throw std::domain_error("strategy.fixed_point must be a free cell inside the map");
        break;
      case StrategyKind::frdt:
        if (!leader) throw std::domain_error("strategy.leader is required for FRDT");
        if (*leader < 0 || *leader >= static_cast<AgentId>(n_agents))
          throw std::domain_error("strategy.leader is not an agent id");
        break;
      case StrategyKind::ring:
        if (n_agents < 2) throw std::domain_error("RING needs at least two agents");
        if (ring_order) {
          auto sorted = *ring_order;
          std::sort(sorted.begin(), sorted.end());
          for (std::size_t i = 0; i < sorted.size(); ++i)
            if (sorted.size() != n_agents || sorted[i] != static_cast<AgentId>(i))
              throw std::domain_error("strategy.ring_order must be a permutation of agent ids");
        }
        break;
      case StrategyKind::cocoplan:
      case StrategyKind::greedy: break;
    }
  }

  bool operator==(const StrategyConfig&) const = default;
};

namespace detail {

inline std::optional<double> latest_arrival(const LastTaskState& last, const std::vector<Position>& meet,
                                            TravelCache& travel) {
  double t = 0.0;
  for (std::size_t i = 0; i < last.size(); ++i) {
    const double leg = travel.time(last.finish_pos[i], meet[i], last.v_max[i]);
    if (!std::isfinite(leg)) return std::nullopt;
    t = std::max(t, last.finish_time[i] + leg);
  }
  return t;
}

}  // namespace detail

/// Everyone meets at one configured point.
inline EventRule fixed_point_rule(Position point) {
  return [point](const LastTaskState& last, std::size_t, TravelCache& travel) -> std::optional<CommEvent> {
    std::vector<Position> meet(last.size(), point);
    auto t = detail::latest_arrival(last, meet, travel);
    if (!t) return std::nullopt;
    return CommEvent{*t, std::move(meet)};
  };
}

/// The leader stays put; the others, closest first, walk toward the nearest
/// already placed agent until they link to it.
inline EventRule leader_rule(AgentId leader, CommParams comm) {
  return [leader, comm](const LastTaskState& last, std::size_t,
                        TravelCache& travel) -> std::optional<CommEvent> {
    const std::size_t n = last.size();
    std::vector<Position> meet = last.finish_pos;
    const Position anchor = last.finish_pos.at(leader);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < n; ++i)
      if (static_cast<AgentId>(i) != leader) order.push_back(i);
    std::vector<double> to_leader(n);
    for (std::size_t i : order) to_leader[i] = travel.distance(last.finish_pos[i], anchor);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return to_leader[a] < to_leader[b]; });
    std::vector<std::size_t> placed{static_cast<std::size_t>(leader)};
    for (std::size_t i : order) {
      std::size_t target = placed.front();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t j : placed) {
        const double d = travel.distance(last.finish_pos[i], meet[j]);
        if (d < best) {
          best = d;
          target = j;
        }
      }
      if (!std::isfinite(best)) return std::nullopt;
      meet[i] = sel_com(last.finish_pos[i], meet[target], travel, comm);
      placed.push_back(i);
    }
    auto t = detail::latest_arrival(last, meet, travel);
    if (!t) return std::nullopt;
    return CommEvent{*t, std::move(meet)};
  };
}

/// Slack covering tick rounding of each travel leg and task end.
inline double fixed_time_slack(double dt, std::size_t task_count) {
  return dt * (2.0 * static_cast<double>(task_count) + 3.0);
}

/// Event pinned at `event_time`; positions from the meeting optimizer. Plans
/// whose meeting cannot be reached in time are rejected.
inline EventRule fixed_time_rule(double event_time, double dt, CommParams comm, ComOptOptions opt = {}) {
  return [=](const LastTaskState& last, std::size_t count, TravelCache& travel) -> std::optional<CommEvent> {
    const double slack = fixed_time_slack(dt, count);
    const double ready = *std::max_element(last.finish_time.begin(), last.finish_time.end());
    if (count == 0 && ready + slack <= event_time)
      if (auto ev = stay_if_connected(last, event_time, travel.map(), comm)) return ev;
    try {
      CommEvent ev = com_opt(last, travel, comm, opt);
      if (ev.time + slack > event_time) return std::nullopt;
      ev.time = event_time;
      return ev;
    } catch (const Unreachable&) {
      return std::nullopt;
    }
  };
}

/// Each agent heads to its own next meeting point; no joint connectivity.
inline EventRule next_meeting_rule(std::vector<Position> next_points) {
  return [next_points](const LastTaskState& last, std::size_t,
                       TravelCache& travel) -> std::optional<CommEvent> {
    if (next_points.size() != last.size()) throw std::domain_error("next_meeting_rule: size mismatch");
    auto t = detail::latest_arrival(last, next_points, travel);
    if (!t) return std::nullopt;
    return CommEvent{*t, next_points};
  };
}

/// First multiple of `interval` strictly after `now` (with tick tolerance).
inline double next_fixed_time(double now, double interval) {
  double k = std::floor(now / interval + 1e-9) + 1.0;
  return k * interval;
}

/// Chain neighbours for the pairwise strategy: edge k joins order[k] and
/// order[k+1] and is active in rounds with the same parity as k.
struct RingTopology {
  std::vector<AgentId> order;
  std::vector<Position> meeting_points;  // one per edge

  std::size_t edges() const { return order.size() - 1; }

  std::pair<AgentId, AgentId> edge(std::size_t k) const { return {order[k], order[k + 1]}; }

  /// Next (round, edge) at or after `round` in which `agent` meets someone.
  std::pair<int, std::size_t> next_meeting(AgentId agent, int round) const {
    const auto it = std::find(order.begin(), order.end(), agent);
    const std::size_t pos = static_cast<std::size_t>(it - order.begin());
    for (int r = round;; ++r) {
      if (pos >= 1 && static_cast<int>((pos - 1) % 2) == r % 2) return {r, pos - 1};
      if (pos + 1 < order.size() && static_cast<int>(pos % 2) == r % 2) return {r, pos};
    }
  }
};

/// Free cell center nearest the midpoint of each chain edge's start positions.
inline RingTopology make_ring(std::vector<AgentId> order, const std::vector<Position>& starts,
                              const GridMap& map) {
  RingTopology ring{std::move(order), {}};
  const auto free = map.free_cells();
  if (free.empty()) throw std::domain_error("map has no free cell");
  TravelCache reach(map);
  for (std::size_t k = 0; k + 1 < ring.order.size(); ++k) {
    const Position a = starts.at(ring.order[k]);
    const Position b = starts.at(ring.order[k + 1]);
    const Position mid{(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
    Position best = a;
    double best_d = std::numeric_limits<double>::infinity();
    for (const Cell& c : free) {
      const Position p = map.center(c);
      const double d = distance(p, mid);
      if (d < best_d && std::isfinite(reach.distance(a, p)) && std::isfinite(reach.distance(b, p))) {
        best_d = d;
        best = p;
      }
    }
    ring.meeting_points.push_back(best);
  }
  return ring;
}

/// Local safety rule for strategies without a global view: precedence needs
/// the predecessor known complete, the higher id of a mutex pair waits for the
/// lower one, and tasks bound by concurrency are never taken.
inline bool locally_safe(TaskId task, const std::vector<TemporalRelation>& relations,
                         const std::map<TaskId, ExecutionInterval>& completed) {
  for (const auto& rel : relations) {
    if (!rel.involves(task)) continue;
    const TaskId other = rel.other(task);
    switch (rel.kind) {
      case RelationKind::concurrency: return false;
      case RelationKind::precedence:
        if (rel.second == task && !completed.count(other)) return false;
        if (rel.first == task && completed.count(other)) return false;
        break;
      case RelationKind::mutex:
        if (task > other && !completed.count(other)) return false;
        break;
    }
  }
  return true;
}

/// Lowest lexicographic subset of `idle` covering the task, if any.
inline std::optional<std::vector<AgentId>> first_covering_group(const Task& task,
                                                                const std::vector<AgentId>& idle,
                                                                const std::vector<AgentSnapshot>& agents) {
  const int need = task.agents_required();
  if (need > static_cast<int>(idle.size())) return std::nullopt;
  std::vector<AgentId> chosen;
  std::optional<std::vector<AgentId>> found;
  auto rec = [&](auto&& self, std::size_t from) -> bool {
    if (static_cast<int>(chosen.size()) == need) {
      if (group_covers(chosen, task.requirements, agents)) {
        found = chosen;
        return true;
      }
      return false;
    }
    for (std::size_t k = from; k < idle.size(); ++k) {
      chosen.push_back(idle[k]);
      if (self(self, k + 1)) return true;
      chosen.pop_back();
    }
    return false;
  };
  rec(rec, 0);
  return found;
}

}  // namespace cocoplan
