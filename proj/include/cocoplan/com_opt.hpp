#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "cocoplan/comm.hpp"
#include "cocoplan/travel.hpp"

namespace cocoplan {

/// Synchronized meeting: common time and one position per agent.
struct CommEvent {
  double time{0.0};
  std::vector<Position> positions;
};

/// Finish time and place of each agent's last non-communication task.
struct LastTaskState {
  std::vector<double> finish_time;
  std::vector<Position> finish_pos;
  std::vector<double> v_max;

  std::size_t size() const { return finish_time.size(); }
};

struct ComOptOptions {
  double budget_s{std::numeric_limits<double>::infinity()};
  /// Stop once t^c cannot improve by more than this many seconds.
  double gap{0.5};
  /// Coarse anchor samples along the path toward the slowest agent; 0 keeps
  /// the anchor at the latest finisher.
  int anchor_samples{8};
};

/// First point on the shortest path from `from` toward `to` that links to `to`.
inline Position sel_com(const Position& from, const Position& to, TravelCache& travel,
                        const CommParams& params) {
  const auto& map = travel.map();
  if (linked(from, to, map, params)) return from;
  const auto path = travel.path(from, to);
  for (const auto& p : path)
    if (linked(p, to, map, params)) return p;
  return to;
}

/// Event time when every agent gathers at the latest finisher's position.
inline double all_gather_time(const LastTaskState& last, TravelCache& travel) {
  if (last.size() == 0) throw std::domain_error("com_opt: no agents");
  std::size_t latest = 0;
  for (std::size_t i = 1; i < last.size(); ++i)
    if (last.finish_time[i] > last.finish_time[latest]) latest = i;
  double t = 0.0;
  for (std::size_t i = 0; i < last.size(); ++i)
    t = std::max(t, last.finish_time[i] +
                        travel.time(last.finish_pos[i], last.finish_pos[latest], last.v_max[i]));
  return t;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline bool out_of_time(Clock::time_point start, double budget_s) {
  if (!std::isfinite(budget_s)) return false;
  return std::chrono::duration<double>(Clock::now() - start).count() >= budget_s;
}

// One refinement pass with `anchor` waiting at `anchor_pos`. Agents are
// visited latest-arrival first; each may move once toward its nearest settled
// neighbour and is kept only if the event time strictly improves.
inline CommEvent com_opt_pass(const LastTaskState& last, std::size_t anchor, const Position& anchor_pos,
                              TravelCache& travel, const CommParams& params, const ComOptOptions& opt,
                              Clock::time_point started) {
  const std::size_t n = last.size();
  std::vector<Position> meet(n, anchor_pos);
  std::vector<double> arrive(n);
  for (std::size_t i = 0; i < n; ++i) {
    arrive[i] = last.finish_time[i] + travel.time(last.finish_pos[i], anchor_pos, last.v_max[i]);
  }
  double best = *std::max_element(arrive.begin(), arrive.end());
  if (!std::isfinite(best)) return {best, meet};

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i)
    if (i != anchor) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return arrive[a] > arrive[b]; });

  std::vector<std::size_t> settled{anchor};
  std::vector<char> is_settled(n, 0);
  is_settled[anchor] = 1;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (out_of_time(started, opt.budget_s)) break;
    const std::size_t me = order[k];
    std::size_t nearest = settled.front();
    double nearest_d = std::numeric_limits<double>::infinity();
    for (std::size_t j : settled) {
      const double d = travel.distance(last.finish_pos[me], meet[j]);
      if (d < nearest_d || (d == nearest_d && j < nearest)) {
        nearest_d = d;
        nearest = j;
      }
    }
    const Position cand = sel_com(last.finish_pos[me], meet[nearest], travel, params);
    const double t_arrive = last.finish_time[me] + travel.time(last.finish_pos[me], cand, last.v_max[me]);
    double t_plus = t_arrive;
    for (std::size_t j = 0; j < n; ++j)
      if (j != me) t_plus = std::max(t_plus, arrive[j]);
    if (linked(cand, meet[nearest], travel.map(), params) && t_plus < best) {
      meet[me] = cand;
      arrive[me] = t_arrive;
      settled.push_back(me);
      is_settled[me] = 1;
      best = t_plus;
      double floor = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (is_settled[j]) floor = std::max(floor, arrive[j]);
      if (best - floor < opt.gap) break;
    }
  }
  return {best, meet};
}

}  // namespace detail

/// Chooses a meeting time and per-agent positions whose communication graph
/// is connected, reducing the worst wait after the last task relative to
/// gathering everyone at the latest finisher. Throws Unreachable when agents
/// cannot reach each other.
inline CommEvent com_opt(const LastTaskState& last, TravelCache& travel, const CommParams& params,
                         const ComOptOptions& opt = {}) {
  const std::size_t n = last.size();
  if (n == 0) throw std::domain_error("com_opt: no agents");
  if (last.finish_pos.size() != n || last.v_max.size() != n)
    throw std::domain_error("com_opt: inconsistent agent state");
  if (n == 1) return {last.finish_time[0], {last.finish_pos[0]}};
  const auto started = detail::Clock::now();

  std::size_t latest = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (last.finish_time[i] > last.finish_time[latest]) latest = i;
  const Position p0 = last.finish_pos[latest];

  CommEvent best = detail::com_opt_pass(last, latest, p0, travel, params, opt, started);
  if (!std::isfinite(best.time)) throw Unreachable("com_opt: agents cannot reach a common point");
  if (opt.anchor_samples <= 0) return best;

  // Slide the anchor along the path toward the agent that arrives last at p0.
  std::size_t slowest = latest;
  double slowest_t = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (i == latest) continue;
    const double t = last.finish_time[i] + travel.time(last.finish_pos[i], p0, last.v_max[i]);
    if (t > slowest_t) {
      slowest_t = t;
      slowest = i;
    }
  }
  const auto path = travel.path(p0, last.finish_pos[slowest]);
  if (path.size() < 2) return best;
  const int len = static_cast<int>(path.size());
  std::map<int, double> tried{{0, best.time}};
  int best_idx = 0;
  auto evaluate = [&](int idx) {
    if (idx < 0 || idx >= len || tried.count(idx)) return;
    if (detail::out_of_time(started, opt.budget_s)) return;
    CommEvent ev = detail::com_opt_pass(last, latest, path[idx], travel, params, opt, started);
    tried[idx] = ev.time;
    if (ev.time < best.time - 1e-12) {
      best = std::move(ev);
      best_idx = idx;
    }
  };
  const int samples = opt.anchor_samples;
  for (int k = 1; k <= samples; ++k)
    evaluate(static_cast<int>(std::lround(static_cast<double>(k) * (len - 1) / samples)));
  for (int step = std::max(1, (len - 1) / (2 * samples)); step >= 1; step /= 2) {
    const int center = best_idx;
    evaluate(center - step);
    evaluate(center + step);
    if (step == 1) break;
  }
  return best;
}

/// Worst per-agent wait between the last task and the event.
inline double worst_delay(const LastTaskState& last, const CommEvent& ev) {
  double d = 0.0;
  for (double tf : last.finish_time) d = std::max(d, ev.time - tf);
  return d;
}

}  // namespace cocoplan
