// Random instance generators and brute-force oracles shared by the suites.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "cocoplan/planner.hpp"

namespace testkit {

using namespace cocoplan;

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen); }
  bool chance(double p) { return uniform(0.0, 1.0) < p; }
  template <class T>
  const T& pick(const std::vector<T>& xs) {
    return xs[static_cast<std::size_t>(integer(0, static_cast<int>(xs.size()) - 1))];
  }
};

inline std::string source_path(const std::string& rel) { return std::string(COCOPLAN_SOURCE_DIR) + "/" + rel; }

/// Map with scattered obstacles plus the free cells reachable from one root.
struct RandomWorld {
  GridMap map;
  std::vector<Position> reachable;  // cell centers in the root's component
};

inline RandomWorld random_world(Rng& rng, int w, int h, double res, double density) {
  for (;;) {
    GridMap map(w, h, res);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (rng.chance(density)) map.set_occupied({x, y});
    const auto free = map.free_cells();
    if (free.size() < static_cast<std::size_t>(w * h) / 2) continue;
    const Cell root = free[static_cast<std::size_t>(rng.integer(0, static_cast<int>(free.size()) - 1))];
    const auto field = distance_field(root, map);
    RandomWorld world{map, {}};
    for (const Cell& c : free)
      if (std::isfinite(field[map.index(c)])) world.reachable.push_back(map.center(c));
    if (world.reachable.size() * 2 >= free.size()) return world;
  }
}

/// A U-shaped wall opening upward, centered in an empty map.
inline GridMap u_wall_map() {
  GridMap map(12, 12, 1.0);
  for (int x = 3; x <= 8; ++x) map.set_occupied({x, 8});
  for (int y = 3; y <= 8; ++y) {
    map.set_occupied({3, y});
    map.set_occupied({8, y});
  }
  return map;
}

// ---------------------------------------------------------------------------
// Planning instances

struct InstanceShape {
  int min_agents{2}, max_agents{3};
  int min_tasks{2}, max_tasks{5};
  double relation_chance{0.3};
  double multi_agent_chance{0.25};
  double completed_chance{0.2};
};

struct PlanningInstance {
  RandomWorld world;
  PlanningProblem problem;
};

inline PlanningInstance random_instance(Rng& rng, const InstanceShape& shape = {}) {
  PlanningInstance inst{random_world(rng, 10, 10, 1.0, 0.12), {}};
  auto& p = inst.problem;
  p.now = rng.chance(0.5) ? 0.0 : rng.uniform(0.0, 20.0);
  p.comm = CommParams{};
  p.comm.threshold = -34.0 - rng.uniform(0.0, 4.0);  // 5 to 8 m free-space range
  const int n_agents = rng.integer(shape.min_agents, shape.max_agents);
  for (int i = 0; i < n_agents; ++i) {
    AgentSnapshot a;
    a.position = rng.pick(inst.world.reachable);
    a.v_max = rng.uniform(0.8, 2.0);
    a.capabilities = {0};
    if (rng.chance(0.6)) a.capabilities.push_back(1);
    a.available_at = p.now;
    p.agents.push_back(a);
  }
  const int n_tasks = rng.integer(shape.min_tasks, shape.max_tasks);
  for (int k = 0; k < n_tasks; ++k) {
    Task t;
    t.id = 10 + k;
    t.region_center = rng.pick(inst.world.reachable);
    t.duration = rng.uniform(1.0, 6.0);
    if (rng.chance(shape.multi_agent_chance)) t.requirements = {{2, 0}};
    else if (rng.chance(0.3)) t.requirements = {{1, 1}};
    else t.requirements = {{1, 0}};
    p.tasks.push_back(t);
  }
  // An already finished task some relations may point at.
  const TaskId done_id = 99;
  const bool has_done = rng.chance(shape.completed_chance);
  if (has_done) p.completed.push_back({done_id, p.now - 5.0, p.now - rng.uniform(0.0, 2.0)});
  for (int k = 0; k + 1 < n_tasks; ++k) {
    if (!rng.chance(shape.relation_chance)) continue;
    const int kind = rng.integer(0, 2);
    TaskId a = p.tasks[k].id, b = p.tasks[k + 1].id;
    if (rng.chance(0.5)) std::swap(a, b);
    p.relations.push_back({a, b, static_cast<RelationKind>(kind)});
  }
  if (has_done && n_tasks > 0 && rng.chance(0.7)) {
    const TaskId t = rng.pick(p.tasks).id;
    const auto kind = rng.chance(0.5) ? RelationKind::mutex : RelationKind::precedence;
    p.relations.push_back({done_id, t, kind});
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Exhaustive plan oracle

/// Every agent set of the task's size that covers its requirements.
inline std::vector<std::vector<AgentId>> covering_groups(const Task& t, const std::vector<AgentSnapshot>& agents) {
  std::vector<std::vector<AgentId>> out;
  const int n = static_cast<int>(agents.size());
  const int need = t.agents_required();
  for (int mask = 1; mask < (1 << n); ++mask) {
    if (__builtin_popcount(mask) != need) continue;
    std::vector<AgentId> g;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1) g.push_back(i);
    if (group_covers(g, t.requirements, agents)) out.push_back(g);
  }
  return out;
}

/// Admission rules a plan must meet on top of the executed-interval check.
inline bool oracle_admissible(const AssignedPlan& plan, const PlanningProblem& p) {
  for (const auto& r : p.relations) {
    const bool pf = plan.contains(r.first), ps = plan.contains(r.second);
    const bool df = p.completed_interval(r.first) != nullptr;
    const bool ds = p.completed_interval(r.second) != nullptr;
    switch (r.kind) {
      case RelationKind::precedence:
        if (ps && !pf && !df) return false;
        if (pf && ds) return false;
        break;
      case RelationKind::concurrency:
        if (pf != ps) return false;
        break;
      case RelationKind::mutex: break;
    }
  }
  return true;
}

/// Rate of a fully specified plan, or nullopt when it is infeasible.
inline std::optional<double> oracle_rate(const AssignedPlan& plan, const PlanningProblem& p, const EventRule& rule,
                                         TravelCache& travel) {
  if (!oracle_admissible(plan, p)) return std::nullopt;
  const auto tt = schedule_min_makespan(plan, p, travel);
  if (!tt) return std::nullopt;
  std::vector<ExecutionInterval> ivs(p.completed.begin(), p.completed.end());
  for (const auto& [id, iv] : tt->intervals) ivs.push_back(iv);
  if (!check_schedule(ivs, p.relations).ok) return std::nullopt;
  const auto ev = rule(last_task_state(*tt, p), plan.task_count(), travel);
  if (!ev) return std::nullopt;
  if (plan.task_count() == 0) return 0.0;
  for (const auto& [id, iv] : tt->intervals)
    if (iv.finish > ev->time + 1e-12) return std::nullopt;
  return static_cast<double>(plan.task_count()) / (ev->time - p.now);
}

struct Enumerated {
  AssignedPlan plan;
  double rate;
};

/// Every (subset, group choice, per-agent order) combination that is feasible.
inline std::vector<Enumerated> enumerate_plans(const PlanningProblem& p, const EventRule& rule, TravelCache& travel) {
  std::vector<Enumerated> out;
  const std::size_t n_agents = p.agents.size();
  std::vector<std::vector<std::vector<AgentId>>> options;
  for (const auto& t : p.tasks) options.push_back(covering_groups(t, p.agents));
  std::vector<int> choice(p.tasks.size(), -1);  // -1 = left out

  auto orders = [&](auto&& self, std::vector<std::vector<TaskId>>& seqs, std::size_t agent,
                    const std::map<TaskId, std::vector<AgentId>>& groups) -> void {
    if (agent == n_agents) {
      AssignedPlan plan(n_agents);
      plan.sequences = seqs;
      plan.groups = groups;
      if (auto r = oracle_rate(plan, p, rule, travel)) out.push_back({plan, *r});
      return;
    }
    std::sort(seqs[agent].begin(), seqs[agent].end());
    do {
      self(self, seqs, agent + 1, groups);
    } while (std::next_permutation(seqs[agent].begin(), seqs[agent].end()));
  };

  auto assign = [&](auto&& self, std::size_t k) -> void {
    if (k == p.tasks.size()) {
      std::vector<std::vector<TaskId>> seqs(n_agents);
      std::map<TaskId, std::vector<AgentId>> groups;
      for (std::size_t i = 0; i < p.tasks.size(); ++i) {
        if (choice[i] < 0) continue;
        const auto& g = options[i][static_cast<std::size_t>(choice[i])];
        groups[p.tasks[i].id] = g;
        for (AgentId a : g) seqs[static_cast<std::size_t>(a)].push_back(p.tasks[i].id);
      }
      orders(orders, seqs, 0, groups);
      return;
    }
    for (int c = -1; c < static_cast<int>(options[k].size()); ++c) {
      choice[k] = c;
      self(self, k + 1);
    }
  };
  assign(assign, 0);
  return out;
}

/// True if `ext` keeps every sequence of `base` as a prefix (a tail extension).
inline bool extends(const AssignedPlan& ext, const AssignedPlan& base) {
  for (std::size_t a = 0; a < base.sequences.size(); ++a) {
    const auto& b = base.sequences[a];
    const auto& e = ext.sequences[a];
    if (e.size() < b.size() || !std::equal(b.begin(), b.end(), e.begin())) return false;
  }
  for (const auto& [id, g] : base.groups) {
    auto it = ext.groups.find(id);
    if (it == ext.groups.end() || it->second != g) return false;
  }
  return true;
}

}  // namespace testkit
