#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cocoplan/comm.hpp"
#include "cocoplan/tasks.hpp"
#include "cocoplan/travel.hpp"

namespace cocoplan {

/// Strict gap between mutually exclusive tasks; closed intervals may not touch.
inline constexpr double kMutexSeparation = 1e-6;

/// Mutex pairs up to this count are oriented by exhaustive enumeration.
inline constexpr int kExhaustiveMutexPairs = 10;

struct AgentSnapshot {
  Position position;
  double v_max{2.0};
  std::vector<ActionId> capabilities;
  double available_at{0.0};

  bool can(ActionId a) const {
    return std::find(capabilities.begin(), capabilities.end(), a) != capabilities.end();
  }
};

/// Everything a planning call sees: the team at cycle start, the detected
/// pending tasks, known relations and the intervals of already completed tasks.
struct PlanningProblem {
  double now{0.0};
  std::vector<AgentSnapshot> agents;
  std::vector<Task> tasks;
  std::vector<TemporalRelation> relations;
  std::vector<ExecutionInterval> completed;
  CommParams comm;

  const Task& task(TaskId id) const {
    for (const auto& t : tasks)
      if (t.id == id) return t;
    throw std::domain_error("unknown task " + std::to_string(id));
  }
  bool has_task(TaskId id) const {
    return std::any_of(tasks.begin(), tasks.end(), [&](const Task& t) { return t.id == id; });
  }
  const ExecutionInterval* completed_interval(TaskId id) const {
    for (const auto& iv : completed)
      if (iv.task == id) return &iv;
    return nullptr;
  }
};

/// Per-agent task order plus the agent group executing each task.
struct AssignedPlan {
  std::vector<std::vector<TaskId>> sequences;
  std::map<TaskId, std::vector<AgentId>> groups;

  explicit AssignedPlan(std::size_t agents = 0) : sequences(agents) {}

  std::size_t task_count() const { return groups.size(); }
  bool contains(TaskId t) const { return groups.count(t) != 0; }

  /// Appends `task` to the tail of every member's sequence.
  void append(TaskId task, const std::vector<AgentId>& group) {
    groups[task] = group;
    for (AgentId a : group) sequences.at(a).push_back(task);
  }

  friend bool operator==(const AssignedPlan&, const AssignedPlan&) = default;
};

struct Timetable {
  std::map<TaskId, ExecutionInterval> intervals;
  std::vector<std::vector<double>> arrivals;  // per agent, per sequence slot
  std::vector<double> agent_finish;
  std::vector<Position> agent_finish_pos;
  double makespan{0.0};
};

/// True iff the group can be split into disjoint teams meeting every requirement.
inline bool group_covers(const std::vector<AgentId>& group, const std::vector<Requirement>& reqs,
                         const std::vector<AgentSnapshot>& agents) {
  std::vector<char> used(group.size(), 0);
  auto rec = [&](auto&& self, std::size_t r, int remaining, std::size_t from) -> bool {
    if (r == reqs.size()) return true;
    if (remaining == 0) return self(self, r + 1, r + 1 < reqs.size() ? reqs[r + 1].count : 0, 0);
    for (std::size_t k = from; k < group.size(); ++k) {
      if (used[k] || !agents.at(group[k]).can(reqs[r].action)) continue;
      used[k] = 1;
      if (self(self, r, remaining - 1, k + 1)) return true;
      used[k] = 0;
    }
    return false;
  };
  if (reqs.empty()) return false;
  return rec(rec, 0, reqs[0].count, 0);
}

namespace detail {

struct DiffEdge {
  int from;
  int to;
  double weight;  // start[to] >= start[from] + weight
};

// Earliest starts satisfying all edges and lower bounds; nullopt on a positive cycle.
inline std::optional<std::vector<double>> longest_path(std::vector<double> start,
                                                       const std::vector<DiffEdge>& edges) {
  const std::size_t n = start.size();
  for (std::size_t round = 0; round <= n; ++round) {
    bool changed = false;
    for (const auto& e : edges) {
      const double cand = start[e.from] + e.weight;
      if (cand > start[e.to] + 1e-12) {
        start[e.to] = cand;
        changed = true;
      }
    }
    if (!changed) return start;
  }
  return std::nullopt;
}

}  // namespace detail

/// Earliest-start timetable for a fixed assignment and order. Every task
/// starts once all its agents are in place; consecutive tasks of an agent are
/// separated by travel; precedence, concurrency (same start) and mutex
/// (oriented, minimum makespan) constraints hold. nullopt when infeasible.
inline std::optional<Timetable> schedule_min_makespan(const AssignedPlan& plan,
                                                      const PlanningProblem& problem,
                                                      TravelCache& travel) {
  const std::size_t n_agents = problem.agents.size();
  if (plan.sequences.size() != n_agents)
    throw std::domain_error("plan has " + std::to_string(plan.sequences.size()) +
                            " sequences for " + std::to_string(n_agents) + " agents");

  std::vector<TaskId> ids;
  std::unordered_map<TaskId, int> slot;
  for (const auto& [id, group] : plan.groups) {
    slot[id] = static_cast<int>(ids.size());
    ids.push_back(id);
  }
  std::vector<const Task*> task_of;
  for (TaskId id : ids) task_of.push_back(&problem.task(id));

  for (const auto& [id, group] : plan.groups) {
    const Task& t = problem.task(id);
    if (!group_covers(group, t.requirements, problem.agents))
      throw std::domain_error("group for task " + std::to_string(id) + " lacks required capabilities");
    for (AgentId a : group) {
      const auto& seq = plan.sequences.at(a);
      if (std::count(seq.begin(), seq.end(), id) != 1)
        throw std::domain_error("task " + std::to_string(id) + " must appear once in agent " +
                                std::to_string(a) + "'s sequence");
    }
  }
  for (std::size_t a = 0; a < n_agents; ++a)
    for (TaskId id : plan.sequences[a]) {
      auto it = plan.groups.find(id);
      if (it == plan.groups.end() ||
          std::find(it->second.begin(), it->second.end(), static_cast<AgentId>(a)) == it->second.end())
        throw std::domain_error("agent " + std::to_string(a) + " sequences task " +
                                std::to_string(id) + " outside its group");
    }

  const int n = static_cast<int>(ids.size());
  std::vector<double> lower(n, problem.now);
  std::vector<detail::DiffEdge> edges;

  for (std::size_t a = 0; a < n_agents; ++a) {
    const auto& agent = problem.agents[a];
    int prev = -1;
    for (TaskId id : plan.sequences[a]) {
      const int s = slot.at(id);
      if (prev < 0) {
        const double tt = travel.time(agent.position, task_of[s]->region_center, agent.v_max);
        if (!std::isfinite(tt)) return std::nullopt;
        lower[s] = std::max(lower[s], std::max(agent.available_at, problem.now) + tt);
      } else {
        const double tt = travel.time(task_of[prev]->region_center, task_of[s]->region_center, agent.v_max);
        if (!std::isfinite(tt)) return std::nullopt;
        edges.push_back({prev, s, task_of[prev]->duration + tt});
      }
      prev = s;
    }
  }

  std::vector<std::pair<int, int>> mutex_pairs;
  for (const auto& rel : problem.relations) {
    const auto ip = slot.find(rel.first);
    const auto iq = slot.find(rel.second);
    const bool hp = ip != slot.end();
    const bool hq = iq != slot.end();
    if (hp && hq) {
      const int p = ip->second, q = iq->second;
      switch (rel.kind) {
        case RelationKind::precedence: edges.push_back({p, q, task_of[p]->duration}); break;
        case RelationKind::concurrency:
          edges.push_back({p, q, 0.0});
          edges.push_back({q, p, 0.0});
          break;
        case RelationKind::mutex: mutex_pairs.emplace_back(std::min(p, q), std::max(p, q)); break;
      }
      continue;
    }
    if (!hp && !hq) continue;
    const TaskId planned = hp ? rel.first : rel.second;
    const TaskId other = hp ? rel.second : rel.first;
    const int s = slot.at(planned);
    const ExecutionInterval* done = problem.completed_interval(other);
    if (!done) continue;
    switch (rel.kind) {
      case RelationKind::precedence:
        if (planned == rel.first) return std::nullopt;  // successor already ran
        lower[s] = std::max(lower[s], done->finish);
        break;
      case RelationKind::mutex: lower[s] = std::max(lower[s], done->finish + kMutexSeparation); break;
      case RelationKind::concurrency: return std::nullopt;
    }
  }
  std::sort(mutex_pairs.begin(), mutex_pairs.end());
  mutex_pairs.erase(std::unique(mutex_pairs.begin(), mutex_pairs.end()), mutex_pairs.end());

  auto makespan_of = [&](const std::vector<double>& start) {
    double m = problem.now;
    for (int i = 0; i < n; ++i) m = std::max(m, start[i] + task_of[i]->duration);
    return m;
  };
  auto oriented = [&](std::size_t k, bool flip) {
    auto [p, q] = mutex_pairs[k];
    if (flip) std::swap(p, q);
    return detail::DiffEdge{p, q, task_of[p]->duration + kMutexSeparation};
  };

  std::optional<std::vector<double>> best;
  double best_makespan = std::numeric_limits<double>::infinity();
  const int m = static_cast<int>(mutex_pairs.size());
  if (m <= kExhaustiveMutexPairs) {
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
      auto all = edges;
      for (int k = 0; k < m; ++k) all.push_back(oriented(k, (mask >> k) & 1u));
      auto start = detail::longest_path(lower, all);
      if (!start) continue;
      const double ms = makespan_of(*start);
      if (ms < best_makespan - 1e-12) {
        best_makespan = ms;
        best = std::move(start);
      }
    }
  } else {
    // Orient pairs one at a time, earliest current start first.
    auto all = edges;
    auto start = detail::longest_path(lower, all);
    if (!start) return std::nullopt;
    std::vector<char> done(m, 0);
    for (int step = 0; step < m; ++step) {
      int pick = -1;
      double key = std::numeric_limits<double>::infinity();
      for (int k = 0; k < m; ++k) {
        if (done[k]) continue;
        const double kk = std::min((*start)[mutex_pairs[k].first], (*start)[mutex_pairs[k].second]);
        if (kk < key - 1e-12) {
          key = kk;
          pick = k;
        }
      }
      done[pick] = 1;
      const auto [p, q] = mutex_pairs[pick];
      const bool flip = (*start)[q] < (*start)[p] - 1e-12 ||
                        (std::abs((*start)[q] - (*start)[p]) <= 1e-12 && ids[q] < ids[p]);
      auto trial = all;
      trial.push_back(oriented(pick, flip));
      auto next = detail::longest_path(lower, trial);
      if (!next) {
        trial.back() = oriented(pick, !flip);
        next = detail::longest_path(lower, trial);
        if (!next) return std::nullopt;
      }
      all = std::move(trial);
      start = std::move(next);
    }
    best = std::move(start);
    best_makespan = makespan_of(*best);
  }
  if (!best) return std::nullopt;

  Timetable tt;
  tt.makespan = best_makespan;
  for (int i = 0; i < n; ++i)
    tt.intervals[ids[i]] = {ids[i], (*best)[i], (*best)[i] + task_of[i]->duration};
  tt.arrivals.resize(n_agents);
  tt.agent_finish.resize(n_agents);
  tt.agent_finish_pos.resize(n_agents);
  for (std::size_t a = 0; a < n_agents; ++a) {
    const auto& agent = problem.agents[a];
    double t = std::max(agent.available_at, problem.now);
    Position p = agent.position;
    for (TaskId id : plan.sequences[a]) {
      const Task& task = problem.task(id);
      t += travel.time(p, task.region_center, agent.v_max);
      tt.arrivals[a].push_back(t);
      t = tt.intervals[id].finish;
      p = task.region_center;
    }
    tt.agent_finish[a] = t;
    tt.agent_finish_pos[a] = p;
  }
  return tt;
}

}  // namespace cocoplan
