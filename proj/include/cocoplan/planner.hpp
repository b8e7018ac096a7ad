#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cocoplan/com_opt.hpp"
#include "cocoplan/scheduler.hpp"

namespace cocoplan {

/// Decides the next communication event from the agents' last-task states.
/// Returns nullopt when no admissible event exists for this plan.
using EventRule =
    std::function<std::optional<CommEvent>(const LastTaskState&, std::size_t task_count, TravelCache&)>;

/// Full candidate plan: assignment, timetable, next event and its rate.
struct CollectivePlan {
  AssignedPlan assignment;
  Timetable timetable;
  CommEvent event;
  double rate{0.0};

  std::size_t task_count() const { return assignment.task_count(); }
};

/// Tasks completed by the event per second of the cycle.
inline double objective_rate(const CollectivePlan& plan, double cycle_start) {
  std::size_t done = 0;
  for (const auto& [id, iv] : plan.timetable.intervals)
    if (iv.finish <= plan.event.time) ++done;
  if (done == 0) return 0.0;
  if (!(plan.event.time > cycle_start))
    throw std::domain_error("objective_rate: event must come after the cycle start");
  return static_cast<double>(done) / (plan.event.time - cycle_start);
}

inline LastTaskState last_task_state(const Timetable& tt, const PlanningProblem& problem) {
  LastTaskState last;
  last.finish_time = tt.agent_finish;
  last.finish_pos = tt.agent_finish_pos;
  for (const auto& a : problem.agents) last.v_max.push_back(a.v_max);
  return last;
}

// ---------------------------------------------------------------------------
// Event rules

/// With no tasks the team just stays where it is if that is already connected.
inline std::optional<CommEvent> stay_if_connected(const LastTaskState& last, double time,
                                                  const GridMap& map, const CommParams& comm) {
  if (!is_connected(comm_graph(last.finish_pos, map, comm))) return std::nullopt;
  return CommEvent{time, last.finish_pos};
}

inline EventRule comopt_rule(CommParams comm, ComOptOptions opt = {}) {
  return [comm, opt](const LastTaskState& last, std::size_t count,
                     TravelCache& travel) -> std::optional<CommEvent> {
    if (count == 0) {
      const double t = *std::max_element(last.finish_time.begin(), last.finish_time.end());
      if (auto ev = stay_if_connected(last, t, travel.map(), comm)) return ev;
    }
    try {
      return com_opt(last, travel, comm, opt);
    } catch (const Unreachable&) {
      return std::nullopt;
    }
  };
}

// ---------------------------------------------------------------------------
// Search state

struct PlanNode {
  std::size_t id{0};
  int depth{0};
  AssignedPlan plan;
  double lb{0.0};
  double ub{0.0};
};

struct PlannerOptions {
  double budget_s{std::numeric_limits<double>::infinity()};
  std::size_t max_expansions{std::numeric_limits<std::size_t>::max()};
  bool record_nodes{false};
};

struct NodeRecord {
  AssignedPlan plan;
  double lb;
  double ub;
};

struct PlannerStats {
  std::size_t generated{0};
  std::size_t expanded{0};
  std::size_t pruned{0};
  double elapsed_s{0.0};
  bool exhausted{false};
  std::vector<double> incumbent_history;   // LB* after each extraction
  std::vector<double> extracted_ub;        // UB of each extracted node
  std::vector<NodeRecord> nodes;           // only with record_nodes
};

struct PlannerResult {
  CollectivePlan plan;
  PlannerStats stats;
};

/// Precomputed, per-call view of a planning problem.
class PlanningContext {
 public:
  PlanningContext(const PlanningProblem& problem, EventRule rule, TravelCache& travel)
      : problem_(problem), rule_(std::move(rule)), travel_(travel) {
    for (std::size_t k = 0; k < problem.tasks.size(); ++k) {
      const Task& t = problem.tasks[k];
      t.validate();
      index_[t.id] = k;
    }
    groups_.resize(problem.tasks.size());
    for (std::size_t k = 0; k < problem.tasks.size(); ++k) groups_[k] = enumerate_groups(problem.tasks[k]);
    for (const auto& rel : problem.relations) {
      if (rel.first == rel.second) throw std::domain_error("relation links a task to itself");
      if (index_.count(rel.first)) relations_of_[rel.first].push_back(rel);
      if (index_.count(rel.second)) relations_of_[rel.second].push_back(rel);
    }
  }

  const PlanningProblem& problem() const { return problem_; }
  TravelCache& travel() { return travel_; }
  std::size_t agent_count() const { return problem_.agents.size(); }

  const Task& task(TaskId id) const { return problem_.tasks[index_.at(id)]; }
  bool pending(TaskId id) const { return index_.count(id) != 0; }

  /// Agent sets able to cover a task's requirements, ascending lexicographic.
  const std::vector<std::vector<AgentId>>& groups(TaskId id) const { return groups_[index_.at(id)]; }

  const std::vector<TemporalRelation>& relations_of(TaskId id) const {
    static const std::vector<TemporalRelation> none;
    auto it = relations_of_.find(id);
    return it == relations_of_.end() ? none : it->second;
  }

  /// A task that no completion of any plan could ever admit in this cycle.
  bool permanently_blocked(TaskId id) const {
    if (groups(id).empty()) return true;
    for (const auto& rel : relations_of(id)) {
      const TaskId other = rel.other(id);
      const bool other_pending = pending(other);
      const bool other_done = problem_.completed_interval(other) != nullptr;
      switch (rel.kind) {
        case RelationKind::precedence:
          if (rel.second == id && !other_pending && !other_done) return true;
          if (rel.first == id && other_done) return true;
          break;
        case RelationKind::concurrency:
          if (!other_pending) return true;
          break;
        case RelationKind::mutex: break;
      }
    }
    return false;
  }

  /// Plan-level admission: every planned successor has its predecessors
  /// planned or done, and concurrency partners are planned together.
  bool gates_hold(const AssignedPlan& plan) const {
    for (const auto& [id, group] : plan.groups) {
      for (const auto& rel : relations_of(id)) {
        const TaskId other = rel.other(id);
        if (rel.kind == RelationKind::precedence && rel.second == id) {
          if (!plan.contains(other) && !problem_.completed_interval(other)) return false;
        } else if (rel.kind == RelationKind::concurrency) {
          if (!plan.contains(other)) return false;
        }
      }
    }
    return true;
  }

  std::optional<CollectivePlan> evaluate(const AssignedPlan& plan) {
    if (!gates_hold(plan)) return std::nullopt;
    auto tt = schedule_min_makespan(plan, problem_, travel_);
    if (!tt) return std::nullopt;
    std::vector<ExecutionInterval> ivs;
    for (const auto& [id, iv] : tt->intervals) ivs.push_back(iv);
    for (const auto& iv : problem_.completed) ivs.push_back(iv);
    if (!check_schedule(ivs, problem_.relations).ok) return std::nullopt;
    auto ev = rule_(last_task_state(*tt, problem_), plan.task_count(), travel_);
    if (!ev) return std::nullopt;
    CollectivePlan out{plan, std::move(*tt), std::move(*ev), 0.0};
    out.rate = objective_rate(out, problem_.now);
    return out;
  }

  /// The zero-task plan; falls back to an unconstrained meeting if the rule
  /// rejects it.
  CollectivePlan zero_plan() {
    AssignedPlan empty(agent_count());
    if (auto p = evaluate(empty)) return *p;
    auto tt = *schedule_min_makespan(empty, problem_, travel_);
    auto ev = com_opt(last_task_state(tt, problem_), travel_, problem_.comm);
    return CollectivePlan{empty, std::move(tt), std::move(ev), 0.0};
  }

 private:
  std::vector<std::vector<AgentId>> enumerate_groups(const Task& t) const {
    std::set<std::vector<AgentId>> found;
    std::vector<AgentId> chosen;
    std::vector<char> used(problem_.agents.size(), 0);
    auto rec = [&](auto&& self, std::size_t r, int remaining, AgentId from) -> void {
      if (r == t.requirements.size()) {
        auto g = chosen;
        std::sort(g.begin(), g.end());
        found.insert(std::move(g));
        return;
      }
      if (remaining == 0) {
        const int next = r + 1 < t.requirements.size() ? t.requirements[r + 1].count : 0;
        self(self, r + 1, next, 0);
        return;
      }
      for (AgentId a = from; a < static_cast<AgentId>(problem_.agents.size()); ++a) {
        if (used[a] || !problem_.agents[a].can(t.requirements[r].action)) continue;
        used[a] = 1;
        chosen.push_back(a);
        self(self, r, remaining - 1, a + 1);
        chosen.pop_back();
        used[a] = 0;
      }
    };
    rec(rec, 0, t.requirements.front().count, 0);
    return {found.begin(), found.end()};
  }

  const PlanningProblem& problem_;
  EventRule rule_;
  TravelCache& travel_;
  std::unordered_map<TaskId, std::size_t> index_;
  std::vector<std::vector<std::vector<AgentId>>> groups_;
  std::unordered_map<TaskId, std::vector<TemporalRelation>> relations_of_;
};

// ---------------------------------------------------------------------------
// Search operations

/// Unassigned pending tasks that may be appended to the node's plan now.
inline std::vector<TaskId> get_feasible_tasks(const AssignedPlan& plan, PlanningContext& ctx) {
  std::vector<TaskId> out;
  for (const auto& t : ctx.problem().tasks) {
    if (plan.contains(t.id) || ctx.permanently_blocked(t.id)) continue;
    bool ok = true;
    for (const auto& rel : ctx.relations_of(t.id)) {
      if (rel.kind == RelationKind::precedence && rel.second == t.id) {
        const TaskId p = rel.first;
        if (!plan.contains(p) && !ctx.problem().completed_interval(p)) ok = false;
      }
    }
    if (ok) out.push_back(t.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// One child per eligible agent group, the task appended to each member's tail.
inline std::vector<AssignedPlan> expand_node(const AssignedPlan& plan, TaskId task, PlanningContext& ctx) {
  std::vector<AssignedPlan> children;
  for (const auto& group : ctx.groups(task)) {
    AssignedPlan child = plan;
    child.append(task, group);
    children.push_back(std::move(child));
  }
  return children;
}

namespace detail {

inline Position tail_position(const AssignedPlan& plan, AgentId a, PlanningContext& ctx) {
  const auto& seq = plan.sequences[a];
  return seq.empty() ? ctx.problem().agents[a].position : ctx.task(seq.back()).region_center;
}

// Eq. 5 cost: the slowest member's travel from its current tail to the task.
inline double group_travel_cost(const AssignedPlan& plan, const std::vector<AgentId>& group,
                                const Task& task, PlanningContext& ctx) {
  double worst = 0.0;
  for (AgentId a : group)
    worst = std::max(worst, ctx.travel().time(tail_position(plan, a, ctx), task.region_center,
                                              ctx.problem().agents[a].v_max));
  return worst;
}

}  // namespace detail

struct BoundResult {
  double value{0.0};
  std::optional<CollectivePlan> plan;
};

/// Greedy completion: repeatedly add the (task, group) pair whose slowest
/// member arrives soonest, while the rate keeps improving. Returns the best
/// rate seen with its plan (nullopt plan if none of them was feasible).
inline BoundResult low_bound(const AssignedPlan& start, PlanningContext& ctx) {
  constexpr double kImprove = 1e-9;
  BoundResult best;
  AssignedPlan cur = start;
  std::optional<double> prev;
  if (auto own = ctx.evaluate(cur)) {
    prev = own->rate;
    best.value = own->rate;
    best.plan = std::move(own);
  }
  for (;;) {
    const auto feasible = get_feasible_tasks(cur, ctx);
    if (feasible.empty()) break;
    struct Cand {
      double cost;
      TaskId task;
      const std::vector<AgentId>* group;
    };
    std::vector<Cand> cands;
    for (TaskId t : feasible)
      for (const auto& g : ctx.groups(t))
        cands.push_back({detail::group_travel_cost(cur, g, ctx.task(t), ctx), t, &g});
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.cost != b.cost) return a.cost < b.cost;
      return a.task < b.task;
    });
    std::optional<CollectivePlan> step;
    std::optional<AssignedPlan> next;
    for (const auto& c : cands) {
      if (!std::isfinite(c.cost)) break;
      AssignedPlan trial = cur;
      trial.append(c.task, *c.group);
      step = ctx.evaluate(trial);
      // A plan rejected as a whole may still be a stepping stone (a
      // concurrency partner not yet added); keep it if it schedules.
      if (step || schedule_min_makespan(trial, ctx.problem(), ctx.travel())) {
        next = std::move(trial);
        break;
      }
    }
    if (!next) break;
    if (step) {
      if (prev && step->rate <= *prev + kImprove) break;
      prev = step->rate;
      if (!best.plan || step->rate > best.value) {
        best.value = step->rate;
        best.plan = std::move(step);
      }
    }
    cur = std::move(*next);
  }
  return best;
}

/// Optimistic rate for every plan extending `plan`: no descendant can finish
/// sooner than the node's own makespan, than its total agent-work spread over
/// the team, or than the travel-free earliest completion of its extra tasks.
inline double up_bound(const AssignedPlan& plan, PlanningContext& ctx) {
  const auto& problem = ctx.problem();
  const double now = problem.now;
  const auto tt = schedule_min_makespan(plan, problem, ctx.travel());
  if (!tt) return 0.0;
  const double makespan = tt->makespan;
  const double n_agents = static_cast<double>(ctx.agent_count());

  double assigned_work = 0.0;
  for (const auto& [id, g] : plan.groups) {
    const Task& t = ctx.task(id);
    assigned_work += t.agents_required() * t.duration;
  }
  std::vector<double> work, earliest;
  for (const auto& t : problem.tasks) {
    if (plan.contains(t.id) || ctx.permanently_blocked(t.id)) continue;
    work.push_back(t.agents_required() * t.duration);
    double reach = std::numeric_limits<double>::infinity();
    for (const auto& a : problem.agents) {
      const bool capable = std::any_of(t.requirements.begin(), t.requirements.end(),
                                       [&](const Requirement& r) { return a.can(r.action); });
      if (!capable) continue;
      reach = std::min(reach, std::max(a.available_at - now, 0.0) +
                                  distance(a.position, t.region_center) / a.v_max);
    }
    earliest.push_back(reach + t.duration);
  }
  std::sort(work.begin(), work.end());
  std::sort(earliest.begin(), earliest.end());

  const double base = static_cast<double>(plan.task_count());
  double ub = base > 0 ? base / (makespan - now) : 0.0;
  double work_sum = assigned_work;
  for (std::size_t k = 1; k <= work.size(); ++k) {
    work_sum += work[k - 1];
    const double finish = std::max({makespan, now + work_sum / n_agents, now + earliest[k - 1]});
    ub = std::max(ub, (base + static_cast<double>(k)) / (finish - now));
  }
  return ub;
}

namespace detail {

inline std::string plan_signature(const AssignedPlan& plan) {
  std::string s;
  for (const auto& seq : plan.sequences) {
    for (TaskId t : seq) s += std::to_string(t) + ',';
    s += '|';
  }
  return s;
}

}  // namespace detail

/// Best-first branch and bound over joint task assignments and the next
/// communication event. Anytime: the incumbent is always a feasible plan.
inline PlannerResult cocoplan(const PlanningProblem& problem, const EventRule& rule, TravelCache& travel,
                              const PlannerOptions& opt = {}) {
  using Clock = std::chrono::steady_clock;
  constexpr double kPruneTol = 1e-12;
  const auto started = Clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(Clock::now() - started).count(); };
  auto out_of_budget = [&] { return std::isfinite(opt.budget_s) && elapsed() >= opt.budget_s; };

  if (problem.agents.empty()) throw std::domain_error("cocoplan: empty team");
  PlanningContext ctx(problem, rule, travel);
  PlannerResult result;
  auto& stats = result.stats;

  std::vector<PlanNode> nodes;
  auto cmp = [&](std::size_t a, std::size_t b) {
    const auto& na = nodes[a];
    const auto& nb = nodes[b];
    if (na.ub != nb.ub) return na.ub < nb.ub;
    if (na.depth != nb.depth) return na.depth < nb.depth;
    return na.id > nb.id;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(cmp)> heap(cmp);
  std::unordered_set<std::string> seen;

  CollectivePlan incumbent = ctx.zero_plan();
  double best = incumbent.rate;

  auto make_node = [&](AssignedPlan plan, int depth) -> std::size_t {
    PlanNode node;
    node.id = nodes.size();
    node.depth = depth;
    auto lb = low_bound(plan, ctx);
    node.lb = lb.value;
    node.ub = up_bound(plan, ctx);
    if (lb.plan && lb.value > best) {
      best = lb.value;
      incumbent = std::move(*lb.plan);
    }
    if (opt.record_nodes) stats.nodes.push_back({plan, node.lb, node.ub});
    node.plan = std::move(plan);
    nodes.push_back(std::move(node));
    ++stats.generated;
    return nodes.size() - 1;
  };

  AssignedPlan root_plan(problem.agents.size());
  seen.insert(detail::plan_signature(root_plan));
  heap.push(make_node(std::move(root_plan), 0));

  bool stopped = false;
  while (!heap.empty() && !stopped) {
    if (out_of_budget() || stats.expanded >= opt.max_expansions) {
      stopped = true;
      break;
    }
    const std::size_t idx = heap.top();
    heap.pop();
    stats.extracted_ub.push_back(nodes[idx].ub);
    if (nodes[idx].ub <= best + kPruneTol) {
      ++stats.pruned;
      stats.incumbent_history.push_back(best);
      continue;
    }
    ++stats.expanded;
    const AssignedPlan parent = nodes[idx].plan;
    const int depth = nodes[idx].depth;
    for (TaskId task : get_feasible_tasks(parent, ctx)) {
      for (auto& child : expand_node(parent, task, ctx)) {
        if (!seen.insert(detail::plan_signature(child)).second) continue;
        const std::size_t c = make_node(std::move(child), depth + 1);
        if (nodes[c].ub > best + kPruneTol) heap.push(c);
        else ++stats.pruned;
        if (out_of_budget()) {
          stopped = true;
          break;
        }
      }
      if (stopped) break;
    }
    stats.incumbent_history.push_back(best);
  }
  stats.exhausted = heap.empty() && !stopped;
  stats.elapsed_s = elapsed();
  result.plan = std::move(incumbent);
  return result;
}

}  // namespace cocoplan
