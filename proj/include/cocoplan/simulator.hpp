#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cocoplan/baselines.hpp"

namespace cocoplan {

enum class IdlePolicy { explore, hold };

inline const char* to_string(IdlePolicy p) { return p == IdlePolicy::explore ? "explore" : "hold"; }

inline IdlePolicy idle_policy_from_string(const std::string& s) {
  if (s == "explore") return IdlePolicy::explore;
  if (s == "hold") return IdlePolicy::hold;
  throw std::domain_error("unknown idle policy '" + s + "'");
}

struct AgentSpec {
  Position start;
  double v_max{1.0};
  double sensor_range{5.0};
  std::vector<ActionId> capabilities;

  bool operator==(const AgentSpec&) const = default;
};

struct PlannerConfig {
  double budget_s{std::numeric_limits<double>::infinity()};
  std::size_t max_expansions{50};
  double gap{0.5};

  bool operator==(const PlannerConfig&) const = default;
};

struct Scenario {
  std::string name{"scenario"};
  GridMap map{1, 1, 1.0};
  std::vector<AgentSpec> agents;
  CommParams comm;
  std::vector<Task> tasks;
  std::vector<TemporalRelation> relations;
  StrategyConfig strategy;
  PlannerConfig planner;
  IdlePolicy idle{IdlePolicy::explore};
  double explore_radius{8.0};
  double horizon{600.0};
  double dt{0.1};
  std::uint64_t seed{0};

  /// Throws std::domain_error describing the first problem found.
  void validate() const {
    if (agents.empty()) throw std::domain_error("agents: at least one agent is required");
    if (!(horizon > 0.0)) throw std::domain_error("horizon must be > 0");
    if (!(dt > 0.0)) throw std::domain_error("dt must be > 0");
    if (!(explore_radius > 0.0)) throw std::domain_error("explore_radius must be > 0");
    comm.validate();
    std::set<ActionId> actions;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const auto& a = agents[i];
      const std::string who = "agents[" + std::to_string(i) + "]";
      if (!map.free(a.start)) throw std::domain_error(who + ".start is outside the map or on an obstacle");
      if (!(a.v_max > 0.0)) throw std::domain_error(who + ".v_max must be > 0");
      if (!(a.sensor_range > 0.0)) throw std::domain_error(who + ".sensor_range must be > 0");
      actions.insert(a.capabilities.begin(), a.capabilities.end());
    }
    std::set<TaskId> ids;
    for (const auto& t : tasks) {
      const std::string who = "task " + std::to_string(t.id);
      t.validate();
      if (!ids.insert(t.id).second) throw std::domain_error(who + ": duplicate id");
      if (!map.free(t.region_center)) throw std::domain_error(who + ": region center is not a free cell");
      if (t.release_time < 0.0) throw std::domain_error(who + ": negative release time");
      for (const auto& r : t.requirements)
        if (!actions.count(r.action))
          throw std::domain_error(who + ": action " + std::to_string(r.action) + " is not offered by any agent");
    }
    for (const auto& r : relations) {
      if (!ids.count(r.first) || !ids.count(r.second))
        throw std::domain_error("relation " + std::to_string(r.first) + "-" + std::to_string(r.second) +
                                " references an unknown task");
      if (r.first == r.second) throw std::domain_error("relation links task " + std::to_string(r.first) + " to itself");
    }
    strategy.validate(agents.size(), map, dt);
  }

  bool operator==(const Scenario&) const = default;
};

struct SimEvent {
  double time{0.0};
  std::string kind;
  std::string payload;
};

inline std::string format_event(const SimEvent& e) {
  return fmt::format("{:.3f} {} {}", e.time, e.kind, e.payload);
}

struct MetricsRecord {
  std::size_t finished{0};
  std::size_t comm_count{0};
  std::vector<double> comm_intervals;
  std::vector<double> idle_gaps;
  std::vector<double> completion_times;
  /// Interval and idle-gap metrics are undefined for event-free strategies.
  bool has_intervals{true};
  std::size_t violations{0};
  std::size_t planner_nodes{0};
};

struct SimResult {
  std::vector<SimEvent> log;
  MetricsRecord metrics;
  std::vector<ExecutionInterval> completed;
  std::vector<std::string> violation_notes;
};

/// Fixed-step simulation of one strategy on one scenario.
class Simulator {
 public:
  explicit Simulator(Scenario sc) : sc_(std::move(sc)), travel_(sc_.map), rng_(sc_.seed) {
    sc_.validate();
    const double per_s = 1.0 / sc_.dt;
    ticks_per_s_ = std::abs(per_s - std::round(per_s)) < 1e-9 ? std::round(per_s) : 0.0;
    for (auto& t : sc_.tasks) {
      t.region_center = sc_.map.snap(t.region_center);
      t.detected_at.reset();
      task_index_[t.id] = tasks_.size();
      tasks_.push_back(t);
    }
    for (std::size_t i = 0; i < sc_.agents.size(); ++i) {
      Agent a;
      a.id = static_cast<AgentId>(i);
      a.pos = sc_.map.snap(sc_.agents[i].start);
      agents_.push_back(std::move(a));
      snapshots_.push_back({agents_.back().pos, sc_.agents[i].v_max, sc_.agents[i].capabilities, 0.0});
    }
    for (const Cell& c : sc_.map.free_cells()) free_centers_.push_back(sc_.map.center(c));
    blocks_x_ = std::max(1, static_cast<int>(std::ceil(sc_.map.width_m() / kBlock)));
    blocks_y_ = std::max(1, static_cast<int>(std::ceil(sc_.map.height_m() / kBlock)));
    for (auto& a : agents_) a.seen.assign(static_cast<std::size_t>(blocks_x_ * blocks_y_), kNever);
    end_tick_ = tick_at(sc_.horizon);
  }

  SimResult run() {
    switch (sc_.strategy.kind) {
      case StrategyKind::greedy: run_greedy(); break;
      case StrategyKind::ring: run_ring(); break;
      default: run_central(); break;
    }
    finalize();
    return std::move(result_);
  }

 private:
  struct Agent {
    AgentId id{0};
    Position pos;
    std::deque<Position> path;
    std::deque<TaskId> queue;
    std::optional<Position> waypoint;
    std::optional<Position> comm_pos;
    bool busy{false};
    bool departed{false};
    std::set<TaskId> known;
    std::map<TaskId, ExecutionInterval> completed;
    std::set<TaskId> claimed;
    double last_finish{-std::numeric_limits<double>::infinity()};
    double last_meeting{-std::numeric_limits<double>::infinity()};
    std::vector<double> seen;  // per coverage block: last time it was in sensor range
    // chain strategy
    int meet_round{0};
    std::size_t meet_edge{0};
  };

  struct Running {
    double start;
    std::vector<AgentId> group;
  };

  // --- clock --------------------------------------------------------------

  double time_of(long tick) const {
    return ticks_per_s_ > 0 ? static_cast<double>(tick) / ticks_per_s_ : static_cast<double>(tick) * sc_.dt;
  }
  long tick_at(double t) const { return static_cast<long>(std::llround(t / sc_.dt)); }
  double now() const { return time_of(tick_); }

  void log(const std::string& kind, std::string payload) {
    result_.log.push_back({now(), kind, std::move(payload)});
  }
  void violation(std::string note) {
    ++result_.metrics.violations;
    result_.violation_notes.push_back(fmt::format("{:.3f} {}", now(), note));
  }

  const Task& task(TaskId id) const { return tasks_[task_index_.at(id)]; }
  double v(const Agent& a) const { return sc_.agents[a.id].v_max; }

  static std::string pos_str(const Position& p) { return fmt::format("({:.2f},{:.2f})", p.x, p.y); }

  // --- motion and sensing -------------------------------------------------

  static bool same_point(const Position& a, const Position& b) { return distance(a, b) < 1e-9; }

  void steer(Agent& a, const Position& target) {
    if (!a.path.empty() && same_point(a.path.back(), target)) return;
    a.path.clear();
    if (same_point(a.pos, target)) return;
    for (const auto& p : travel_.path(a.pos, target))
      if (!same_point(p, a.pos) || !a.path.empty()) a.path.push_back(p);
    if (a.path.empty() || !same_point(a.path.back(), target)) a.path.push_back(target);
  }

  bool at(const Agent& a, const Position& target) const { return a.path.empty() && same_point(a.pos, target); }

  void move_all() {
    for (auto& a : agents_) {
      if (a.busy) continue;
      double budget = v(a) * sc_.dt;
      while (budget > 0.0 && !a.path.empty()) {
        const Position next = a.path.front();
        const double d = distance(a.pos, next);
        if (d <= budget + 1e-9) {
          a.pos = next;
          a.path.pop_front();
          budget -= d;
          if (a.path.empty() && !a.queue.empty() && same_point(a.pos, task(a.queue.front()).region_center))
            log("arrival", fmt::format("agent={} task={}", a.id, a.queue.front()));
        } else {
          a.pos = {a.pos.x + (next.x - a.pos.x) * budget / d, a.pos.y + (next.y - a.pos.y) * budget / d};
          budget = 0.0;
        }
      }
    }
  }

  // Coverage memory on coarse blocks, so exploration heads for stale areas.
  static constexpr double kBlock = 2.0;
  static constexpr double kNever = -1e18;

  std::size_t block_of(const Position& p) const {
    const int bx = std::clamp(static_cast<int>(p.x / kBlock), 0, blocks_x_ - 1);
    const int by = std::clamp(static_cast<int>(p.y / kBlock), 0, blocks_y_ - 1);
    return static_cast<std::size_t>(by * blocks_x_ + bx);
  }

  void sweep(Agent& a) {
    const double range = sc_.agents[a.id].sensor_range;
    const double t = now();
    for (int by = 0; by < blocks_y_; ++by)
      for (int bx = 0; bx < blocks_x_; ++bx) {
        const Position c{(bx + 0.5) * kBlock, (by + 0.5) * kBlock};
        if (distance(a.pos, c) <= range) a.seen[static_cast<std::size_t>(by * blocks_x_ + bx)] = t;
      }
  }

  void detect_all() {
    const double t = now();
    for (auto& a : agents_) sweep(a);
    for (auto& a : agents_) {
      const double range = sc_.agents[a.id].sensor_range;
      for (auto& task : tasks_) {
        if (task.release_time > t + 1e-9 || a.known.count(task.id) || done_.count(task.id)) continue;
        if (distance(a.pos, task.region_center) > range) continue;
        if (los_obstacle_length(a.pos, task.region_center, sc_.map) > 0.0) continue;
        a.known.insert(task.id);
        if (!task.detected_at) task.detected_at = t;
        log("detection", fmt::format("agent={} task={}", a.id, task.id));
      }
    }
  }

  /// Relations are learned together with either of their tasks.
  std::vector<TemporalRelation> relations_known(const std::set<TaskId>& known) const {
    std::vector<TemporalRelation> out;
    for (const auto& r : sc_.relations)
      if (known.count(r.first) || known.count(r.second)) out.push_back(r);
    return out;
  }

  // --- task execution -----------------------------------------------------

  void finish_tasks() {
    const double t = now();
    std::vector<TaskId> ended;
    for (const auto& [id, run] : running_)
      if (t >= run.start + task(id).duration - 1e-9) ended.push_back(id);
    for (TaskId id : ended) {
      const Running run = running_.at(id);
      running_.erase(id);
      const ExecutionInterval iv{id, run.start, t};
      done_[id] = iv;
      result_.completed.push_back(iv);
      result_.metrics.completion_times.push_back(t);
      for (AgentId m : run.group) {
        auto& a = agents_[m];
        a.busy = false;
        a.known.insert(id);
        a.completed[id] = iv;
        a.last_finish = t;
        if (!a.queue.empty() && a.queue.front() == id) a.queue.pop_front();
      }
      log("execution_end", fmt::format("task={}", id));
    }
  }

  bool member_ready(AgentId m, TaskId id) const {
    const auto& a = agents_[m];
    return !a.busy && !a.queue.empty() && a.queue.front() == id && at(a, task(id).region_center);
  }

  bool group_ready(TaskId id) const {
    const auto it = group_of_.find(id);
    if (it == group_of_.end()) return false;
    return std::all_of(it->second.begin(), it->second.end(), [&](AgentId m) { return member_ready(m, id); });
  }

  /// Physical admission of a start at the current tick.
  bool relations_allow(TaskId id) const {
    const double t = now();
    for (const auto& r : sc_.relations) {
      if (!r.involves(id)) continue;
      const TaskId other = r.other(id);
      switch (r.kind) {
        case RelationKind::precedence:
          if (r.second == id) {
            auto d = done_.find(other);
            if (d == done_.end() || d->second.finish > t) {
              // Unplanned predecessors never arrive; only wait for planned ones.
              if (group_of_.count(other) || running_.count(other)) return false;
            }
          }
          break;
        case RelationKind::mutex: {
          if (running_.count(other)) return false;
          auto d = done_.find(other);
          if (d != done_.end() && !(d->second.finish < t)) return false;
          auto po = planned_start_.find(other);
          auto pm = planned_start_.find(id);
          if (d == done_.end() && po != planned_start_.end() && pm != planned_start_.end() &&
              po->second < pm->second)
            return false;
          break;
        }
        case RelationKind::concurrency: break;
      }
    }
    return true;
  }

  void begin(TaskId id) {
    running_[id] = {now(), group_of_.at(id)};
    for (AgentId m : group_of_.at(id)) agents_[m].busy = true;
    std::string members;
    for (AgentId m : group_of_.at(id)) members += (members.empty() ? "" : ",") + std::to_string(m);
    log("execution_start", fmt::format("task={} agents={}", id, members));
  }

  /// Drops a queued task someone else already ran or is running.
  void skip_taken(Agent& a) {
    while (!a.queue.empty() && !a.busy) {
      const TaskId id = a.queue.front();
      const bool taken = done_.count(id) || (running_.count(id) && !std::count(running_.at(id).group.begin(),
                                                                                running_.at(id).group.end(), a.id));
      if (!taken) break;
      if (done_.count(id)) {
        a.known.insert(id);
        a.completed[id] = done_.at(id);
      }
      a.queue.pop_front();
      a.path.clear();
    }
  }

  void start_tasks() {
    std::set<TaskId> fronts;
    for (const auto& a : agents_)
      if (!a.busy && !a.queue.empty()) fronts.insert(a.queue.front());
    for (TaskId id : fronts) {
      if (running_.count(id) || done_.count(id) || !group_ready(id) || !relations_allow(id)) continue;
      std::vector<TaskId> joint{id};
      bool ok = true;
      for (const auto& r : sc_.relations)
        if (r.kind == RelationKind::concurrency && r.involves(id)) {
          const TaskId other = r.other(id);
          if (running_.count(other) || done_.count(other)) continue;
          if (!group_ready(other) || !relations_allow(other)) ok = false;
          joint.push_back(other);
        }
      if (!ok) continue;
      for (TaskId t : joint)
        if (!running_.count(t)) begin(t);
    }
  }

  void steer_to_work(Agent& a) {
    if (a.busy) return;
    if (!a.queue.empty()) {
      steer(a, task(a.queue.front()).region_center);
    } else if (a.waypoint) {
      if (at(a, *a.waypoint)) a.waypoint.reset();
      else steer(a, *a.waypoint);
    }
  }

  /// Stalest reachable cell near `a` (ties broken at random), skipping
  /// blocks in `taken`. `ok` filters candidates by field index.
  template <class Filter>
  std::optional<Position> stalest(const Agent& a, std::set<std::size_t>* taken, Filter ok) {
    std::vector<Position> best;
    double oldest = std::numeric_limits<double>::infinity();
    std::size_t best_block = 0;
    for (const auto& p : free_centers_) {
      if (same_point(p, a.pos) || distance(p, a.pos) > sc_.explore_radius) continue;
      const auto k = sc_.map.index(sc_.map.cell_of(p));
      if (!ok(k)) continue;
      const std::size_t b = block_of(p);
      if (taken && taken->count(b)) continue;
      const double s = a.seen[b];
      if (s < oldest - 1e-9) {
        oldest = s;
        best.clear();
      }
      if (s <= oldest + 1e-9) best.push_back(p);
    }
    if (best.empty()) return std::nullopt;
    std::uniform_int_distribution<std::size_t> pick(0, best.size() - 1);
    const Position chosen = best[pick(rng_)];
    best_block = block_of(chosen);
    if (taken) taken->insert(best_block);
    return chosen;
  }

  Position explore_waypoint(const Agent& a, std::set<std::size_t>* taken = nullptr) {
    const auto& field = travel_.field_from(a.pos);
    auto wp = stalest(a, taken, [&](std::size_t k) { return std::isfinite(field[k]); });
    return wp.value_or(a.pos);
  }

  /// Detour toward stale ground that still reaches `goal` within `seconds`.
  std::optional<Position> detour_within(const Agent& a, const Position& goal, double seconds,
                                        std::set<std::size_t>* taken) {
    const double reach = seconds * v(a);
    if (reach < 2.0 * sc_.map.resolution()) return std::nullopt;
    const std::vector<double> from_here = travel_.field_from(a.pos);
    const auto& to_goal = travel_.field_from(goal);
    return stalest(a, taken, [&](std::size_t k) { return from_here[k] + to_goal[k] <= reach; });
  }

  // --- central cycle strategies -------------------------------------------

  struct Cycle {
    double event_time{0.0};
    double not_before{-std::numeric_limits<double>::infinity()};
    bool hold{false};
    std::vector<TaskId> tasks;
  };

  void run_central() {
    // Initial rendezvous: immediate if the start positions already link.
    std::vector<Position> starts;
    for (const auto& a : agents_) starts.push_back(a.pos);
    cycle_ = Cycle{};
    if (is_connected(comm_graph(starts, sc_.map, sc_.comm))) {
      for (auto& a : agents_) a.comm_pos = a.pos;
    } else {
      LastTaskState last;
      for (const auto& a : agents_) {
        last.finish_time.push_back(0.0);
        last.finish_pos.push_back(a.pos);
        last.v_max.push_back(v(a));
      }
      const CommEvent ev = com_opt(last, travel_, sc_.comm, {.gap = sc_.planner.gap});
      for (std::size_t i = 0; i < agents_.size(); ++i) agents_[i].comm_pos = ev.positions[i];
      cycle_.event_time = ev.time;
    }
    if (sc_.strategy.kind == StrategyKind::fimr) cycle_.not_before = 0.0;

    for (tick_ = 0; tick_ <= end_tick_; ++tick_) {
      if (tick_ > 0) move_all();
      detect_all();
      finish_tasks();
      start_tasks();
      for (auto& a : agents_) steer_to_work(a);
      head_to_meeting();
      if (event_due()) {
        central_event();
        // new plans take effect on the event tick itself
        start_tasks();
        for (auto& a : agents_) steer_to_work(a);
        head_to_meeting();
      }
    }
  }

  void head_to_meeting() {
    const double margin = 2.0 * sc_.dt;
    std::set<std::size_t> taken;
    for (auto& a : agents_) {
      if (a.busy || !a.queue.empty() || a.waypoint || !a.comm_pos || a.departed) continue;
      // Spare time before the meeting is spent looking around.
      if (sc_.idle == IdlePolicy::explore && !cycle_.hold) {
        const double spare = cycle_.event_time - now() - 2.0 * margin;
        if (auto wp = detour_within(a, *a.comm_pos, spare, &taken)) {
          a.waypoint = wp;
          steer(a, *wp);
          continue;
        }
      }
      const double leg = travel_.time(a.pos, *a.comm_pos, v(a));
      if (now() + leg + margin >= cycle_.event_time - 1e-9 || at(a, *a.comm_pos)) {
        steer(a, *a.comm_pos);
        a.departed = true;
      }
    }
  }

  bool event_due() const {
    for (const auto& a : agents_)
      if (a.busy || !a.queue.empty() || a.waypoint || !a.comm_pos || !at(a, *a.comm_pos)) return false;
    if (now() < cycle_.not_before - 1e-9) return false;
    if (cycle_.hold) {
      for (const auto& a : agents_)
        for (TaskId id : a.known)
          if (!team_known_.count(id)) return true;
      return false;
    }
    return true;
  }

  void central_event() {
    const double t = now();
    std::vector<Position> meet;
    for (const auto& a : agents_) meet.push_back(a.pos);
    if (!is_connected(comm_graph(meet, sc_.map, sc_.comm))) violation("comm event graph is disconnected");

    auto& m = result_.metrics;
    if (m.comm_count > 0) m.comm_intervals.push_back(t - last_event_);
    ++m.comm_count;
    last_event_ = t;
    std::string payload;
    for (const auto& a : agents_) payload += fmt::format("{}{}:{}", payload.empty() ? "" : " ", a.id, pos_str(a.pos));
    log("comm_event", payload);

    // Per-cycle check: every task of the closing cycle ran to completion before now.
    double last_finish = -std::numeric_limits<double>::infinity();
    for (TaskId id : cycle_.tasks) {
      auto d = done_.find(id);
      if (d == done_.end() || d->second.finish > t + 1e-9) violation(fmt::format("task {} missed its cycle", id));
      else last_finish = std::max(last_finish, d->second.finish);
    }
    if (!cycle_.tasks.empty()) m.idle_gaps.push_back(t - last_finish);

    for (const auto& a : agents_) team_known_.insert(a.known.begin(), a.known.end());
    std::vector<Agent*> everyone;
    for (auto& a : agents_) everyone.push_back(&a);
    merge_knowledge(everyone);
    for (auto& a : agents_) {
      a.known = team_known_;
      for (const auto& [id, iv] : done_) a.completed[id] = iv;
      a.departed = false;
    }
    group_of_.clear();
    planned_start_.clear();
    replan();
  }

  void replan() {
    const double t = now();
    std::vector<Task> pending;
    for (TaskId id : team_known_)
      if (!done_.count(id)) pending.push_back(task(id));

    bool plan_now = !pending.empty();
    if (sc_.strategy.kind == StrategyKind::fix && static_cast<int>(pending.size()) < *sc_.strategy.threshold_n)
      plan_now = false;

    std::optional<double> fixed;
    if (sc_.strategy.kind == StrategyKind::fimr) fixed = next_fixed_time(t, *sc_.strategy.interval);

    if (plan_now) {
      PlanningProblem problem;
      problem.now = t;
      for (std::size_t i = 0; i < agents_.size(); ++i) {
        auto snap = snapshots_[i];
        snap.position = agents_[i].pos;
        snap.available_at = t;
        problem.agents.push_back(std::move(snap));
      }
      problem.tasks = pending;
      problem.relations = relations_known(team_known_);
      for (const auto& [id, iv] : done_) problem.completed.push_back(iv);
      problem.comm = sc_.comm;

      PlannerOptions opt;
      opt.budget_s = sc_.planner.budget_s;
      opt.max_expansions = sc_.planner.max_expansions;
      const auto result = cocoplan(problem, make_rule(fixed), travel_, opt);
      result_.metrics.planner_nodes += result.stats.generated;
      const auto& plan = result.plan;
      if (plan.task_count() > 0) {
        adopt(plan, problem);
        return;
      }
    }
    idle_cycle(fixed);
  }

  EventRule make_rule(std::optional<double> fixed) const {
    const ComOptOptions copt{.gap = sc_.planner.gap};
    switch (sc_.strategy.kind) {
      case StrategyKind::fpmr: return fixed_point_rule(sc_.map.snap(*sc_.strategy.fixed_point));
      case StrategyKind::frdt: return leader_rule(*sc_.strategy.leader, sc_.comm);
      case StrategyKind::fimr: return fixed_time_rule(*fixed, sc_.dt, sc_.comm, copt);
      default: return comopt_rule(sc_.comm, copt);
    }
  }

  void adopt(const CollectivePlan& plan, const PlanningProblem& problem) {
    cycle_ = Cycle{};
    cycle_.event_time = plan.event.time;
    if (sc_.strategy.kind == StrategyKind::fimr) cycle_.not_before = plan.event.time;
    for (const auto& [id, group] : plan.assignment.groups) {
      cycle_.tasks.push_back(id);
      group_of_[id] = group;
      planned_start_[id] = plan.timetable.intervals.at(id).start;
    }
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      auto& a = agents_[i];
      a.queue.assign(plan.assignment.sequences[i].begin(), plan.assignment.sequences[i].end());
      a.comm_pos = plan.event.positions[i];
      a.waypoint.reset();
      a.path.clear();
    }
    // The planned timetable itself must already be feasible.
    std::vector<ExecutionInterval> ivs(problem.completed.begin(), problem.completed.end());
    for (const auto& [id, iv] : plan.timetable.intervals) {
      ivs.push_back(iv);
      if (iv.finish > plan.event.time + 1e-9) violation(fmt::format("planned task {} ends after the event", id));
    }
    if (!check_schedule(ivs, problem.relations).ok) violation("planned timetable breaks a relation");
    if (!is_connected(comm_graph(plan.event.positions, sc_.map, sc_.comm)))
      violation("planned comm event is disconnected");

    std::string ids;
    for (TaskId id : cycle_.tasks) ids += (ids.empty() ? "" : ",") + std::to_string(id);
    log("replanned", fmt::format("tasks={} event={:.3f}", ids.empty() ? "-" : ids, plan.event.time));
  }

  void idle_cycle(std::optional<double> fixed) {
    cycle_ = Cycle{};
    for (auto& a : agents_) {
      a.queue.clear();
      a.waypoint.reset();
      a.comm_pos = a.pos;
    }
    if (sc_.idle == IdlePolicy::explore) {
      LastTaskState last;
      std::vector<Position> wps;
      std::set<std::size_t> taken;
      for (const auto& a : agents_) {
        const Position wp = explore_waypoint(a, &taken);
        wps.push_back(wp);
        last.finish_time.push_back(now() + travel_.time(a.pos, wp, v(a)));
        last.finish_pos.push_back(wp);
        last.v_max.push_back(v(a));
      }
      const CommEvent ev = com_opt(last, travel_, sc_.comm, {.gap = sc_.planner.gap});
      if (!fixed || ev.time + fixed_time_slack(sc_.dt, 0) <= *fixed) {
        for (std::size_t i = 0; i < agents_.size(); ++i) {
          agents_[i].waypoint = wps[i];
          agents_[i].comm_pos = ev.positions[i];
        }
        cycle_.event_time = fixed ? *fixed : ev.time;
      }
    } else if (!fixed) {
      cycle_.hold = true;
    }
    if (fixed) {
      cycle_.event_time = *fixed;
      cycle_.not_before = *fixed;
    }
    log("replanned", fmt::format("tasks=- event={}", cycle_.hold ? "on-detection" : fmt::format("{:.3f}", cycle_.event_time)));
  }

  // --- pairwise chain -----------------------------------------------------

  void run_ring() {
    std::vector<AgentId> order = sc_.strategy.ring_order.value_or(std::vector<AgentId>{});
    if (order.empty())
      for (std::size_t i = 0; i < agents_.size(); ++i) order.push_back(static_cast<AgentId>(i));
    std::vector<Position> starts;
    for (const auto& a : agents_) starts.push_back(a.pos);
    ring_ = make_ring(order, starts, sc_.map);
    for (auto& a : agents_) set_next_meeting(a, 0);

    for (tick_ = 0; tick_ <= end_tick_; ++tick_) {
      if (tick_ > 0) move_all();
      detect_all();
      finish_tasks();
      for (auto& a : agents_) skip_taken(a);
      start_tasks();
      for (auto& a : agents_) {
        steer_to_work(a);
        if (!a.busy && a.queue.empty() && !a.waypoint) steer(a, *a.comm_pos);
      }
      for (std::size_t k = 0; k < ring_.edges(); ++k) {
        const auto [p, q] = ring_.edge(k);
        auto& a = agents_[p];
        auto& b = agents_[q];
        const bool waiting = a.meet_edge == k && b.meet_edge == k && a.meet_round == b.meet_round &&
                             a.queue.empty() && b.queue.empty() && !a.busy && !b.busy && !a.waypoint &&
                             !b.waypoint && at(a, *a.comm_pos) && at(b, *b.comm_pos);
        if (waiting) {
          ring_meeting(a, b);
          steer_to_work(a);
          steer_to_work(b);
        }
      }
    }
  }

  void set_next_meeting(Agent& a, int round) {
    const auto [r, e] = ring_.next_meeting(a.id, round);
    a.meet_round = r;
    a.meet_edge = e;
    a.comm_pos = ring_.meeting_points[e];
  }

  void ring_meeting(Agent& a, Agent& b) {
    const double t = now();
    auto& m = result_.metrics;
    if (m.comm_count > 0) m.comm_intervals.push_back(t - last_event_);
    ++m.comm_count;
    last_event_ = t;
    log("comm_event", fmt::format("{}:{} {}:{}", a.id, pos_str(a.pos), b.id, pos_str(b.pos)));
    const double gap_from = std::max(a.last_finish > a.last_meeting ? a.last_finish : -1.0,
                                     b.last_finish > b.last_meeting ? b.last_finish : -1.0);
    if (gap_from >= 0.0) m.idle_gaps.push_back(t - gap_from);
    a.last_meeting = b.last_meeting = t;

    merge_knowledge({&a, &b});
    const int round = a.meet_round;
    set_next_meeting(a, round + 1);
    set_next_meeting(b, round + 1);

    // Pair planning over what these two know.
    std::vector<Agent*> pair{&a, &b};
    PlanningProblem problem;
    problem.now = t;
    for (Agent* x : pair) {
      auto snap = snapshots_[x->id];
      snap.position = x->pos;
      snap.available_at = t;
      problem.agents.push_back(std::move(snap));
    }
    const auto relations = relations_known(a.known);
    for (TaskId id : a.known) {
      if (a.completed.count(id) || a.claimed.count(id)) continue;
      if (!locally_safe(id, relations, a.completed)) continue;
      problem.tasks.push_back(task(id));
    }
    for (const auto& [id, iv] : a.completed) problem.completed.push_back(iv);
    problem.relations = relations;
    problem.comm = sc_.comm;

    std::vector<std::string> planned;
    if (!problem.tasks.empty()) {
      PlannerOptions opt;
      opt.budget_s = sc_.planner.budget_s;
      opt.max_expansions = sc_.planner.max_expansions;
      const auto result = cocoplan(problem, next_meeting_rule({*a.comm_pos, *b.comm_pos}), travel_, opt);
      m.planner_nodes += result.stats.generated;
      const auto& plan = result.plan;
      for (const auto& [id, group] : plan.assignment.groups) {
        std::vector<AgentId> global;
        for (AgentId local : group) global.push_back(pair[local]->id);
        group_of_[id] = global;
        a.claimed.insert(id);
        b.claimed.insert(id);
        planned.push_back(std::to_string(id));
      }
      for (std::size_t k = 0; k < 2; ++k)
        pair[k]->queue.assign(plan.assignment.sequences[k].begin(), plan.assignment.sequences[k].end());
    }
    std::set<std::size_t> taken;
    for (Agent* x : pair)
      if (x->queue.empty() && sc_.idle == IdlePolicy::explore) x->waypoint = explore_waypoint(*x, &taken);
    std::string ids;
    for (const auto& s : planned) ids += (ids.empty() ? "" : ",") + s;
    log("replanned", fmt::format("agents={},{} tasks={}", a.id, b.id, ids.empty() ? "-" : ids));
  }

  void merge_knowledge(const std::vector<Agent*>& members) {
    std::set<TaskId> known, claimed;
    std::map<TaskId, ExecutionInterval> completed;
    std::vector<double> seen = members.front()->seen;
    for (Agent* x : members) {
      for (std::size_t b = 0; b < seen.size(); ++b) seen[b] = std::max(seen[b], x->seen[b]);
      known.insert(x->known.begin(), x->known.end());
      claimed.insert(x->claimed.begin(), x->claimed.end());
      completed.insert(x->completed.begin(), x->completed.end());
    }
    for (Agent* x : members) {
      x->known = known;
      x->claimed = claimed;
      x->completed = completed;
      x->seen = seen;
    }
  }

  // --- greedy encounters --------------------------------------------------

  void run_greedy() {
    result_.metrics.has_intervals = false;
    std::set<std::pair<int, int>> linked_before;
    for (tick_ = 0; tick_ <= end_tick_; ++tick_) {
      if (tick_ > 0) move_all();
      detect_all();
      finish_tasks();
      for (auto& a : agents_) skip_taken(a);
      start_tasks();

      std::vector<Position> where;
      for (const auto& a : agents_) where.push_back(a.pos);
      const CommGraph g = comm_graph(where, sc_.map, sc_.comm);
      std::set<std::pair<int, int>> linked_now;
      for (const auto& e : g.edges()) {
        linked_now.insert(e);
        if (!linked_before.count(e)) {
          ++result_.metrics.comm_count;
          log("comm_event", fmt::format("{}:{} {}:{}", e.first, pos_str(agents_[e.first].pos), e.second,
                                        pos_str(agents_[e.second].pos)));
        }
      }
      linked_before = std::move(linked_now);

      const auto labels = g.components();
      const int n_comp = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
      for (int c = 0; c < n_comp; ++c) {
        std::vector<Agent*> members;
        for (auto& a : agents_)
          if (labels[a.id] == c) members.push_back(&a);
        if (members.size() > 1) merge_knowledge(members);
        greedy_claims(members);
      }
      for (auto& a : agents_) {
        if (a.busy || !a.queue.empty()) {
          a.waypoint.reset();
        } else if (!a.waypoint || at(a, *a.waypoint)) {
          a.waypoint = explore_waypoint(a);
        }
        steer_to_work(a);
      }
    }
  }

  void greedy_claims(const std::vector<Agent*>& members) {
    std::vector<AgentId> idle;
    for (Agent* x : members)
      if (!x->busy && x->queue.empty()) idle.push_back(x->id);
    if (idle.empty()) return;
    const Agent& lead = *members.front();
    const auto relations = relations_known(lead.known);
    for (TaskId id : lead.known) {
      if (idle.empty()) break;
      if (lead.completed.count(id) || lead.claimed.count(id) || done_.count(id)) continue;
      if (!locally_safe(id, relations, lead.completed)) continue;
      auto group = first_covering_group(task(id), idle, snapshots_);
      if (!group) continue;
      for (Agent* x : members) x->claimed.insert(id);
      group_of_[id] = *group;
      for (AgentId m : *group) {
        agents_[m].queue.push_back(id);
        agents_[m].waypoint.reset();
        idle.erase(std::find(idle.begin(), idle.end(), m));
      }
      std::string who;
      for (AgentId m : *group) who += (who.empty() ? "" : ",") + std::to_string(m);
      log("replanned", fmt::format("agents={} tasks={}", who, id));
    }
  }

  // --- wrap-up ------------------------------------------------------------

  void finalize() {
    auto& m = result_.metrics;
    m.finished = 0;
    for (const auto& iv : result_.completed)
      if (iv.finish <= sc_.horizon + 1e-9) ++m.finished;
    const auto check = check_schedule(result_.completed, sc_.relations);
    if (!check.ok) {
      for (const auto& r : check.violated)
        violation(fmt::format("{} {}-{} violated", to_string(r.kind), r.first, r.second));
    }
  }

  Scenario sc_;
  TravelCache travel_;
  std::mt19937_64 rng_;
  double ticks_per_s_{0.0};
  long tick_{0};
  long end_tick_{0};
  std::vector<Task> tasks_;
  std::map<TaskId, std::size_t> task_index_;
  std::vector<Agent> agents_;
  std::vector<AgentSnapshot> snapshots_;
  std::vector<Position> free_centers_;
  int blocks_x_{1};
  int blocks_y_{1};
  std::map<TaskId, std::vector<AgentId>> group_of_;
  std::map<TaskId, double> planned_start_;
  std::map<TaskId, Running> running_;
  std::map<TaskId, ExecutionInterval> done_;
  std::set<TaskId> team_known_;
  Cycle cycle_;
  RingTopology ring_;
  double last_event_{0.0};
  SimResult result_;
};

inline SimResult simulate(const Scenario& sc) { return Simulator(sc).run(); }

}  // namespace cocoplan
