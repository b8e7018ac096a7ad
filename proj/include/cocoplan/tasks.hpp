#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cocoplan/workspace.hpp"

namespace cocoplan {

using TaskId = int;
using AgentId = int;
using ActionId = int;

/// `count` agents must perform `action` together.
struct Requirement {
  int count{1};
  ActionId action{0};

  friend bool operator==(const Requirement&, const Requirement&) = default;
};

struct Task {
  TaskId id{0};
  Position region_center;
  double region_radius{1.0};
  double duration{1.0};
  std::vector<Requirement> requirements;
  double release_time{0.0};
  std::optional<double> detected_at;

  int agents_required() const {
    int n = 0;
    for (const auto& r : requirements) n += r.count;
    return n;
  }

  void validate() const {
    if (!(duration > 0.0))
      throw std::domain_error("task " + std::to_string(id) + ": duration must be > 0");
    if (requirements.empty())
      throw std::domain_error("task " + std::to_string(id) + ": no requirements");
    for (const auto& r : requirements)
      if (r.count < 1)
        throw std::domain_error("task " + std::to_string(id) + ": requirement count must be >= 1");
  }

  friend bool operator==(const Task&, const Task&) = default;
};

enum class RelationKind { precedence, mutex, concurrency };

inline const char* to_string(RelationKind k) {
  switch (k) {
    case RelationKind::precedence: return "precedence";
    case RelationKind::mutex: return "mutex";
    case RelationKind::concurrency: return "concurrency";
  }
  return "?";
}

inline RelationKind relation_kind_from_string(const std::string& s) {
  if (s == "precedence") return RelationKind::precedence;
  if (s == "mutex") return RelationKind::mutex;
  if (s == "concurrency") return RelationKind::concurrency;
  throw std::domain_error("unknown relation kind '" + s + "'");
}

/// precedence: first finishes before second starts. mutex/concurrency are symmetric.
struct TemporalRelation {
  TaskId first{0};
  TaskId second{0};
  RelationKind kind{RelationKind::precedence};

  bool involves(TaskId t) const { return first == t || second == t; }
  TaskId other(TaskId t) const { return first == t ? second : first; }

  friend bool operator==(const TemporalRelation&, const TemporalRelation&) = default;
};

struct ExecutionInterval {
  TaskId task{0};
  double start{0.0};
  double finish{0.0};

  friend bool operator==(const ExecutionInterval&, const ExecutionInterval&) = default;
};

/// Closed-interval intersection test.
inline bool intervals_intersect(const ExecutionInterval& a, const ExecutionInterval& b) {
  return !(a.finish < b.start || b.finish < a.start);
}

/// Marks and returns every released, still-undetected task whose region
/// center is within sensing range and in clear line of sight.
inline std::vector<TaskId> detect_tasks(const Position& agent_pos, double sensor_range,
                                        std::span<Task> tasks, double now, const GridMap& map) {
  if (now < 0.0) throw std::domain_error("detect_tasks: negative time");
  std::vector<TaskId> found;
  for (auto& t : tasks) {
    if (t.detected_at || t.release_time > now) continue;
    if (distance(agent_pos, t.region_center) > sensor_range) continue;
    if (los_obstacle_length(agent_pos, t.region_center, map) > 0.0) continue;
    t.detected_at = now;
    found.push_back(t.id);
  }
  return found;
}

struct ScheduleCheck {
  bool ok{true};
  std::vector<TemporalRelation> violated;
};

/// Checks relations against executed intervals. A relation with exactly one
/// scheduled member is satisfied for precedence/mutex and violated for
/// concurrency; relations with no scheduled member are ignored.
inline ScheduleCheck check_schedule(std::span<const ExecutionInterval> intervals,
                                    std::span<const TemporalRelation> relations) {
  std::unordered_map<TaskId, ExecutionInterval> by_id;
  for (const auto& iv : intervals) {
    if (iv.finish < iv.start)
      throw std::domain_error("interval for task " + std::to_string(iv.task) + " ends before it starts");
    if (!by_id.emplace(iv.task, iv).second)
      throw std::domain_error("task " + std::to_string(iv.task) + " scheduled twice");
  }
  ScheduleCheck out;
  for (const auto& rel : relations) {
    const auto p = by_id.find(rel.first);
    const auto q = by_id.find(rel.second);
    const bool hp = p != by_id.end();
    const bool hq = q != by_id.end();
    bool satisfied = true;
    if (hp && hq) {
      switch (rel.kind) {
        case RelationKind::precedence: satisfied = p->second.finish <= q->second.start; break;
        case RelationKind::mutex: satisfied = !intervals_intersect(p->second, q->second); break;
        case RelationKind::concurrency: satisfied = intervals_intersect(p->second, q->second); break;
      }
    } else if (hp || hq) {
      satisfied = rel.kind != RelationKind::concurrency;
    }
    if (!satisfied) out.violated.push_back(rel);
  }
  out.ok = out.violated.empty();
  return out;
}

/// Same as above, additionally rejecting intervals for unknown tasks.
inline ScheduleCheck check_schedule(std::span<const ExecutionInterval> intervals,
                                    std::span<const TemporalRelation> relations,
                                    std::span<const Task> tasks) {
  for (const auto& iv : intervals) {
    const bool known = std::any_of(tasks.begin(), tasks.end(),
                                   [&](const Task& t) { return t.id == iv.task; });
    if (!known) throw std::domain_error("interval references unknown task " + std::to_string(iv.task));
  }
  return check_schedule(intervals, relations);
}

}  // namespace cocoplan
