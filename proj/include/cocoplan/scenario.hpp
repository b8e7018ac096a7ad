#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include "cocoplan/simulator.hpp"

namespace cocoplan {

/// Bad configuration; `line` is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, int line, const std::string& what)
      : std::runtime_error(line > 0 ? fmt::format("{} (line {}): {}", field, line, what)
                                    : fmt::format("{}: {}", field, what)),
        field_(field),
        line_(line) {}

  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

// ---------------------------------------------------------------------------
// Task stream generator

enum class SpatialPattern { uniform, clustered, sparse };
enum class TemporalPattern { uniform, low_frequency, spiky };

inline const char* to_string(SpatialPattern p) {
  switch (p) {
    case SpatialPattern::uniform: return "uniform";
    case SpatialPattern::clustered: return "clustered";
    case SpatialPattern::sparse: return "sparse";
  }
  return "?";
}

inline const char* to_string(TemporalPattern p) {
  switch (p) {
    case TemporalPattern::uniform: return "uniform";
    case TemporalPattern::low_frequency: return "low-frequency";
    case TemporalPattern::spiky: return "spiky";
  }
  return "?";
}

inline SpatialPattern spatial_pattern_from_string(const std::string& s) {
  for (auto p : {SpatialPattern::uniform, SpatialPattern::clustered, SpatialPattern::sparse})
    if (s == to_string(p)) return p;
  throw std::domain_error("unknown spatial pattern '" + s + "'");
}

inline TemporalPattern temporal_pattern_from_string(const std::string& s) {
  for (auto p : {TemporalPattern::uniform, TemporalPattern::low_frequency, TemporalPattern::spiky})
    if (s == to_string(p)) return p;
  throw std::domain_error("unknown temporal pattern '" + s + "'");
}

struct Phase {
  double start{0.0};
  double end{0.0};
  SpatialPattern spatial{SpatialPattern::uniform};
  TemporalPattern temporal{TemporalPattern::uniform};

  bool operator==(const Phase&) const = default;
};

struct TaskType {
  double weight{1.0};
  std::vector<Requirement> requirements;
  /// Type of a follow-up task spawned at the same place, after this one.
  std::optional<int> then;

  bool operator==(const TaskType&) const = default;
};

struct GeneratorSpec {
  std::vector<Phase> phases;
  double rate{0.05};                 // tasks/s, homogeneous arrivals
  double low_frequency_factor{0.3};  // rate multiplier for low-frequency phases
  double burst_rate{0.01};           // bursts/s for spiky phases
  double burst_size{5.0};            // mean tasks per burst
  double burst_spread{2.0};          // s over which a burst is released
  int clusters{3};
  double cluster_sigma{2.0};
  std::vector<Position> cluster_centers;
  double min_separation{3.0};
  double duration_min{3.0};
  double duration_max{8.0};
  double region_radius{1.0};
  std::vector<TaskType> types;
  double p_precedence{0.0};
  double p_mutex{0.0};
  double p_concurrency{0.0};

  void validate(const GridMap& map) const {
    double prev_end = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < phases.size(); ++i) {
      const auto& ph = phases[i];
      if (!(ph.end > ph.start)) throw std::domain_error(fmt::format("generator.phases[{}]: end must be after start", i));
      if (ph.start < prev_end) throw std::domain_error(fmt::format("generator.phases[{}]: phases overlap or are unordered", i));
      prev_end = ph.end;
    }
    if (rate < 0.0 || burst_rate < 0.0 || burst_size < 0.0 || low_frequency_factor < 0.0)
      throw std::domain_error("generator: rates must be >= 0");
    if (!(duration_min > 0.0) || duration_max < duration_min)
      throw std::domain_error("generator: need 0 < duration_min <= duration_max");
    if (clusters < 1) throw std::domain_error("generator.clusters must be >= 1");
    if (types.empty()) throw std::domain_error("generator.types: at least one task type is required");
    bool any_weight = false;
    for (std::size_t i = 0; i < types.size(); ++i) {
      const auto& t = types[i];
      if (!(t.weight >= 0.0)) throw std::domain_error(fmt::format("generator.types[{}]: weight must be >= 0", i));
      any_weight = any_weight || t.weight > 0.0;
      if (t.requirements.empty())
        throw std::domain_error(fmt::format("generator.types[{}]: requirements must not be empty", i));
      if (t.then && (*t.then <= static_cast<int>(i) || *t.then >= static_cast<int>(types.size())))
        throw std::domain_error(fmt::format("generator.types[{}].then must name a later type", i));
    }
    if (!any_weight) throw std::domain_error("generator.types: at least one weight must be > 0");
    for (const auto& c : cluster_centers)
      if (!map.free(c)) throw std::domain_error("generator.cluster_centers: center is not a free cell");
    if (p_precedence < 0 || p_mutex < 0 || p_concurrency < 0 || p_precedence + p_mutex + p_concurrency > 1.0)
      throw std::domain_error("generator: relation probabilities must be >= 0 and sum to <= 1");
  }

  bool operator==(const GeneratorSpec&) const = default;
};

struct TaskStream {
  std::vector<Task> tasks;
  std::vector<TemporalRelation> relations;
};

namespace detail {

inline std::vector<double> poisson_times(double rate, double start, double end, std::mt19937_64& rng) {
  std::vector<double> out;
  if (!(rate > 0.0)) return out;
  std::exponential_distribution<double> gap(rate);
  for (double t = start + gap(rng); t < end; t += gap(rng)) out.push_back(t);
  return out;
}

}  // namespace detail

/// Deterministic task stream for a seed. Positions are free cell centers.
inline TaskStream generate_tasks(const GeneratorSpec& spec, const GridMap& map, std::uint64_t seed,
                                 TaskId first_id = 0) {
  spec.validate(map);
  std::mt19937_64 rng(seed);
  const auto cells = map.free_cells();
  if (cells.empty()) throw std::domain_error("generator: map has no free cell");
  std::uniform_int_distribution<std::size_t> any_cell(0, cells.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> weights;
  for (const auto& t : spec.types) weights.push_back(t.weight);
  std::discrete_distribution<std::size_t> pick_type(weights.begin(), weights.end());
  std::uniform_real_distribution<double> pick_duration(spec.duration_min, spec.duration_max);

  TaskStream out;
  TaskId next = first_id;
  for (const auto& ph : spec.phases) {
    std::vector<double> times;
    switch (ph.temporal) {
      case TemporalPattern::uniform: times = detail::poisson_times(spec.rate, ph.start, ph.end, rng); break;
      case TemporalPattern::low_frequency:
        times = detail::poisson_times(spec.rate * spec.low_frequency_factor, ph.start, ph.end, rng);
        break;
      case TemporalPattern::spiky: {
        std::poisson_distribution<int> size(std::max(spec.burst_size, 1e-9));
        std::uniform_real_distribution<double> jitter(0.0, spec.burst_spread);
        for (double b : detail::poisson_times(spec.burst_rate, ph.start, ph.end, rng)) {
          const int k = spec.burst_size > 0.0 ? std::max(1, size(rng)) : 0;
          for (int i = 0; i < k; ++i) times.push_back(std::min(b + jitter(rng), std::nextafter(ph.end, ph.start)));
        }
        std::sort(times.begin(), times.end());
        break;
      }
    }

    std::vector<Position> centers = spec.cluster_centers;
    if (ph.spatial == SpatialPattern::clustered && centers.empty())
      for (int k = 0; k < spec.clusters; ++k) centers.push_back(map.center(cells[any_cell(rng)]));
    std::normal_distribution<double> spread(0.0, spec.cluster_sigma);
    std::vector<Position> placed;

    for (double t : times) {
      Position p;
      switch (ph.spatial) {
        case SpatialPattern::uniform: p = map.center(cells[any_cell(rng)]); break;
        case SpatialPattern::clustered: {
          std::uniform_int_distribution<std::size_t> which(0, centers.size() - 1);
          const Position c = centers[which(rng)];
          p = c;
          for (int tries = 0; tries < 100; ++tries) {
            const Position q{c.x + spread(rng), c.y + spread(rng)};
            if (map.free(q)) {
              p = map.snap(q);
              break;
            }
          }
          break;
        }
        case SpatialPattern::sparse: {
          // Falls back to the last draw when no spaced cell turns up.
          for (int tries = 0; tries < 200; ++tries) {
            p = map.center(cells[any_cell(rng)]);
            const bool spaced = std::all_of(placed.begin(), placed.end(), [&](const Position& o) {
              return distance(o, p) >= spec.min_separation;
            });
            if (spaced) break;
          }
          break;
        }
      }
      placed.push_back(p);
      std::optional<int> type = static_cast<int>(pick_type(rng));
      std::optional<TaskId> before;
      while (type) {
        Task task;
        task.id = next++;
        task.region_center = p;
        task.region_radius = spec.region_radius;
        task.duration = pick_duration(rng);
        task.requirements = spec.types[*type].requirements;
        task.release_time = t;
        if (before) out.relations.push_back({*before, task.id, RelationKind::precedence});
        before = task.id;
        out.tasks.push_back(std::move(task));
        type = spec.types[*type].then;
      }
    }
  }

  const std::size_t chained = out.relations.size();
  for (std::size_t i = 1; i < out.tasks.size(); ++i) {
    const double u = unit(rng);
    const TaskId a = out.tasks[i - 1].id;
    const TaskId b = out.tasks[i].id;
    const bool related = std::any_of(out.relations.begin(), out.relations.begin() + chained,
                                     [&](const TemporalRelation& r) { return r.involves(a) && r.involves(b); });
    if (related) continue;
    if (u < spec.p_precedence) out.relations.push_back({a, b, RelationKind::precedence});
    else if (u < spec.p_precedence + spec.p_mutex) out.relations.push_back({a, b, RelationKind::mutex});
    else if (u < spec.p_precedence + spec.p_mutex + spec.p_concurrency)
      out.relations.push_back({a, b, RelationKind::concurrency});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Config files

struct ScenarioConfig {
  std::string map_path;
  Scenario scenario;
  std::optional<GeneratorSpec> generator;
  double series_window{60.0};

  /// Scenario with generated tasks appended for the given seed.
  Scenario materialize(std::uint64_t seed) const {
    Scenario sc = scenario;
    sc.seed = seed;
    if (generator) {
      TaskId first = 0;
      for (const auto& t : sc.tasks) first = std::max(first, t.id + 1);
      auto stream = generate_tasks(*generator, sc.map, seed, first);
      sc.tasks.insert(sc.tasks.end(), stream.tasks.begin(), stream.tasks.end());
      sc.relations.insert(sc.relations.end(), stream.relations.begin(), stream.relations.end());
    }
    return sc;
  }

  bool operator==(const ScenarioConfig&) const = default;
};

namespace detail {

inline int line_of(const YAML::Node& n) { return n.Mark().is_null() ? 0 : n.Mark().line + 1; }

class Reader {
 public:
  Reader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.IsMap()) fail("expected a mapping");
  }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_, line_of(node_), what); }

  void allow(std::initializer_list<const char*> keys) const {
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; }))
        throw ConfigError(sub(key), line_of(kv.first), "unknown field");
    }
  }

  bool has(const char* key) const { return static_cast<bool>(node_[key]); }
  YAML::Node at(const char* key) const {
    auto n = node_[key];
    if (!n) fail(fmt::format("missing required field '{}'", key));
    return n;
  }
  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  T get(const char* key) const {
    return convert<T>(at(key), sub(key));
  }
  template <class T>
  T get(const char* key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  template <class T>
  static T convert(const YAML::Node& n, const std::string& path) {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(path, line_of(n), "has the wrong type");
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
};

inline Position read_position(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence() || n.size() != 2) throw ConfigError(path, line_of(n), "expected [x, y]");
  return {Reader::convert<double>(n[0], path), Reader::convert<double>(n[1], path)};
}

inline std::vector<Requirement> read_requirements(const YAML::Node& n, const std::string& path) {
  if (!n.IsSequence()) throw ConfigError(path, line_of(n), "expected a list");
  std::vector<Requirement> out;
  for (std::size_t i = 0; i < n.size(); ++i) {
    Reader r(n[i], fmt::format("{}[{}]", path, i));
    r.allow({"action", "count"});
    out.push_back({r.get<int>("count", 1), r.get<int>("action")});
  }
  return out;
}

template <class F>
auto rethrow_at(const std::string& path, const YAML::Node& n, F&& f) {
  try {
    return f();
  } catch (const std::domain_error& e) {
    throw ConfigError(path, line_of(n), e.what());
  }
}

}  // namespace detail

/// Parses YAML text; relative map paths resolve against `base_dir`.
inline ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  using detail::Reader;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("<document>", e.mark.line + 1, e.msg);
  }
  Reader top(root, "");
  top.allow({"name", "map", "horizon", "seed", "dt", "idle_policy", "explore_radius", "planner", "comm", "agents",
             "tasks", "generator", "relations", "strategy", "series_window"});
  ScenarioConfig cfg;
  Scenario& sc = cfg.scenario;
  sc.name = top.get<std::string>("name", "scenario");
  cfg.map_path = top.get<std::string>("map");
  {
    std::filesystem::path p(cfg.map_path);
    if (p.is_relative()) p = base_dir / p;
    sc.map = detail::rethrow_at("map", top.at("map"), [&] {
      try {
        return load_map(p.string());
      } catch (const std::runtime_error& e) {
        throw std::domain_error(e.what());
      }
    });
  }
  sc.horizon = top.get<double>("horizon", 600.0);
  sc.seed = top.get<std::uint64_t>("seed", 0);
  sc.dt = top.get<double>("dt", 0.1);
  sc.explore_radius = top.get<double>("explore_radius", 8.0);
  cfg.series_window = top.get<double>("series_window", 60.0);
  if (top.has("idle_policy"))
    sc.idle = detail::rethrow_at("idle_policy", top.at("idle_policy"),
                                 [&] { return idle_policy_from_string(top.get<std::string>("idle_policy")); });

  if (top.has("planner")) {
    Reader r(top.at("planner"), "planner");
    r.allow({"budget_s", "max_expansions", "gap"});
    sc.planner.budget_s = r.get<double>("budget_s", sc.planner.budget_s);
    sc.planner.max_expansions = r.get<std::size_t>("max_expansions", sc.planner.max_expansions);
    sc.planner.gap = r.get<double>("gap", sc.planner.gap);
  }
  if (top.has("comm")) {
    Reader r(top.at("comm"), "comm");
    r.allow({"tx_power", "pl_ref", "ref_dist", "path_exponent", "attenuation", "threshold"});
    auto& c = sc.comm;
    c.tx_power = r.get<double>("tx_power", c.tx_power);
    c.pl_ref = r.get<double>("pl_ref", c.pl_ref);
    c.ref_dist = r.get<double>("ref_dist", c.ref_dist);
    c.path_exponent = r.get<double>("path_exponent", c.path_exponent);
    c.attenuation = r.get<double>("attenuation", c.attenuation);
    c.threshold = r.get<double>("threshold", c.threshold);
    detail::rethrow_at("comm", top.at("comm"), [&] { c.validate(); });
  }

  const auto agents = top.at("agents");
  if (!agents.IsSequence() || agents.size() == 0)
    throw ConfigError("agents", detail::line_of(agents), "expected a non-empty list");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string path = fmt::format("agents[{}]", i);
    Reader r(agents[i], path);
    r.allow({"start", "v_max", "sensor_range", "capabilities"});
    AgentSpec a;
    a.start = detail::read_position(r.at("start"), path + ".start");
    a.v_max = r.get<double>("v_max", 1.0);
    a.sensor_range = r.get<double>("sensor_range", 5.0);
    a.capabilities = r.get<std::vector<ActionId>>("capabilities", std::vector<ActionId>{0});
    if (!sc.map.free(a.start)) throw ConfigError(path + ".start", detail::line_of(r.at("start")), "agent starts outside the map or on an obstacle");
    if (!(a.v_max > 0.0)) throw ConfigError(path + ".v_max", detail::line_of(r.at("v_max")), "must be > 0");
    sc.agents.push_back(std::move(a));
  }

  if (top.has("tasks")) {
    const auto tasks = top.at("tasks");
    if (!tasks.IsSequence()) throw ConfigError("tasks", detail::line_of(tasks), "expected a list");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const std::string path = fmt::format("tasks[{}]", i);
      Reader r(tasks[i], path);
      r.allow({"id", "center", "radius", "duration", "release", "requirements"});
      Task t;
      t.id = r.get<int>("id");
      t.region_center = detail::read_position(r.at("center"), path + ".center");
      t.region_radius = r.get<double>("radius", 1.0);
      t.duration = r.get<double>("duration");
      t.release_time = r.get<double>("release", 0.0);
      t.requirements = detail::read_requirements(r.at("requirements"), path + ".requirements");
      if (!sc.map.free(t.region_center))
        throw ConfigError(path + ".center", detail::line_of(r.at("center")), "task center is outside the map or on an obstacle");
      detail::rethrow_at(path, tasks[i], [&] { t.validate(); });
      sc.tasks.push_back(std::move(t));
    }
  }

  if (top.has("generator")) {
    Reader r(top.at("generator"), "generator");
    r.allow({"phases", "rate", "low_frequency_factor", "burst_rate", "burst_size", "burst_spread", "clusters",
             "cluster_sigma", "cluster_centers", "min_separation", "duration", "region_radius", "types",
             "relations"});
    GeneratorSpec g;
    const auto phases = r.at("phases");
    if (!phases.IsSequence()) throw ConfigError("generator.phases", detail::line_of(phases), "expected a list");
    for (std::size_t i = 0; i < phases.size(); ++i) {
      const std::string path = fmt::format("generator.phases[{}]", i);
      Reader pr(phases[i], path);
      pr.allow({"start", "end", "spatial", "temporal"});
      Phase ph;
      ph.start = pr.get<double>("start");
      ph.end = pr.get<double>("end");
      ph.spatial = detail::rethrow_at(path + ".spatial", phases[i],
                                      [&] { return spatial_pattern_from_string(pr.get<std::string>("spatial", "uniform")); });
      ph.temporal = detail::rethrow_at(path + ".temporal", phases[i],
                                       [&] { return temporal_pattern_from_string(pr.get<std::string>("temporal", "uniform")); });
      g.phases.push_back(ph);
    }
    g.rate = r.get<double>("rate", g.rate);
    g.low_frequency_factor = r.get<double>("low_frequency_factor", g.low_frequency_factor);
    g.burst_rate = r.get<double>("burst_rate", g.burst_rate);
    g.burst_size = r.get<double>("burst_size", g.burst_size);
    g.burst_spread = r.get<double>("burst_spread", g.burst_spread);
    g.clusters = r.get<int>("clusters", g.clusters);
    g.cluster_sigma = r.get<double>("cluster_sigma", g.cluster_sigma);
    if (r.has("cluster_centers")) {
      const auto cc = r.at("cluster_centers");
      for (std::size_t i = 0; i < cc.size(); ++i)
        g.cluster_centers.push_back(detail::read_position(cc[i], fmt::format("generator.cluster_centers[{}]", i)));
    }
    g.min_separation = r.get<double>("min_separation", g.min_separation);
    if (r.has("duration")) {
      const auto d = r.at("duration");
      if (!d.IsSequence() || d.size() != 2) throw ConfigError("generator.duration", detail::line_of(d), "expected [min, max]");
      g.duration_min = Reader::convert<double>(d[0], "generator.duration");
      g.duration_max = Reader::convert<double>(d[1], "generator.duration");
    }
    g.region_radius = r.get<double>("region_radius", g.region_radius);
    if (r.has("types")) {
      const auto types = r.at("types");
      for (std::size_t i = 0; i < types.size(); ++i) {
        const std::string path = fmt::format("generator.types[{}]", i);
        Reader tr(types[i], path);
        tr.allow({"weight", "requirements", "then"});
        TaskType type{tr.get<double>("weight", 1.0),
                      detail::read_requirements(tr.at("requirements"), path + ".requirements"), std::nullopt};
        if (tr.has("then")) type.then = tr.get<int>("then");
        g.types.push_back(std::move(type));
      }
    } else {
      g.types.push_back({1.0, {{1, 0}}, std::nullopt});
    }
    if (r.has("relations")) {
      Reader rr(r.at("relations"), "generator.relations");
      rr.allow({"precedence", "mutex", "concurrency"});
      g.p_precedence = rr.get<double>("precedence", 0.0);
      g.p_mutex = rr.get<double>("mutex", 0.0);
      g.p_concurrency = rr.get<double>("concurrency", 0.0);
    }
    detail::rethrow_at("generator", top.at("generator"), [&] { g.validate(sc.map); });
    cfg.generator = std::move(g);
  }

  if (top.has("relations")) {
    const auto rels = top.at("relations");
    for (std::size_t i = 0; i < rels.size(); ++i) {
      const std::string path = fmt::format("relations[{}]", i);
      Reader r(rels[i], path);
      r.allow({"first", "second", "kind"});
      TemporalRelation rel;
      rel.first = r.get<int>("first");
      rel.second = r.get<int>("second");
      rel.kind = detail::rethrow_at(path + ".kind", rels[i],
                                    [&] { return relation_kind_from_string(r.get<std::string>("kind")); });
      const auto known = [&](TaskId id) {
        return std::any_of(sc.tasks.begin(), sc.tasks.end(), [&](const Task& t) { return t.id == id; });
      };
      if (!known(rel.first) || !known(rel.second))
        throw ConfigError(path, detail::line_of(rels[i]), "relation references an unknown task");
      sc.relations.push_back(rel);
    }
  }

  if (top.has("strategy")) {
    Reader r(top.at("strategy"), "strategy");
    r.allow({"kind", "threshold_n", "interval", "fixed_point", "leader", "ring_order"});
    auto& s = sc.strategy;
    s.kind = detail::rethrow_at("strategy.kind", top.at("strategy"),
                                [&] { return strategy_kind_from_string(r.get<std::string>("kind", "COCOPLAN")); });
    if (r.has("threshold_n")) s.threshold_n = r.get<int>("threshold_n");
    if (r.has("interval")) s.interval = r.get<double>("interval");
    if (r.has("fixed_point")) s.fixed_point = detail::read_position(r.at("fixed_point"), "strategy.fixed_point");
    if (r.has("leader")) s.leader = r.get<int>("leader");
    if (r.has("ring_order")) s.ring_order = r.get<std::vector<AgentId>>("ring_order");
  }

  detail::rethrow_at("scenario", root, [&] { sc.validate(); });
  return cfg;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string(), 0, "cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), path.parent_path());
}

namespace detail {

inline void emit_position(YAML::Emitter& out, const Position& p) {
  out << YAML::Flow << YAML::BeginSeq << p.x << p.y << YAML::EndSeq;
}

inline void emit_requirements(YAML::Emitter& out, const std::vector<Requirement>& reqs) {
  out << YAML::BeginSeq;
  for (const auto& r : reqs)
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "action" << YAML::Value << r.action << YAML::Key << "count"
        << YAML::Value << r.count << YAML::EndMap;
  out << YAML::EndSeq;
}

}  // namespace detail

/// YAML text that parses back to an equal config (given the same base dir).
inline std::string serialize_scenario(const ScenarioConfig& cfg) {
  const Scenario& sc = cfg.scenario;
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << sc.name;
  out << YAML::Key << "map" << YAML::Value << cfg.map_path;
  out << YAML::Key << "horizon" << YAML::Value << sc.horizon;
  out << YAML::Key << "seed" << YAML::Value << sc.seed;
  out << YAML::Key << "dt" << YAML::Value << sc.dt;
  out << YAML::Key << "idle_policy" << YAML::Value << to_string(sc.idle);
  out << YAML::Key << "explore_radius" << YAML::Value << sc.explore_radius;
  out << YAML::Key << "series_window" << YAML::Value << cfg.series_window;

  out << YAML::Key << "planner" << YAML::Value << YAML::BeginMap;
  if (std::isfinite(sc.planner.budget_s)) out << YAML::Key << "budget_s" << YAML::Value << sc.planner.budget_s;
  out << YAML::Key << "max_expansions" << YAML::Value << sc.planner.max_expansions;
  out << YAML::Key << "gap" << YAML::Value << sc.planner.gap;
  out << YAML::EndMap;

  const auto& c = sc.comm;
  out << YAML::Key << "comm" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "tx_power" << YAML::Value << c.tx_power;
  out << YAML::Key << "pl_ref" << YAML::Value << c.pl_ref;
  out << YAML::Key << "ref_dist" << YAML::Value << c.ref_dist;
  out << YAML::Key << "path_exponent" << YAML::Value << c.path_exponent;
  out << YAML::Key << "attenuation" << YAML::Value << c.attenuation;
  out << YAML::Key << "threshold" << YAML::Value << c.threshold;
  out << YAML::EndMap;

  out << YAML::Key << "agents" << YAML::Value << YAML::BeginSeq;
  for (const auto& a : sc.agents) {
    out << YAML::BeginMap << YAML::Key << "start" << YAML::Value;
    detail::emit_position(out, a.start);
    out << YAML::Key << "v_max" << YAML::Value << a.v_max;
    out << YAML::Key << "sensor_range" << YAML::Value << a.sensor_range;
    out << YAML::Key << "capabilities" << YAML::Value << YAML::Flow << a.capabilities;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  if (!sc.tasks.empty()) {
    out << YAML::Key << "tasks" << YAML::Value << YAML::BeginSeq;
    for (const auto& t : sc.tasks) {
      out << YAML::BeginMap;
      out << YAML::Key << "id" << YAML::Value << t.id;
      out << YAML::Key << "center" << YAML::Value;
      detail::emit_position(out, t.region_center);
      out << YAML::Key << "radius" << YAML::Value << t.region_radius;
      out << YAML::Key << "duration" << YAML::Value << t.duration;
      out << YAML::Key << "release" << YAML::Value << t.release_time;
      out << YAML::Key << "requirements" << YAML::Value;
      detail::emit_requirements(out, t.requirements);
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
  }

  if (cfg.generator) {
    const auto& g = *cfg.generator;
    out << YAML::Key << "generator" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "phases" << YAML::Value << YAML::BeginSeq;
    for (const auto& ph : g.phases)
      out << YAML::Flow << YAML::BeginMap << YAML::Key << "start" << YAML::Value << ph.start << YAML::Key << "end"
          << YAML::Value << ph.end << YAML::Key << "spatial" << YAML::Value << to_string(ph.spatial) << YAML::Key
          << "temporal" << YAML::Value << to_string(ph.temporal) << YAML::EndMap;
    out << YAML::EndSeq;
    out << YAML::Key << "rate" << YAML::Value << g.rate;
    out << YAML::Key << "low_frequency_factor" << YAML::Value << g.low_frequency_factor;
    out << YAML::Key << "burst_rate" << YAML::Value << g.burst_rate;
    out << YAML::Key << "burst_size" << YAML::Value << g.burst_size;
    out << YAML::Key << "burst_spread" << YAML::Value << g.burst_spread;
    out << YAML::Key << "clusters" << YAML::Value << g.clusters;
    out << YAML::Key << "cluster_sigma" << YAML::Value << g.cluster_sigma;
    if (!g.cluster_centers.empty()) {
      out << YAML::Key << "cluster_centers" << YAML::Value << YAML::BeginSeq;
      for (const auto& p : g.cluster_centers) detail::emit_position(out, p);
      out << YAML::EndSeq;
    }
    out << YAML::Key << "min_separation" << YAML::Value << g.min_separation;
    out << YAML::Key << "duration" << YAML::Value << YAML::Flow << YAML::BeginSeq << g.duration_min
        << g.duration_max << YAML::EndSeq;
    out << YAML::Key << "region_radius" << YAML::Value << g.region_radius;
    out << YAML::Key << "types" << YAML::Value << YAML::BeginSeq;
    for (const auto& t : g.types) {
      out << YAML::BeginMap << YAML::Key << "weight" << YAML::Value << t.weight;
      out << YAML::Key << "requirements" << YAML::Value;
      detail::emit_requirements(out, t.requirements);
      if (t.then) out << YAML::Key << "then" << YAML::Value << *t.then;
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "relations" << YAML::Value << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "precedence" << YAML::Value << g.p_precedence;
    out << YAML::Key << "mutex" << YAML::Value << g.p_mutex;
    out << YAML::Key << "concurrency" << YAML::Value << g.p_concurrency;
    out << YAML::EndMap;
    out << YAML::EndMap;
  }

  if (!sc.relations.empty()) {
    out << YAML::Key << "relations" << YAML::Value << YAML::BeginSeq;
    for (const auto& r : sc.relations)
      out << YAML::Flow << YAML::BeginMap << YAML::Key << "first" << YAML::Value << r.first << YAML::Key << "second"
          << YAML::Value << r.second << YAML::Key << "kind" << YAML::Value << to_string(r.kind) << YAML::EndMap;
    out << YAML::EndSeq;
  }

  const auto& s = sc.strategy;
  out << YAML::Key << "strategy" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << to_string(s.kind);
  if (s.threshold_n) out << YAML::Key << "threshold_n" << YAML::Value << *s.threshold_n;
  if (s.interval) out << YAML::Key << "interval" << YAML::Value << *s.interval;
  if (s.fixed_point) {
    out << YAML::Key << "fixed_point" << YAML::Value;
    detail::emit_position(out, *s.fixed_point);
  }
  if (s.leader) out << YAML::Key << "leader" << YAML::Value << *s.leader;
  if (s.ring_order) out << YAML::Key << "ring_order" << YAML::Value << YAML::Flow << *s.ring_order;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

/// Task stream as a YAML document with `tasks` and `relations` lists.
inline std::string serialize_stream(const TaskStream& stream) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap << YAML::Key << "tasks" << YAML::Value << YAML::BeginSeq;
  for (const auto& t : stream.tasks) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << t.id;
    out << YAML::Key << "center" << YAML::Value;
    detail::emit_position(out, t.region_center);
    out << YAML::Key << "radius" << YAML::Value << t.region_radius;
    out << YAML::Key << "duration" << YAML::Value << t.duration;
    out << YAML::Key << "release" << YAML::Value << t.release_time;
    out << YAML::Key << "requirements" << YAML::Value;
    detail::emit_requirements(out, t.requirements);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "relations" << YAML::Value << YAML::BeginSeq;
  for (const auto& r : stream.relations)
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "first" << YAML::Value << r.first << YAML::Key << "second"
        << YAML::Value << r.second << YAML::Key << "kind" << YAML::Value << to_string(r.kind) << YAML::EndMap;
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Experiments

struct MeanStd {
  double mean{std::nan("")};
  double std{std::nan("")};
};

/// Sample mean and standard deviation (n-1); std is 0 for a single value.
inline MeanStd mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

struct TrialRow {
  std::string strategy;
  std::string env;
  int trial{0};
  std::size_t finished{0};
  std::size_t comm_num{0};
  MeanStd comm_int;
  MeanStd idle_gap;
};

inline TrialRow trial_row(const std::string& env, int trial, StrategyKind kind, const MetricsRecord& m) {
  TrialRow row{to_string(kind), env, trial, m.finished, m.comm_count, {}, {}};
  if (m.has_intervals) {
    row.comm_int = mean_std(m.comm_intervals);
    row.idle_gap = mean_std(m.idle_gaps);
  }
  return row;
}

inline const char* kTrialColumns =
    "strategy,env,trial,finished,comm_num,comm_int_mean,comm_int_std,idle_gap_mean,idle_gap_std";

inline std::string csv_number(double x) { return std::isnan(x) ? "nan" : fmt::format("{:.6f}", x); }

inline std::string format_row(const TrialRow& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{}", r.strategy, r.env, r.trial, r.finished, r.comm_num,
                     csv_number(r.comm_int.mean), csv_number(r.comm_int.std), csv_number(r.idle_gap.mean),
                     csv_number(r.idle_gap.std));
}

struct SummaryRow {
  std::string strategy;
  std::string env;
  int trials{0};
  MeanStd finished, comm_num, comm_int, idle_gap;
};

inline const char* kSummaryColumns =
    "strategy,env,trials,finished_mean,finished_std,comm_num_mean,comm_num_std,comm_int_mean,comm_int_std,"
    "idle_gap_mean,idle_gap_std";

/// Mean and std over trials of each per-trial column (nan values skipped).
inline SummaryRow summarize(const std::vector<TrialRow>& rows) {
  SummaryRow s;
  if (rows.empty()) return s;
  s.strategy = rows.front().strategy;
  s.env = rows.front().env;
  s.trials = static_cast<int>(rows.size());
  std::vector<double> fin, num, ci, ig;
  for (const auto& r : rows) {
    fin.push_back(static_cast<double>(r.finished));
    num.push_back(static_cast<double>(r.comm_num));
    if (!std::isnan(r.comm_int.mean)) ci.push_back(r.comm_int.mean);
    if (!std::isnan(r.idle_gap.mean)) ig.push_back(r.idle_gap.mean);
  }
  s.finished = mean_std(fin);
  s.comm_num = mean_std(num);
  s.comm_int = mean_std(ci);
  s.idle_gap = mean_std(ig);
  return s;
}

inline std::string format_summary(const SummaryRow& s) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", s.strategy, s.env, s.trials, csv_number(s.finished.mean),
                     csv_number(s.finished.std), csv_number(s.comm_num.mean), csv_number(s.comm_num.std),
                     csv_number(s.comm_int.mean), csv_number(s.comm_int.std), csv_number(s.idle_gap.mean),
                     csv_number(s.idle_gap.std));
}

struct SeriesPoint {
  double time{0.0};
  double completed_mean{0.0};
  double completed_variance{0.0};
  double slope_mean{0.0};
};

inline const char* kSeriesColumns = "time,completed_mean,completed_variance,slope_mean";

/// Least-squares slope of y over x.
inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

/// Every `step` seconds: across-trial mean and population variance of the
/// completed count, and the mean slope of the completion curve over the
/// trailing `window` seconds (sampled once per second).
inline std::vector<SeriesPoint> robustness_series(const std::vector<std::vector<double>>& completion_times,
                                                  double horizon, double step = 10.0, double window = 60.0) {
  auto count_at = [](const std::vector<double>& ts, double t) {
    return static_cast<double>(std::upper_bound(ts.begin(), ts.end(), t + 1e-9) - ts.begin());
  };
  std::vector<std::vector<double>> sorted = completion_times;
  for (auto& ts : sorted) std::sort(ts.begin(), ts.end());
  std::vector<SeriesPoint> out;
  for (double t = step; t <= horizon + 1e-9; t += step) {
    SeriesPoint p;
    p.time = t;
    std::vector<double> counts, slopes;
    for (const auto& ts : sorted) {
      counts.push_back(count_at(ts, t));
      std::vector<double> xs, ys;
      for (double s = std::max(0.0, t - window); s <= t + 1e-9; s += 1.0) {
        xs.push_back(s);
        ys.push_back(count_at(ts, s));
      }
      slopes.push_back(ls_slope(xs, ys));
    }
    if (!counts.empty()) {
      const double n = static_cast<double>(counts.size());
      p.completed_mean = std::accumulate(counts.begin(), counts.end(), 0.0) / n;
      for (double c : counts) p.completed_variance += (c - p.completed_mean) * (c - p.completed_mean) / n;
      p.slope_mean = std::accumulate(slopes.begin(), slopes.end(), 0.0) / n;
    }
    out.push_back(p);
  }
  return out;
}

struct ExperimentResult {
  std::vector<TrialRow> rows;
  SummaryRow summary;
  std::vector<SeriesPoint> series;
  std::vector<SimResult> runs;
};

/// Runs `trials` independent simulations (seed, seed+1, ...) in parallel.
inline ExperimentResult run_experiment(const ScenarioConfig& cfg, int trials) {
  if (trials < 1) throw std::domain_error("trials must be >= 1");
  std::vector<std::future<SimResult>> jobs;
  for (int k = 0; k < trials; ++k)
    jobs.push_back(std::async(std::launch::async, [&cfg, k] {
      return simulate(cfg.materialize(cfg.scenario.seed + static_cast<std::uint64_t>(k)));
    }));
  ExperimentResult out;
  std::vector<std::vector<double>> completions;
  for (int k = 0; k < trials; ++k) {
    out.runs.push_back(jobs[k].get());
    const auto& m = out.runs.back().metrics;
    out.rows.push_back(trial_row(cfg.scenario.name, k, cfg.scenario.strategy.kind, m));
    completions.push_back(m.completion_times);
  }
  out.summary = summarize(out.rows);
  out.series = robustness_series(completions, cfg.scenario.horizon, 10.0, cfg.series_window);
  return out;
}

}  // namespace cocoplan
