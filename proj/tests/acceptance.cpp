// Acceptance gate: one PASS/FAIL line per criterion, details indented below.
// Exit code counts failures not listed with --known-fail.
#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <fmt/core.h>
#include <set>

#include "cocoplan/scenario.hpp"
#include "support.hpp"

using namespace cocoplan;
using testkit::Rng;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kRateTol = 1e-9;        // optimum vs. enumeration
constexpr double kBoundTol = 1e-9;       // UB against subtree optimum
constexpr double kDelayTol = 1e-9;       // meeting time vs. gathering
constexpr double kIntervalTol = 1e-9;    // fixed-interval gaps
constexpr double kOptimalityBudgetS = 600.0;
constexpr double kTrendBudgetS = 900.0;
constexpr double kPlanningBudgetS = 15.0;
constexpr double kCommRatio = 5.0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass{true};
  std::vector<std::string> notes;
  void note(std::string s) { notes.push_back(std::move(s)); }
  void fail(std::string s) {
    pass = false;
    notes.push_back("!! " + std::move(s));
  }
};

std::string log_text(const SimResult& r) {
  std::string out;
  for (const auto& e : r.log) out += format_event(e) + "\n";
  return out;
}

StrategyConfig strategy_for(StrategyKind kind, const StrategyConfig& base) {
  StrategyConfig s = base;
  s.kind = kind;
  return s;
}

constexpr StrategyKind kAllKinds[] = {StrategyKind::cocoplan, StrategyKind::fix,  StrategyKind::fpmr,
                                      StrategyKind::frdt,     StrategyKind::fimr, StrategyKind::ring,
                                      StrategyKind::greedy};

// ---------------------------------------------------------------------------

// Shared between the optimality and the bound checks.
struct OptimalityRun {
  explicit OptimalityRun(testkit::PlanningInstance i) : inst(std::move(i)) {}
  testkit::PlanningInstance inst;
  PlannerResult result;
  std::vector<testkit::Enumerated> all;
};
std::vector<OptimalityRun> g_optimality_runs;

Outcome optimality() {
  Outcome out;
  Rng rng(1001);
  const auto t0 = Clock::now();
  int mismatches = 0;
  std::size_t plans = 0;
  for (int k = 0; k < 200; ++k) {
    OptimalityRun run(testkit::random_instance(rng, {.min_agents = 2, .max_agents = 3, .min_tasks = 2, .max_tasks = 5}));
    TravelCache travel(run.inst.world.map);
    const auto rule = comopt_rule(run.inst.problem.comm);
    PlannerOptions opt;
    opt.record_nodes = true;
    run.result = cocoplan::cocoplan(run.inst.problem, rule, travel, opt);
    run.all = testkit::enumerate_plans(run.inst.problem, rule, travel);
    plans += run.all.size();
    double best = 0.0;
    for (const auto& e : run.all) best = std::max(best, e.rate);
    if (!run.result.stats.exhausted) out.fail(fmt::format("instance {} did not finish the search", k));
    if (std::abs(run.result.plan.rate - best) > kRateTol) {
      ++mismatches;
      out.fail(fmt::format("instance {}: search {:.12f} vs enumeration {:.12f}", k, run.result.plan.rate, best));
    }
    g_optimality_runs.push_back(std::move(run));
  }
  const double elapsed = seconds_since(t0);
  out.note(fmt::format("200 instances, {} enumerated plans, {} mismatches, {:.1f} s", plans, mismatches, elapsed));
  if (elapsed > kOptimalityBudgetS) out.fail(fmt::format("took {:.1f} s > {} s", elapsed, kOptimalityBudgetS));
  return out;
}

Outcome meeting_points() {
  Outcome out;
  Rng rng(1002);
  int bad_link = 0, bad_delay = 0;
  double worst_ratio = 0.0;
  for (int k = 0; k < 1000; ++k) {
    auto world = testkit::random_world(rng, rng.integer(12, 30), rng.integer(12, 30), rng.chance(0.5) ? 0.5 : 1.0,
                                       rng.uniform(0.0, 0.25));
    TravelCache travel(world.map);
    CommParams params;
    params.threshold = rng.uniform(-45.0, -30.0);
    LastTaskState last;
    const int n = rng.integer(2, 10);
    for (int i = 0; i < n; ++i) {
      last.finish_time.push_back(rng.uniform(0.0, 30.0));
      last.finish_pos.push_back(rng.pick(world.reachable));
      last.v_max.push_back(rng.uniform(0.5, 2.0));
    }
    const auto ev = com_opt(last, travel, params);
    if (!is_connected(comm_graph(ev.positions, world.map, params))) ++bad_link;
    const double gather = all_gather_time(last, travel);
    if (ev.time > gather + kDelayTol) ++bad_delay;
    const double ready = *std::max_element(last.finish_time.begin(), last.finish_time.end());
    if (gather > ready) worst_ratio = std::max(worst_ratio, (ev.time - ready) / (gather - ready));
  }
  out.note(fmt::format("1000 instances: {} disconnected, {} slower than gathering, worst delay ratio {:.3f}", bad_link,
                       bad_delay, worst_ratio));
  if (bad_link) out.fail("disconnected meeting");
  if (bad_delay) out.fail("meeting later than gathering");
  return out;
}

Outcome bound_soundness() {
  Outcome out;
  std::size_t nodes = 0, bad = 0;
  for (const auto& run : g_optimality_runs) {
    for (const auto& node : run.result.stats.nodes) {
      ++nodes;
      double subtree = 0.0;
      for (const auto& e : run.all)
        if (testkit::extends(e.plan, node.plan)) subtree = std::max(subtree, e.rate);
      if (node.ub + kBoundTol < node.lb || node.ub + kBoundTol < subtree) ++bad;
    }
  }
  out.note(fmt::format("{} generated nodes checked, {} unsound", nodes, bad));
  if (nodes == 0) out.fail("no nodes recorded");
  if (bad) out.fail("bound below the subtree optimum");
  return out;
}

Outcome feasibility() {
  Outcome out;
  const auto desk = load_scenario(testkit::source_path("scenarios/desk.yaml"));
  std::size_t violations = 0, finished = 0, events = 0, bad_schedule = 0;
  for (int k = 0; k < 50; ++k) {
    const auto kind = kAllKinds[k % std::size(kAllKinds)];
    Scenario sc = desk.materialize(100 + static_cast<std::uint64_t>(k));
    sc.strategy = strategy_for(kind, desk.scenario.strategy);
    const auto r = simulate(sc);
    violations += r.metrics.violations;
    finished += r.metrics.finished;
    events += r.metrics.comm_count;
    if (!check_schedule(r.completed, sc.relations).ok) ++bad_schedule;
    for (const auto& v : r.violation_notes) out.note(fmt::format("{} seed {}: {}", to_string(kind), 100 + k, v));
  }
  out.note(fmt::format("50 runs: {} tasks finished, {} comm events, {} violations", finished, events, violations));
  if (violations) out.fail("runtime violations");
  if (bad_schedule) out.fail(fmt::format("{} runs with a broken completed schedule", bad_schedule));
  return out;
}

// Desk runs for the trend and interval checks.
std::map<StrategyKind, std::vector<SimResult>> g_desk;

void run_desk() {
  if (!g_desk.empty()) return;
  const auto desk = load_scenario(testkit::source_path("scenarios/desk.yaml"));
  for (auto kind : kAllKinds) {
    auto cfg = desk;
    cfg.scenario.strategy = strategy_for(kind, desk.scenario.strategy);
    g_desk[kind] = run_experiment(cfg, 3).runs;
  }
}

Outcome trends() {
  Outcome out;
  const auto t0 = Clock::now();
  run_desk();
  std::map<StrategyKind, double> fin, comm, gap;
  for (const auto& [kind, runs] : g_desk) {
    std::vector<double> f, c, g;
    for (const auto& r : runs) {
      f.push_back(static_cast<double>(r.metrics.finished));
      c.push_back(static_cast<double>(r.metrics.comm_count));
      if (!r.metrics.idle_gaps.empty()) g.push_back(mean_std(r.metrics.idle_gaps).mean);
    }
    fin[kind] = mean_std(f).mean;
    comm[kind] = mean_std(c).mean;
    gap[kind] = mean_std(g).mean;
    out.note(fmt::format("{:<8} finished {:6.2f}  comm {:6.2f}  idle gap {:7.3f}", to_string(kind), fin[kind],
                         comm[kind], gap[kind]));
  }
  const auto me = StrategyKind::cocoplan;
  for (auto kind : kAllKinds)
    if (kind != me && fin[kind] > fin[me])
      out.fail(fmt::format("(a) {} finished {:.2f} > {:.2f}", to_string(kind), fin[kind], fin[me]));
  for (auto kind : {StrategyKind::fimr, StrategyKind::fpmr})
    if (!(gap[me] < gap[kind]))
      out.fail(fmt::format("(b) idle gap {:.3f} not below {} {:.3f}", gap[me], to_string(kind), gap[kind]));
  const double ratio = comm[StrategyKind::greedy] / comm[me];
  out.note(fmt::format("(c) greedy/cocoplan comm ratio {:.2f} (need >= {})", ratio, kCommRatio));
  if (ratio < kCommRatio) out.fail(fmt::format("(c) ratio {:.2f} < {}", ratio, kCommRatio));
  const double elapsed = seconds_since(t0);
  out.note(fmt::format("{:.1f} s", elapsed));
  if (elapsed > kTrendBudgetS) out.fail("over the time budget");
  return out;
}

Outcome fixed_intervals() {
  Outcome out;
  run_desk();
  std::size_t gaps = 0;
  double worst = 0.0;
  const double interval = *load_scenario(testkit::source_path("scenarios/desk.yaml")).scenario.strategy.interval;
  for (const auto& r : g_desk[StrategyKind::fimr])
    for (double g : r.metrics.comm_intervals) {
      ++gaps;
      worst = std::max(worst, std::abs(g - interval));
    }
  // Paper-scale layout with the 35 s interval.
  auto subt = load_scenario(testkit::source_path("scenarios/subt.yaml"));
  subt.scenario.strategy.kind = StrategyKind::fimr;
  subt.scenario.strategy.interval = 35.0;
  const auto r = simulate(subt.materialize(subt.scenario.seed));
  for (double g : r.metrics.comm_intervals) {
    ++gaps;
    worst = std::max(worst, std::abs(g - 35.0));
  }
  out.note(fmt::format("{} gaps, worst deviation {:.3g} s; 35 s interval over 600 s gave {} events", gaps, worst,
                       r.metrics.comm_count));
  if (gaps == 0) out.fail("no gaps observed");
  if (worst > kIntervalTol) out.fail("gap differs from the interval");
  if (r.metrics.comm_count < 16 || r.metrics.comm_count > 18) out.fail("event count off the 600/35 grid");
  return out;
}

Outcome planning_envelope() {
  Outcome out;
  const auto subt = load_scenario(testkit::source_path("scenarios/subt.yaml"));
  const Scenario sc = subt.materialize(subt.scenario.seed);
  PlanningProblem p;
  for (const auto& a : sc.agents) p.agents.push_back({a.start, a.v_max, a.capabilities, 0.0});
  // Everything released in the first two minutes is known at once.
  for (const auto& t : sc.tasks)
    if (t.release_time <= 120.0) p.tasks.push_back(t);
  std::set<TaskId> ids;
  for (const auto& t : p.tasks) ids.insert(t.id);
  for (const auto& r : sc.relations)
    if (ids.count(r.first) && ids.count(r.second)) p.relations.push_back(r);
  p.comm = sc.comm;
  TravelCache travel(sc.map);
  PlannerOptions opt;
  opt.budget_s = sc.planner.budget_s;
  opt.max_expansions = sc.planner.max_expansions;
  const auto t0 = Clock::now();
  const auto r = cocoplan::cocoplan(p, comopt_rule(sc.comm, {.gap = sc.planner.gap}), travel, opt);
  const double elapsed = seconds_since(t0);
  out.note(fmt::format("{} agents, {} tasks: {:.2f} s, {} expanded, {} generated, {} planned, rate {:.4f}",
                       p.agents.size(), p.tasks.size(), elapsed, r.stats.expanded, r.stats.generated,
                       r.plan.task_count(), r.plan.rate));
  if (elapsed > kPlanningBudgetS) out.fail(fmt::format("{:.2f} s over the {} s budget", elapsed, kPlanningBudgetS));
  if (r.stats.expanded == 0 || r.stats.expanded > 1000) out.fail("node count out of the expected order");
  if (r.plan.task_count() == 0) out.fail("empty plan");
  return out;
}

Outcome determinism() {
  Outcome out;
  for (const char* file : {"scenarios/desk.yaml", "scenarios/subt.yaml"}) {
    const auto cfg = load_scenario(testkit::source_path(file));
    for (auto kind : kAllKinds) {
      Scenario sc = cfg.materialize(cfg.scenario.seed);
      sc.strategy = strategy_for(kind, cfg.scenario.strategy);
      if (kind == StrategyKind::fimr && !sc.strategy.interval) sc.strategy.interval = 35.0;
      if (kind == StrategyKind::fix && !sc.strategy.threshold_n) sc.strategy.threshold_n = 3;
      if (kind == StrategyKind::fpmr && !sc.strategy.fixed_point) sc.strategy.fixed_point = sc.agents[0].start;
      if (kind == StrategyKind::frdt && !sc.strategy.leader) sc.strategy.leader = 0;
      const auto a = simulate(sc), b = simulate(sc);
      const auto ra = format_row(trial_row(sc.name, 0, kind, a.metrics));
      const auto rb = format_row(trial_row(sc.name, 0, kind, b.metrics));
      if (log_text(a) != log_text(b) || ra != rb) out.fail(fmt::format("{} {} differs on replay", file, to_string(kind)));
    }
  }
  // Parallel trials must match too.
  const auto desk = load_scenario(testkit::source_path("scenarios/desk.yaml"));
  const auto e1 = run_experiment(desk, 3), e2 = run_experiment(desk, 3);
  for (std::size_t k = 0; k < e1.rows.size(); ++k)
    if (format_row(e1.rows[k]) != format_row(e2.rows[k]) || log_text(e1.runs[k]) != log_text(e2.runs[k]))
      out.fail(fmt::format("experiment trial {} differs", k));
  out.note("2 scenarios x 7 strategies replayed, plus a 3-trial parallel experiment");
  return out;
}

bool brute_relation(const ExecutionInterval& p, const ExecutionInterval& q, RelationKind k) {
  bool share = false;
  for (int x = 0; x <= 60 && !share; ++x) share = p.start <= x && x <= p.finish && q.start <= x && x <= q.finish;
  switch (k) {
    case RelationKind::precedence: return p.finish <= q.start;
    case RelationKind::mutex: return !share;
    case RelationKind::concurrency: return share;
  }
  return false;
}

Outcome geometry() {
  Outcome out;
  Rng rng(1009);
  int bad_astar = 0;
  for (int world_k = 0; world_k < 100; ++world_k) {
    auto world = testkit::random_world(rng, rng.integer(8, 40), rng.integer(8, 40), rng.chance(0.5) ? 0.5 : 1.0,
                                       rng.uniform(0.0, 0.3));
    for (int k = 0; k < 100; ++k) {
      const Position a = rng.pick(world.reachable), b = rng.pick(world.reachable);
      const double v = rng.uniform(0.3, 3.0);
      if (astar_travel_time(a, b, world.map, v) + 1e-12 < distance(a, b) / v) ++bad_astar;
    }
  }
  int bad_quality = 0;
  const CommParams params;
  for (int k = 0; k < 10000; ++k) {
    const double d = rng.uniform(0.0, 50.0), o = rng.uniform(0.0, 10.0);
    const double dd = d + rng.uniform(1e-3, 10.0), od = o + rng.uniform(1e-3, 5.0);
    if (!(quality_at(d, od, params) < quality_at(d, o, params))) ++bad_quality;
    if (quality_at(dd, o, params) > quality_at(d, o, params)) ++bad_quality;
  }
  int bad_check = 0;
  for (int k = 0; k < 10000; ++k) {
    const int a = rng.integer(0, 30), b = rng.integer(0, 30);
    const ExecutionInterval p{1, double(a), double(a + rng.integer(0, 15))};
    const ExecutionInterval q{2, double(b), double(b + rng.integer(0, 15))};
    const auto kind = static_cast<RelationKind>(rng.integer(0, 2));
    const std::vector<ExecutionInterval> ivs{p, q};
    const std::vector<TemporalRelation> rel{{1, 2, kind}};
    if (check_schedule(ivs, rel).ok != brute_relation(p, q, kind)) ++bad_check;
  }
  out.note(fmt::format("10000 travel pairs: {} inadmissible; 10000 quality probes: {} non-monotone; "
                       "10000 relation triples: {} disagreements",
                       bad_astar, bad_quality, bad_check));
  if (bad_astar || bad_quality || bad_check) out.fail("geometry or checker disagreement");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> known_fail, only;
  app.add_option("--known-fail", known_fail, "Criteria reported but not counted in the exit code");
  app.add_option("--only", only, "Run just these criteria");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"search matches exhaustive enumeration", optimality},
      {"meeting points connected and no later than gathering", meeting_points},
      {"bounds sound on every generated node", bound_soundness},
      {"mixed-strategy runs without violations", feasibility},
      {"desk-scale trends", trends},
      {"fixed-interval gaps exact", fixed_intervals},
      {"10-agent planning call within budget", planning_envelope},
      {"byte-identical replay", determinism},
      {"geometry and checker properties", geometry},
  };
  int counted = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    if (id == 3 && g_optimality_runs.empty()) optimality();
    const auto t0 = Clock::now();
    const Outcome o = criteria[i].second();
    const bool known = std::find(known_fail.begin(), known_fail.end(), id) != known_fail.end();
    fmt::print("criterion {} {}: {} ({:.1f} s){}\n", id, o.pass ? "PASS" : "FAIL", criteria[i].first,
               seconds_since(t0), !o.pass && known ? " [known failure, see notes]" : "");
    for (const auto& n : o.notes) fmt::print("    {}\n", n);
    std::fflush(stdout);
    if (!o.pass && !known) ++counted;
  }
  return counted;
}
