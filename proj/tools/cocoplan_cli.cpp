// Command-line driver: run experiments, generate task streams, lint configs.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cocoplan/scenario.hpp"

namespace fs = std::filesystem;
using namespace cocoplan;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kInfeasible = 3;

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_run(const std::string& path, int trials, std::optional<std::uint64_t> seed,
            std::optional<std::string> strategy, const std::string& out_dir, bool quiet) {
  ScenarioConfig cfg = load_scenario(path);
  if (seed) cfg.scenario.seed = *seed;
  if (strategy) {
    cfg.scenario.strategy.kind = strategy_kind_from_string(*strategy);
    cfg.scenario.strategy.validate(cfg.scenario.agents.size(), cfg.scenario.map, cfg.scenario.dt);
  }
  const auto result = run_experiment(cfg, trials);

  fs::create_directories(out_dir);
  std::string rows = std::string(kTrialColumns) + "\n";
  for (const auto& r : result.rows) rows += format_row(r) + "\n";
  write_file(fs::path(out_dir) / "trials.csv", rows);
  write_file(fs::path(out_dir) / "summary.csv",
             std::string(kSummaryColumns) + "\n" + format_summary(result.summary) + "\n");
  std::string series = std::string(kSeriesColumns) + "\n";
  for (const auto& p : result.series)
    series += fmt::format("{:.1f},{:.6f},{:.6f},{:.6f}\n", p.time, p.completed_mean, p.completed_variance,
                          p.slope_mean);
  write_file(fs::path(out_dir) / "series.csv", series);

  std::size_t violations = 0;
  for (std::size_t k = 0; k < result.runs.size(); ++k) {
    std::string log;
    for (const auto& e : result.runs[k].log) log += format_event(e) + "\n";
    write_file(fs::path(out_dir) / fmt::format("events_trial{}.log", k), log);
    for (const auto& note : result.runs[k].violation_notes) std::cerr << "trial " << k << ": " << note << "\n";
    violations += result.runs[k].metrics.violations;
  }
  if (!quiet) {
    std::cout << kTrialColumns << "\n";
    for (const auto& r : result.rows) std::cout << format_row(r) << "\n";
  }
  return violations > 0 ? kInfeasible : kOk;
}

int cmd_generate(const std::string& path, std::optional<std::uint64_t> seed, const std::string& out) {
  const ScenarioConfig cfg = load_scenario(path);
  if (!cfg.generator) throw ConfigError("generator", 0, "scenario has no generator section");
  const auto stream = generate_tasks(*cfg.generator, cfg.scenario.map, seed.value_or(cfg.scenario.seed));
  const std::string text = serialize_stream(stream);
  if (out.empty() || out == "-") std::cout << text;
  else write_file(out, text);
  return kOk;
}

int cmd_validate(const std::string& path) {
  const ScenarioConfig cfg = load_scenario(path);
  const Scenario sc = cfg.materialize(cfg.scenario.seed);
  sc.validate();
  std::cout << fmt::format("ok: {} agents, {} tasks, {} relations, strategy {}\n", sc.agents.size(),
                           sc.tasks.size(), sc.relations.size(), to_string(sc.strategy.kind));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint task planning and intermittent communication simulator"};
  app.require_subcommand(1);

  std::string scenario;
  int trials = 1;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::string out_dir = "out";
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Simulate a scenario and write CSV metrics and event logs");
  run->add_option("scenario", scenario, "Scenario YAML file")->required();
  run->add_option("--trials", trials, "Number of trials (seeds seed..seed+trials-1)")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--strategy", strategy, "Override the strategy kind (COCOPLAN, FIX, FPMR, FRDT, FIMR, RING, GREEDY)");
  run->add_option("--out", out_dir, "Output directory");
  run->add_flag("--quiet", quiet, "Do not print per-trial rows");

  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Write the task stream produced by a scenario's generator");
  gen->add_option("scenario", scenario, "Scenario YAML file")->required();
  gen->add_option("--seed", seed, "Override the scenario seed");
  gen->add_option("--out", gen_out, "Output file (stdout if omitted)");

  auto* val = app.add_subcommand("validate", "Check a scenario file");
  val->add_option("scenario", scenario, "Scenario YAML file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario, trials, seed, strategy, out_dir, quiet);
    if (*gen) return cmd_generate(scenario, seed, gen_out);
    if (*val) return cmd_validate(scenario);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::domain_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const Unreachable& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return kInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kOk;
}
