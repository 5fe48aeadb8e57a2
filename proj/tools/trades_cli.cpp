// trades run|validate|sweep|case-study <config> [--out DIR] [--seed N] [--oracle on|off]

#include "trades/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

struct Overrides {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string oracle;
  int threads = 0;
};

trades::ExperimentConfig load(const std::string& path, const Overrides& o) {
  auto cfg = trades::load_config(path);
  if (o.seed) {
    cfg.master_seed = *o.seed;
    cfg.trades.seed = *o.seed;
  }
  if (o.oracle == "on") cfg.oracle = true;
  if (o.oracle == "off") cfg.oracle = false;
  if (o.threads > 0) cfg.sweep_threads = o.threads;
  if (const char* env = std::getenv("TRADES_OUT_DIR"); env && *env) cfg.output_dir = env;
  if (!o.out.empty()) cfg.output_dir = o.out;
  trades::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TRADES: distributed Nash equilibrium seeking for aggregative games"};
  app.require_subcommand(1);
  Overrides o;
  std::string config;
  std::uint64_t seed = 0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("config", config, "experiment config file")->required();
    sub->add_option("--out", o.out, "output directory (overrides TRADES_OUT_DIR and the config)");
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--oracle", o.oracle, "compute the reference equilibrium")->check(CLI::IsMember({"on", "off"}));
  };
  auto* run = app.add_subcommand("run", "run TRADES and write trace.csv, report.json, config.echo");
  auto* validate = app.add_subcommand("validate", "check game and graph assumptions without iterating");
  auto* sweep = app.add_subcommand("sweep", "grid over gamma x delta");
  auto* cases = app.add_subcommand("case-study", "voltage-control scenario with base vs equilibrium voltages");
  for (auto* s : {run, validate, sweep, cases}) common(s);
  sweep->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  for (auto* s : {run, validate, sweep, cases})
    if (s->parsed() && s->count("--seed")) o.seed = seed;

  trades::ExperimentConfig cfg;
  try {
    cfg = load(config, o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (run->parsed()) return trades::cmd_run(cfg, cfg.output_dir);
    if (validate->parsed()) return trades::cmd_validate(cfg, std::cout);
    if (cases->parsed()) return trades::cmd_case_study(cfg, cfg.output_dir);
    if (cfg.sweep_gammas.empty() || cfg.sweep_deltas.empty()) {
      std::cerr << "error: sweep needs non-empty sweep.gammas and sweep.deltas\n";
      return 1;
    }
    const auto cells = trades::run_sweep(cfg, cfg.output_dir, cfg.sweep_threads);
    std::size_t ok = 0;
    for (const auto& c : cells) ok += c.converged;
    std::cout << ok << " of " << cells.size() << " cells converged; summary in "
              << (std::filesystem::path(cfg.output_dir) / "summary.csv").string() << '\n';
    return 0;
  } catch (const trades::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
