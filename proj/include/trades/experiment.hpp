#pragma once

// Experiment orchestration: flat "key = value" config with [section] headers,
// scenario assembly, and the run / validate / sweep / case-study commands.

#include "trades/assumptions.hpp"
#include "trades/diagnostics.hpp"
#include "trades/grid.hpp"
#include "trades/io.hpp"
#include "trades/trades.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace trades {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class ScenarioKind { affine, voltage };

struct ExperimentConfig {
  int spec_version = 1;
  ScenarioKind scenario = ScenarioKind::affine;
  bool oracle = true;

  // seeds: component seeds derive from master unless given explicitly
  std::uint64_t master_seed = 1;
  std::optional<std::uint64_t> graph_seed, game_seed, init_seed;

  // affine scenario
  std::size_t affine_agents = 10;
  Index agent_dim = 2;
  Index aggregate_dim = 2;
  double coupling = 0.5;
  double curvature_floor = 1.0;
  double box_half_width = std::numeric_limits<double>::infinity();
  std::string game_file;

  // voltage scenario
  Index buses = 15;
  std::size_t ev_agents = 40;
  Index horizon = 24;
  double power_base_kva = 1000.0;
  double s_max_kva = 7.0;
  double charge_max_kwh = 40.0;
  double h_scale = 1.0;
  double weight_p = 1.0;
  double weight_q = 10.0;
  bool reactive_always_on = true;
  std::string network_file;
  std::string price_file;
  std::string agents_file;

  // graph
  double eta = 0.7;
  WeightMethod weights = WeightMethod::metropolis_symmetrized;
  std::string graph_file;

  TradesConfig trades;
  double init_scale = 1.0;
  bool baseline = false;
  double baseline_gamma0 = 0.01;
  double baseline_exponent = 0.6;

  double oracle_tol = 1e-13;
  long oracle_max_iter = 2'000'000;

  std::vector<double> sweep_gammas;
  std::vector<double> sweep_deltas;
  int sweep_threads = 1;

  std::string output_dir = "out";

  std::uint64_t seed_graph() const { return graph_seed.value_or(mix_seed(master_seed, 1)); }
  std::uint64_t seed_game() const { return game_seed.value_or(mix_seed(master_seed, 2)); }
  std::uint64_t seed_init() const { return init_seed.value_or(mix_seed(master_seed, 3)); }

  std::size_t agent_count() const { return scenario == ScenarioKind::affine ? affine_agents : ev_agents; }

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<double> parse_list(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    try {
      out.push_back(std::stod(item.substr(b)));
    } catch (const std::exception&) {
      throw ConfigError("config: '" + key + "' has a non-numeric entry '" + item + "'");
    }
  }
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? ", " : "") + format_double(v[k]);
  return s;
}

class ConfigReader {
 public:
  explicit ConfigReader(const boost::property_tree::ptree& pt) : pt_(pt) {}

  std::optional<std::string> raw(const std::string& key) {
    seen_.insert(key);
    auto v = pt_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    auto s = *v;
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  }

  template <class T>
  void read(const std::string& key, T& out) {
    auto v = raw(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        out = *v;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (*v == "on" || *v == "true" || *v == "1") out = true;
        else if (*v == "off" || *v == "false" || *v == "0") out = false;
        else throw std::invalid_argument("bool");
      } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t used = 0;
        out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v->empty() && (*v)[0] == '-') throw std::invalid_argument("negative");
        std::size_t used = 0;
        out = static_cast<T>(std::stoull(*v, &used));
        if (used != v->size()) throw std::invalid_argument("trailing");
      } else {
        std::size_t used = 0;
        out = static_cast<T>(std::stoll(*v, &used));
        if (used != v->size()) throw std::invalid_argument("trailing");
      }
    } catch (const std::exception&) {
      throw ConfigError("config: cannot parse '" + key + "' = '" + *v + "'");
    }
  }

  void read_seed(const std::string& key, std::optional<std::uint64_t>& out) {
    if (!raw(key)) return;
    std::uint64_t s = 0;
    read(key, s);
    out = s;
  }

  /// Every key in the file must be known.
  void reject_unknown() const {
    for (const auto& [section, body] : pt_) {
      if (body.empty()) {
        if (!seen_.count(section)) throw ConfigError("config: unknown key '" + section + "'");
        continue;
      }
      for (const auto& [key, _] : body) {
        const auto full = section + "." + key;
        if (!seen_.count(full)) throw ConfigError("config: unknown key '" + full + "'");
      }
    }
  }

 private:
  const boost::property_tree::ptree& pt_;
  std::set<std::string> seen_;
};

}  // namespace detail

/// Range checks; referenced files must exist.
inline void validate_config(const ExperimentConfig& c) {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  require(c.spec_version == 1, "unsupported spec_version");
  require(c.eta >= 0.0 && c.eta <= 1.0, "graph.eta must lie in [0, 1]");
  require(c.trades.gamma > 0.0 && std::isfinite(c.trades.gamma), "trades.gamma must be positive");
  require(c.trades.delta > 0.0 && c.trades.delta < 1.0, "trades.delta must lie in (0, 1)");
  require(c.trades.max_iter >= 1, "trades.max_iter must be >= 1");
  require(c.trades.stop_tol > 0.0, "trades.stop_tol must be positive");
  require(c.trades.trace_stride >= 1, "trades.trace_stride must be >= 1");
  require(c.init_scale > 0.0, "trades.init_scale must be positive");
  require(c.oracle_tol > 0.0 && c.oracle_max_iter >= 1, "oracle settings must be positive");
  require(c.sweep_threads >= 1, "sweep.threads must be >= 1");
  for (double g : c.sweep_gammas) require(g > 0.0 && std::isfinite(g), "sweep.gammas must be positive");
  for (double d : c.sweep_deltas) require(d > 0.0 && d < 1.0, "sweep.deltas must lie in (0, 1)");
  if (c.baseline) {
    require(c.baseline_gamma0 > 0.0, "trades.baseline_gamma0 must be positive");
    require(c.baseline_exponent > 0.5 && c.baseline_exponent <= 1.0, "trades.baseline_exponent must lie in (0.5, 1]");
  }
  if (c.scenario == ScenarioKind::affine) {
    require(c.affine_agents >= 1, "affine.agents must be >= 1");
    require(c.agent_dim >= 1 && c.aggregate_dim >= 1, "affine dimensions must be >= 1");
    require(c.curvature_floor > 0.0, "affine.curvature_floor must be positive");
    require(c.box_half_width > 0.0, "affine.box_half_width must be positive");
  } else {
    require(c.buses >= 2, "voltage.buses must be >= 2");
    require(c.ev_agents >= 1, "voltage.agents must be >= 1");
    require(c.horizon >= 1, "voltage.horizon must be >= 1");
    require(c.power_base_kva > 0.0, "voltage.power_base_kva must be positive");
    require(c.s_max_kva > 0.0, "voltage.s_max_kva must be positive");
    require(c.charge_max_kwh >= 0.0, "voltage.charge_max_kwh must be nonnegative");
    require(c.weight_p > 0.0 && c.weight_q > 0.0, "voltage local weights must be positive");
  }
  for (const auto* f : {&c.game_file, &c.network_file, &c.price_file, &c.agents_file, &c.graph_file}) {
    if (!f->empty()) require(std::filesystem::exists(*f), "referenced file '" + *f + "' does not exist");
  }
}

inline ExperimentConfig parse_config(std::istream& is) {
  boost::property_tree::ptree pt;
  try {
    boost::property_tree::ini_parser::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  detail::ConfigReader r(pt);
  r.read("spec_version", c.spec_version);
  std::string kind = "affine";
  r.read("scenario.kind", kind);
  if (kind == "affine") c.scenario = ScenarioKind::affine;
  else if (kind == "voltage") c.scenario = ScenarioKind::voltage;
  else throw ConfigError("config: scenario.kind must be 'affine' or 'voltage'");
  r.read("scenario.oracle", c.oracle);

  r.read("seeds.master", c.master_seed);
  r.read_seed("seeds.graph", c.graph_seed);
  r.read_seed("seeds.game", c.game_seed);
  r.read_seed("seeds.init", c.init_seed);

  r.read("affine.agents", c.affine_agents);
  r.read("affine.agent_dim", c.agent_dim);
  r.read("affine.aggregate_dim", c.aggregate_dim);
  r.read("affine.coupling", c.coupling);
  r.read("affine.curvature_floor", c.curvature_floor);
  r.read("affine.box_half_width", c.box_half_width);
  r.read("affine.game_file", c.game_file);

  r.read("voltage.buses", c.buses);
  r.read("voltage.agents", c.ev_agents);
  r.read("voltage.horizon", c.horizon);
  r.read("voltage.power_base_kva", c.power_base_kva);
  r.read("voltage.s_max_kva", c.s_max_kva);
  r.read("voltage.charge_max_kwh", c.charge_max_kwh);
  r.read("voltage.h_scale", c.h_scale);
  r.read("voltage.weight_p", c.weight_p);
  r.read("voltage.weight_q", c.weight_q);
  r.read("voltage.reactive_always_on", c.reactive_always_on);
  r.read("voltage.network_file", c.network_file);
  r.read("voltage.price_file", c.price_file);
  r.read("voltage.agents_file", c.agents_file);

  r.read("graph.eta", c.eta);
  std::string method = to_string(c.weights);
  r.read("graph.weights", method);
  try {
    c.weights = parse_weight_method(method);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  r.read("graph.file", c.graph_file);

  r.read("trades.gamma", c.trades.gamma);
  r.read("trades.delta", c.trades.delta);
  r.read("trades.max_iter", c.trades.max_iter);
  r.read("trades.stop_tol", c.trades.stop_tol);
  r.read("trades.trace_stride", c.trades.trace_stride);
  r.read("trades.init_scale", c.init_scale);
  r.read("trades.baseline", c.baseline);
  r.read("trades.baseline_gamma0", c.baseline_gamma0);
  r.read("trades.baseline_exponent", c.baseline_exponent);

  r.read("oracle.tol", c.oracle_tol);
  r.read("oracle.max_iter", c.oracle_max_iter);

  if (auto g = r.raw("sweep.gammas")) c.sweep_gammas = detail::parse_list(*g, "sweep.gammas");
  if (auto d = r.raw("sweep.deltas")) c.sweep_deltas = detail::parse_list(*d, "sweep.deltas");
  r.read("sweep.threads", c.sweep_threads);

  r.read("output.dir", c.output_dir);
  r.reject_unknown();
  c.trades.seed = c.master_seed;
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return parse_config(in);
}

/// Writes a config that parses back to an equal ExperimentConfig.
inline void write_config(std::ostream& os, const ExperimentConfig& c) {
  auto d = detail::format_double;
  auto b = [](bool v) { return v ? "on" : "off"; };
  os << "spec_version = " << c.spec_version << "\n\n";
  os << "[scenario]\nkind = " << (c.scenario == ScenarioKind::affine ? "affine" : "voltage")
     << "\noracle = " << b(c.oracle) << "\n\n";
  os << "[seeds]\nmaster = " << c.master_seed << '\n';
  if (c.graph_seed) os << "graph = " << *c.graph_seed << '\n';
  if (c.game_seed) os << "game = " << *c.game_seed << '\n';
  if (c.init_seed) os << "init = " << *c.init_seed << '\n';
  os << "; effective: graph " << c.seed_graph() << ", game " << c.seed_game() << ", init " << c.seed_init() << "\n\n";
  os << "[affine]\nagents = " << c.affine_agents << "\nagent_dim = " << c.agent_dim
     << "\naggregate_dim = " << c.aggregate_dim << "\ncoupling = " << d(c.coupling)
     << "\ncurvature_floor = " << d(c.curvature_floor) << "\nbox_half_width = " << d(c.box_half_width) << '\n';
  if (!c.game_file.empty()) os << "game_file = " << c.game_file << '\n';
  os << "\n[voltage]\nbuses = " << c.buses << "\nagents = " << c.ev_agents << "\nhorizon = " << c.horizon
     << "\npower_base_kva = " << d(c.power_base_kva) << "\ns_max_kva = " << d(c.s_max_kva)
     << "\ncharge_max_kwh = " << d(c.charge_max_kwh) << "\nh_scale = " << d(c.h_scale)
     << "\nweight_p = " << d(c.weight_p) << "\nweight_q = " << d(c.weight_q)
     << "\nreactive_always_on = " << b(c.reactive_always_on) << '\n';
  if (!c.network_file.empty()) os << "network_file = " << c.network_file << '\n';
  if (!c.price_file.empty()) os << "price_file = " << c.price_file << '\n';
  if (!c.agents_file.empty()) os << "agents_file = " << c.agents_file << '\n';
  os << "\n[graph]\neta = " << d(c.eta) << "\nweights = " << to_string(c.weights) << '\n';
  if (!c.graph_file.empty()) os << "file = " << c.graph_file << '\n';
  os << "\n[trades]\ngamma = " << d(c.trades.gamma) << "\ndelta = " << d(c.trades.delta)
     << "\nmax_iter = " << c.trades.max_iter << "\nstop_tol = " << d(c.trades.stop_tol)
     << "\ntrace_stride = " << c.trades.trace_stride << "\ninit_scale = " << d(c.init_scale)
     << "\nbaseline = " << b(c.baseline) << "\nbaseline_gamma0 = " << d(c.baseline_gamma0)
     << "\nbaseline_exponent = " << d(c.baseline_exponent) << "\n\n";
  os << "[oracle]\ntol = " << d(c.oracle_tol) << "\nmax_iter = " << c.oracle_max_iter << "\n\n";
  os << "[sweep]\n";
  if (!c.sweep_gammas.empty()) os << "gammas = " << detail::format_list(c.sweep_gammas) << '\n';
  if (!c.sweep_deltas.empty()) os << "deltas = " << detail::format_list(c.sweep_deltas) << '\n';
  os << "threads = " << c.sweep_threads << "\n\n";
  os << "[output]\ndir = " << c.output_dir << '\n';
}

struct VoltageContext {
  grid::RadialNetwork network;
  grid::DistFlowModel model;
  std::vector<grid::EvAgentSpec> agents;
  grid::VoltageGameConfig config;
};

struct Scenario {
  GameDefinition game;
  WeightedDigraph graph;
  StrategyProfile x0;
  std::optional<VoltageContext> voltage;
};

inline Scenario build_scenario(const ExperimentConfig& c) {
  std::optional<GameDefinition> game;
  std::optional<VoltageContext> voltage;
  if (c.scenario == ScenarioKind::affine) {
    if (!c.game_file.empty()) {
      std::ifstream in(c.game_file);
      game = game_from_affine_spec(read_affine_spec(in));
    } else {
      QuadraticFamilyParams p;
      p.agents = c.affine_agents;
      p.agent_dim = c.agent_dim;
      p.aggregate_dim = c.aggregate_dim;
      p.coupling = c.coupling;
      p.curvature_floor = c.curvature_floor;
      p.box_half_width = c.box_half_width;
      p.seed = c.seed_game();
      game = make_quadratic_family(p).game;
    }
  } else {
    VoltageContext v;
    std::mt19937_64 seeds(c.seed_game());
    const auto net_seed = seeds(), agent_seed = seeds(), price_seed = seeds();
    if (!c.network_file.empty()) {
      std::ifstream in(c.network_file);
      v.network = grid::read_network_csv(in);
    } else {
      v.network = grid::build_radial_network(c.buses, net_seed);
    }
    v.model = grid::distflow_sensitivities(v.network, grid::baseline_load(v.network, c.horizon, c.power_base_kva));
    if (!c.agents_file.empty()) {
      std::ifstream in(c.agents_file);
      v.agents = grid::read_agents_csv(in);
    } else {
      grid::AgentGenOptions ao;
      ao.s_max_kva = c.s_max_kva;
      ao.charge_max_kwh = c.charge_max_kwh;
      v.agents = grid::gen_agents(c.ev_agents, v.network, c.horizon, agent_seed, ao);
    }
    Vec price;
    if (!c.price_file.empty()) {
      std::ifstream in(c.price_file);
      price = grid::read_price_csv(in);
    } else {
      price = grid::price_curve(c.horizon, price_seed);
    }
    v.config = grid::default_voltage_config(v.model, std::move(price), c.power_base_kva);
    v.config.H *= c.h_scale;
    v.config.local_weight.diagonal().head(c.horizon).setConstant(c.weight_p);
    v.config.local_weight.diagonal().tail(c.horizon).setConstant(c.weight_q);
    v.config.reactive_always_on = c.reactive_always_on;
    game = grid::build_voltage_game(v.model, v.agents, v.config);
    voltage = std::move(v);
  }

  const auto N = static_cast<Index>(game->num_agents());
  WeightedDigraph graph;
  if (!c.graph_file.empty()) {
    std::ifstream in(c.graph_file);
    graph = read_graph(in).graph;
    if (graph.size() != N) throw ConfigError("graph file has " + std::to_string(graph.size()) + " nodes, game has " +
                                             std::to_string(N) + " agents");
    if (!graph.has_weights()) graph = make_doubly_stochastic(graph, c.weights);
  } else {
    graph = make_doubly_stochastic(gen_digraph(N, c.eta, c.seed_graph()), c.weights);
  }
  StrategyProfile x0 = init(*game, c.seed_init(), c.init_scale).x;
  return Scenario{std::move(*game), std::move(graph), std::move(x0), std::move(voltage)};
}

/// Writes via a temporary file and rename, so readers never see partial output.
inline void write_atomically(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp + "'");
    body(out);
    out.flush();
    if (!out) throw Error("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

inline nlohmann::json to_json(const AssumptionReport& r) {
  return {{"exact", r.exact},
          {"mu", finite_or_null(r.mu)},
          {"lipschitz", finite_or_null(r.lipschitz)},
          {"beta1_total", r.beta1_total},
          {"beta1", r.beta1},
          {"beta2", r.beta2},
          {"beta3", r.beta3},
          {"violations", r.violations},
          {"verdict", r.ok() ? "PASS" : "FAIL"}};
}

inline nlohmann::json to_json(const ConvergenceReport& r) {
  return {{"a1", finite_or_null(r.fit.a1)},
          {"a2", finite_or_null(r.fit.a2)},
          {"r_squared", finite_or_null(r.fit.r_squared)},
          {"fit_source", r.fit_source},
          {"fit_window_begin", r.fit.window_begin},
          {"fit_samples", r.fit.samples},
          {"contraction", finite_or_null(r.contraction)},
          {"final_error", finite_or_null(r.final_err)},
          {"iterations", r.iterations},
          {"stop_reason", r.stop == StopReason::stop_tol ? "stop_tol" : "max_iter"},
          {"max_tracker_sum", r.max_tracker_sum},
          {"max_feasibility_residual", r.max_feasibility}};
}

inline nlohmann::json seeds_json(const ExperimentConfig& c) {
  return {{"master", c.master_seed}, {"graph", c.seed_graph()}, {"game", c.seed_game()}, {"init", c.seed_init()}};
}

}  // namespace detail

struct RunOutcome {
  int exit_code = 0;
  nlohmann::json report;
  RunResult result;
};

/// Assembles the scenario, optionally solves the NE oracle, and runs TRADES.
/// Exit code 0 on PASS, 2 on divergence (non-finite state or a2 <= 0).
inline RunOutcome execute_run(const ExperimentConfig& c, const Scenario& sc,
                              const std::optional<OracleResult>& oracle) {
  RunOutcome out;
  auto& rep = out.report;
  rep["scenario"] = c.scenario == ScenarioKind::affine ? "affine" : "voltage";
  rep["seeds"] = detail::seeds_json(c);
  rep["gamma"] = c.trades.gamma;
  rep["delta"] = c.trades.delta;
  rep["agents"] = sc.game.num_agents();
  if (oracle)
    rep["oracle"] = {{"residual", oracle->residual}, {"iterations", oracle->iterations}, {"gamma", oracle->gamma}};
  RunOptions opts;
  if (oracle) opts.x_star = oracle->x;
  try {
    out.result = run(sc.game, sc.graph, c.trades, sc.x0, opts);
    rep["status"] = "ok";
    rep["convergence"] = detail::to_json(out.result.report);
    const bool pass = out.result.report.pass();
    rep["verdict"] = pass ? "PASS" : "FAIL";
    out.exit_code = pass ? 0 : 2;
  } catch (const NonFiniteDetected& e) {
    rep["status"] = "NonFiniteDetected";
    rep["non_finite_iteration"] = e.iteration();
    rep["verdict"] = "FAIL";
    out.exit_code = 2;
  }
  return out;
}

inline std::optional<OracleResult> maybe_oracle(const ExperimentConfig& c, const GameDefinition& game) {
  if (!c.oracle) return std::nullopt;
  OracleOptions oo;
  oo.tol = c.oracle_tol;
  oo.max_iter = c.oracle_max_iter;
  return solve_ne_oracle(game, oo);
}

inline void write_voltage_outputs(const std::filesystem::path& dir, const VoltageContext& v, const StrategyProfile& x,
                                  nlohmann::json& report) {
  const auto base = grid::evaluate_voltages(v.model, v.agents, v.config, StrategyProfile(x.dims()));
  const auto ne = grid::evaluate_voltages(v.model, v.agents, v.config, x);
  report["deviation"] = {{"base", base.deviation}, {"equilibrium", ne.deviation}};
  report["power_base_kva"] = v.config.power_base_kva;
  const Index T = v.model.horizon;
  write_atomically(dir / "voltages.csv", [&](std::ostream& os) {
    os << "bus, slot, v_base, v_equilibrium, q_kvar\n" << std::setprecision(17);
    for (Index b = 0; b < v.model.buses(); ++b)
      for (Index t = 0; t < T; ++t) {
        double q = 0.0;
        for (std::size_t i = 0; i < v.agents.size(); ++i)
          if (v.agents[i].bus == b) q += x.agent(i)[T + t] * v.config.power_base_kva;
        os << b << ", " << t << ", " << base.v[b * T + t] << ", " << ne.v[b * T + t] << ", " << q << '\n';
      }
  });
}

/// `run`: writes trace.csv, report.json and config.echo into out_dir.
inline int cmd_run(const ExperimentConfig& c, const std::filesystem::path& out_dir, std::ostream& log = std::cout) {
  const Scenario sc = build_scenario(c);
  const auto oracle = maybe_oracle(c, sc.game);
  RunOutcome out = execute_run(c, sc, oracle);
  std::filesystem::create_directories(out_dir);
  if (out.report["status"] == "ok") {
    write_atomically(out_dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, out.result.trace); });
    if (sc.voltage) write_voltage_outputs(out_dir, *sc.voltage, out.result.state.x, out.report);
  }
  if (c.baseline) {
    DiminishingSchedule sched{c.baseline_gamma0, c.baseline_exponent};
    BaselineOptions bo;
    bo.iterations = c.trades.max_iter;
    if (oracle) bo.x_star = oracle->x;
    try {
      const auto base = baseline_diminishing(sc.game, sc.graph, sched, sc.x0, bo);
      write_atomically(out_dir / "baseline.csv", [&](std::ostream& os) {
        os << "t, err_x, step_norm\n" << std::setprecision(17);
        for (std::size_t k = 0; k < base.err_x.size(); ++k)
          os << k << ", " << base.err_x[k] << ", " << base.step_norm[k] << '\n';
      });
      out.report["baseline"] = {{"final_error", detail::finite_or_null(base.err_x.back())}};
    } catch (const NonFiniteDetected& e) {
      out.report["baseline"] = {{"status", "NonFiniteDetected"}, {"iteration", e.iteration()}};
    }
  }
  write_atomically(out_dir / "report.json", [&](std::ostream& os) { os << out.report.dump(2) << '\n'; });
  write_atomically(out_dir / "config.echo", [&](std::ostream& os) { write_config(os, c); });
  log << "verdict: " << out.report["verdict"].get<std::string>() << " (exit " << out.exit_code << ")\n";
  return out.exit_code;
}

/// `validate`: assumption and graph checks without iterating. Exit 0 when all pass, 2 otherwise.
inline int cmd_validate(const ExperimentConfig& c, std::ostream& os) {
  bool ok = true;
  auto line = [&](bool pass, const std::string& what) {
    os << (pass ? "PASS  " : "FAIL  ") << what << '\n';
    ok = ok && pass;
  };
  std::optional<Scenario> sc;
  try {
    sc = build_scenario(c);
  } catch (const std::invalid_argument& e) {
    line(false, std::string("game construction: ") + e.what());
    return 2;
  } catch (const InfeasibleSpec& e) {
    line(false, std::string("feasible sets: ") + e.what());
    return 2;
  }
  ValidationOptions vo;
  vo.seed = c.seed_game();
  if (sc->voltage) vo.sample_scale = c.s_max_kva / c.power_base_kva;
  const auto rep = validate_assumptions(sc->game, vo);
  std::ostringstream mu;
  mu << std::setprecision(6) << (rep.exact ? "strong monotonicity mu = " : "strong monotonicity mu_hat = ") << rep.mu
     << ", L = " << rep.lipschitz;
  line(rep.mu > 0.0, mu.str());
  std::ostringstream betas;
  betas << std::setprecision(6) << "sampled Lipschitz bounds beta1 " << rep.beta1_total << " / " << rep.beta1
        << ", beta2 " << rep.beta2 << ", beta3 " << rep.beta3;
  line(std::isfinite(rep.beta1_total) && std::isfinite(rep.beta2) && std::isfinite(rep.beta3), betas.str());
  line(rep.projector_idempotence <= 1e-8, "projectors idempotent on sampled points");

  double cert = 0.0;
  for (std::size_t i = 0; i < sc->game.num_agents(); ++i) {
    const auto& p = sc->game.agent(i).projector;
    cert = std::max(cert, p.residual(p(Vec::Zero(p.dim()))));
  }
  std::ostringstream fs;
  fs << "feasible sets nonempty, closed, convex (max certificate residual " << cert << ")";
  line(cert <= 1e-8, fs.str());

  line(sc->graph.strongly_connected(), "graph strongly connected (" + std::to_string(sc->graph.size()) + " nodes, " +
                                           std::to_string(sc->graph.edge_count()) + " edges)");
  line(sc->graph.all_self_loops(), "self-loops present");
  std::ostringstream ds;
  ds << "weights doubly stochastic (residual " << sc->graph.stochasticity_residual() << ")";
  line(sc->graph.stochasticity_residual() <= 1e-12, ds.str());
  const auto spec = spectrum(sc->graph);
  std::ostringstream gap;
  gap << std::setprecision(6) << "consensus contraction rho = " << spec.rho_disagreement << ", spectral gap "
      << 1.0 - spec.rho_disagreement;
  line(spec.rho_disagreement < 1.0, gap.str());
  for (const auto& v : rep.violations) line(false, v);
  os << (ok ? "all checks PASS\n" : "some checks FAIL\n");
  return ok ? 0 : 2;
}

struct SweepCell {
  double gamma = 0.0;
  double delta = 0.0;
  bool converged = false;
  double a2 = std::numeric_limits<double>::quiet_NaN();
  long iters = -1;  // first iteration with error <= 1e-6, -1 if never
};

inline std::string cell_name(std::size_t gi, std::size_t di) {
  return "cell_g" + std::to_string(gi) + "_d" + std::to_string(di);
}

/// `sweep`: one isolated TRADES run per (gamma, delta), optionally on several threads.
inline std::vector<SweepCell> run_sweep(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                                        int threads) {
  if (c.sweep_gammas.empty() || c.sweep_deltas.empty()) throw ConfigError("sweep: empty gamma x delta grid");
  const Scenario sc = build_scenario(c);
  const auto oracle = maybe_oracle(c, sc.game);
  const std::size_t ng = c.sweep_gammas.size(), nd = c.sweep_deltas.size();
  std::vector<SweepCell> cells(ng * nd);
  std::filesystem::create_directories(out_dir);
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::exception_ptr failure;

  auto worker = [&]() {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      try {
        const std::size_t gi = k / nd, di = k % nd;
        ExperimentConfig cc = c;
        cc.trades.gamma = c.sweep_gammas[gi];
        cc.trades.delta = c.sweep_deltas[di];
        RunOutcome out = execute_run(cc, sc, oracle);
        SweepCell& cell = cells[k];
        cell.gamma = cc.trades.gamma;
        cell.delta = cc.trades.delta;
        const auto dir = out_dir / cell_name(gi, di);
        std::filesystem::create_directories(dir);
        if (out.report["status"] == "ok") {
          const auto& tr = out.result.trace;
          const auto& col = oracle ? tr.err_x : tr.step_norm;
          cell.a2 = out.result.report.fit.a2;
          cell.converged = out.exit_code == 0 && col.back() <= 1e-6;
          for (std::size_t s = 0; s < tr.size(); ++s)
            if (col[s] <= 1e-6 && (oracle || s > 0)) {
              cell.iters = static_cast<long>(tr.t[s]);
              break;
            }
          write_atomically(dir / "trace.csv", [&](std::ostream& os) { write_trace_csv(os, tr); });
        }
        write_atomically(dir / "report.json", [&](std::ostream& os) { os << out.report.dump(2) << '\n'; });
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  write_atomically(out_dir / "summary.csv", [&](std::ostream& os) {
    os << "gamma, delta, converged, a2, iters\n";
    for (const auto& cell : cells)
      os << detail::format_double(cell.gamma) << ", " << detail::format_double(cell.delta) << ", "
         << (cell.converged ? 1 : 0) << ", " << detail::format_double(cell.a2) << ", " << cell.iters << '\n';
  });
  write_atomically(out_dir / "config.echo", [&](std::ostream& os) { write_config(os, c); });
  return cells;
}

/// `case-study`: the voltage scenario with oracle, plus bus voltages at base case and equilibrium.
inline int cmd_case_study(ExperimentConfig c, const std::filesystem::path& out_dir, std::ostream& log = std::cout) {
  c.scenario = ScenarioKind::voltage;
  c.oracle = true;
  validate_config(c);
  const int code = cmd_run(c, out_dir, log);
  std::ifstream in(out_dir / "report.json");
  const auto rep = nlohmann::json::parse(in);
  if (rep.contains("deviation")) {
    log << std::setprecision(6) << "deviation ||sigma - sigma_ref||_H^2: base " << rep["deviation"]["base"].get<double>()
        << ", equilibrium " << rep["deviation"]["equilibrium"].get<double>() << '\n';
  }
  return code;
}

}  // namespace trades
