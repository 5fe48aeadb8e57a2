#pragma once

// Two-time-scale diagnostics: boundary-layer (trackers with frozen strategies),
// reduced system (exact aggregate), and a diminishing-stepsize baseline.

#include "trades/trades.hpp"

#include <cmath>
#include <functional>

namespace trades {

struct BoundaryLayerReport {
  std::vector<double> disagreement;  // ||z_perp^t - h(x)||, t = 0..steps
  std::vector<double> est_err_max;   // max_i ||z_i^t + phi_i(x_i) - sigma(x)||
  std::vector<double> ratios;        // disagreement[t+1] / disagreement[t]
};

/// Runs the tracker dynamics from z = 0 with x frozen. h(x) = -R_d' phi(x), so
/// z_perp - h(x) = R_d'(z + phi(x)).
inline BoundaryLayerReport boundary_layer_probe(const WeightedDigraph& graph, const GameDefinition& game,
                                                const StrategyProfile& x, long steps) {
  if (static_cast<std::size_t>(graph.size()) != game.num_agents())
    throw DimensionMismatch("boundary_layer_probe: graph size", static_cast<Index>(game.num_agents()), graph.size());
  const ConsensusBasis basis(graph.size());
  const RowMat phi = aggregation_outputs(game, x);
  const Vec sigma = phi.colwise().mean().transpose();
  RowMat z = RowMat::Zero(phi.rows(), phi.cols());

  BoundaryLayerReport rep;
  auto observe = [&]() {
    rep.disagreement.push_back(basis.project(z + phi).norm());
    RowMat est = z + phi;
    est.rowwise() -= sigma.transpose();
    rep.est_err_max.push_back(est.rowwise().norm().maxCoeff());
  };
  observe();
  for (long k = 0; k < steps; ++k) {
    z = consensus_step(graph, z, phi);
    observe();
    const double prev = rep.disagreement[rep.disagreement.size() - 2];
    rep.ratios.push_back(prev > 0.0 ? rep.disagreement.back() / prev : std::numeric_limits<double>::quiet_NaN());
  }
  return rep;
}

/// x+ = x + delta (P_X[x - gamma F(x)] - x), from the projected x0. Returns x^0..x^steps.
inline std::vector<StrategyProfile> reduced_system_run(const GameDefinition& game, const TradesConfig& cfg,
                                                       const StrategyProfile& x0, long steps) {
  cfg.validate();
  std::vector<StrategyProfile> traj;
  traj.push_back(project(game, x0));
  for (long k = 0; k < steps; ++k) {
    const StrategyProfile& x = traj.back();
    StrategyProfile trial(game.dims());
    trial.stacked() = x.stacked() - cfg.gamma * pseudo_gradient(game, x).stacked();
    trial = project(game, trial);
    StrategyProfile next(game.dims());
    next.stacked() = x.stacked() + cfg.delta * (trial.stacked() - x.stacked());
    if (!next.stacked().allFinite()) throw NonFiniteDetected(k + 1);
    traj.push_back(std::move(next));
  }
  return traj;
}

/// TRADES trajectory with trackers overwritten by their exact values every step.
inline std::vector<StrategyProfile> exact_tracking_run(const GameDefinition& game, const WeightedDigraph& graph,
                                                       const TradesConfig& cfg, const StrategyProfile& x0,
                                                       long steps) {
  cfg.validate();
  std::vector<StrategyProfile> traj;
  TradesState s = init(game, x0);
  traj.push_back(s.x);
  for (long k = 0; k < steps; ++k) {
    s = step(game, graph, cfg, s, StepOptions{true});
    traj.push_back(s.x);
  }
  return traj;
}

/// gamma_t = gamma0 / (1 + t)^exponent
struct DiminishingSchedule {
  double gamma0 = 0.01;
  double exponent = 0.6;

  double operator()(long t) const { return gamma0 / std::pow(1.0 + static_cast<double>(t), exponent); }

  /// sum gamma_t = inf and sum gamma_t^2 < inf  <=>  exponent in (1/2, 1].
  void validate() const {
    if (!(gamma0 > 0.0)) throw std::invalid_argument("DiminishingSchedule: gamma0 must be positive");
    if (!(exponent > 0.5 && exponent <= 1.0))
      throw std::invalid_argument("DiminishingSchedule: exponent must lie in (0.5, 1] (non-summable, square-summable)");
  }
};

struct BaselineOptions {
  long iterations = 1000;
  std::optional<StrategyProfile> x_star;
  bool check_schedule = true;
};

struct BaselineResult {
  TradesState state;
  std::vector<double> err_x;      // per iteration, NaN without oracle
  std::vector<double> step_norm;
};

/// The TRADES update with delta = 1 and gamma replaced by a diminishing gamma_t.
inline BaselineResult baseline_diminishing(const GameDefinition& game, const WeightedDigraph& graph,
                                           const DiminishingSchedule& schedule, const StrategyProfile& x0,
                                           const BaselineOptions& opts = {}) {
  if (opts.check_schedule) schedule.validate();
  BaselineResult res;
  res.state = init(game, x0);
  auto err = [&](const TradesState& s) {
    return opts.x_star ? distance(s.x, *opts.x_star) : std::numeric_limits<double>::quiet_NaN();
  };
  res.err_x.push_back(err(res.state));
  res.step_norm.push_back(0.0);
  for (long k = 0; k < opts.iterations; ++k) {
    const RowMat phi = aggregation_outputs(game, res.state.x);
    const double gamma = schedule(res.state.t);
    TradesState next;
    next.x = StrategyProfile(game.dims());
    for (std::size_t i = 0; i < game.num_agents(); ++i) {
      const Vec xi = res.state.x.agent(i);
      const Vec estimate = (phi.row(i) + res.state.z.row(i)).transpose();
      next.x.agent(i) = game.agent(i).projector(xi - gamma * local_operator(game, i, xi, estimate));
    }
    next.z = consensus_step(graph, res.state.z, phi);
    next.t = res.state.t + 1;
    if (!next.x.stacked().allFinite() || !next.z.allFinite()) throw NonFiniteDetected(next.t);
    res.step_norm.push_back((next.x.stacked() - res.state.x.stacked()).norm());
    res.state = std::move(next);
    res.err_x.push_back(err(res.state));
  }
  return res;
}

}  // namespace trades
