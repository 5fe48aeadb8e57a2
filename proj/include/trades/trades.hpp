#pragma once

// TRADES: projected pseudo-gradient steps driven by consensus-tracked
// estimates of the aggregate.
//
//   x_i+ = x_i + delta (P_{X_i}[x_i - gamma F~_i(x_i, phi_i(x_i) + z_i)] - x_i)
//   z_i+ = sum_j w_ij z_j + sum_j w_ij (phi_j(x_j) - phi_i(x_i))
//
// Both updates read the time-t state. Trackers start at zero so that
// sum_i z_i stays zero for all t.

#include "trades/consensus_basis.hpp"
#include "trades/game.hpp"
#include "trades/network.hpp"
#include "trades/rate_fit.hpp"

#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <string>

namespace trades {

struct TradesConfig {
  double gamma = 0.01;
  double delta = 0.5;
  long max_iter = 50'000;
  double stop_tol = 1e-13;  // on ||x+ - x|| / delta
  long trace_stride = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("TradesConfig: gamma must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("TradesConfig: delta must lie in (0, 1)");
    if (!(stop_tol > 0.0)) throw std::invalid_argument("TradesConfig: stop_tol must be positive");
    if (max_iter < 0) throw std::invalid_argument("TradesConfig: max_iter must be nonnegative");
    if (trace_stride < 1) throw std::invalid_argument("TradesConfig: trace_stride must be >= 1");
  }

  bool operator==(const TradesConfig&) const = default;
};

struct TradesState {
  StrategyProfile x;
  RowMat z;  // N x d
  long t = 0;
};

/// x^0 projected onto X, z^0 = 0.
inline TradesState init(const GameDefinition& game, const StrategyProfile& x0) {
  game.check(x0);
  return TradesState{project(game, x0), RowMat::Zero(game.num_agents(), game.aggregate_dim()), 0};
}

/// Seeded x^0 with i.i.d. N(0, scale^2) entries, then projected.
inline TradesState init(const GameDefinition& game, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  StrategyProfile x0(game.dims());
  for (Index k = 0; k < x0.n(); ++k) x0.stacked()[k] = g(rng);
  return init(game, x0);
}

/// z_i := sigma(x) - phi_i(x_i)
inline RowMat exact_trackers(const GameDefinition& game, const StrategyProfile& x) {
  const RowMat phi = aggregation_outputs(game, x);
  const Vec sigma = aggregate(game, x);
  RowMat z = -phi;
  z.rowwise() += sigma.transpose();
  return z;
}

struct StepOptions {
  bool exact_trackers = false;  // overwrite z with sigma(x) - phi_i(x_i) before the x-update
};

inline TradesState step(const GameDefinition& game, const WeightedDigraph& graph, const TradesConfig& cfg,
                        const TradesState& state, const StepOptions& opts = {}) {
  const RowMat phi = aggregation_outputs(game, state.x);
  const RowMat& z = state.z;
  RowMat z_exact;
  const RowMat* trackers = &z;
  if (opts.exact_trackers) {
    z_exact = exact_trackers(game, state.x);
    trackers = &z_exact;
  }

  TradesState next;
  next.x = StrategyProfile(game.dims());
  for (std::size_t i = 0; i < game.num_agents(); ++i) {
    const Vec xi = state.x.agent(i);
    const Vec estimate = (phi.row(i) + trackers->row(i)).transpose();
    const Vec trial = xi - cfg.gamma * local_operator(game, i, xi, estimate);
    const Vec projected = game.agent(i).projector(trial);
    next.x.agent(i) = xi + cfg.delta * (projected - xi);
  }
  next.z = consensus_step(graph, z, phi);
  next.t = state.t + 1;
  if (!next.x.stacked().allFinite() || !next.z.allFinite()) throw NonFiniteDetected(next.t);
  return next;
}

struct IterationTrace {
  std::vector<double> t;
  std::vector<double> err_x;        // ||x^t - x*||, NaN without oracle
  std::vector<double> est_err_max;  // max_i ||phi_i(x_i^t) + z_i^t - sigma(x^t)||
  std::vector<double> disagreement; // ||z_perp^t - h(x^t)||
  std::vector<double> step_norm;    // ||x^t - x^{t-1}||
  std::vector<double> tracker_sum;  // ||sum_i z_i^t|| / max(1, ||z^t||)
  std::vector<double> feasibility;  // max_i membership residual of x_i^t

  std::size_t size() const { return t.size(); }
};

inline void write_trace_csv(std::ostream& os, const IterationTrace& tr) {
  os << "t, err_x, est_err_max, disagreement, step_norm\n";
  os << std::setprecision(17);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << static_cast<long>(tr.t[k]) << ", " << tr.err_x[k] << ", " << tr.est_err_max[k] << ", "
       << tr.disagreement[k] << ", " << tr.step_norm[k] << '\n';
  }
}

enum class StopReason { stop_tol, max_iter };

struct ConvergenceReport {
  RateFit fit;
  std::string fit_source;  // "err_x" or "step_norm"
  double contraction = std::numeric_limits<double>::quiet_NaN();  // exp(-a2), per iteration
  double final_err = std::numeric_limits<double>::quiet_NaN();
  long iterations = 0;
  StopReason stop = StopReason::max_iter;
  double max_tracker_sum = 0.0;
  double max_feasibility = 0.0;

  /// Linear decay was observed (a2 > 0), or the run stopped before a fit window existed.
  bool pass() const {
    if (fit.valid()) return fit.a2 > 0.0;
    return stop == StopReason::stop_tol;
  }
};

struct RunOptions {
  std::optional<StrategyProfile> x_star;
  StepOptions step;
  RateFitOptions fit;
};

struct RunResult {
  TradesState state;
  IterationTrace trace;
  ConvergenceReport report;
};

namespace detail {

inline void record(const GameDefinition& game, const ConsensusBasis& basis, const TradesState& s, double step_norm,
                   const std::optional<StrategyProfile>& x_star, IterationTrace& tr) {
  const RowMat phi = aggregation_outputs(game, s.x);
  const Vec sigma = phi.colwise().mean().transpose();
  RowMat est = phi + s.z;
  est.rowwise() -= sigma.transpose();
  tr.t.push_back(static_cast<double>(s.t));
  tr.err_x.push_back(x_star ? distance(s.x, *x_star) : std::numeric_limits<double>::quiet_NaN());
  tr.est_err_max.push_back(est.rowwise().norm().maxCoeff());
  tr.disagreement.push_back(basis.project(s.z + phi).norm());
  tr.step_norm.push_back(step_norm);
  tr.tracker_sum.push_back(s.z.colwise().sum().norm() / std::max(1.0, s.z.norm()));
  tr.feasibility.push_back(feasibility_residual(game, s.x));
}

}  // namespace detail

/// Iterates until ||x+ - x|| / delta <= stop_tol or max_iter. Throws
/// NonFiniteDetected on overflow; hitting max_iter is reported, not thrown.
inline RunResult run(const GameDefinition& game, const WeightedDigraph& graph, const TradesConfig& cfg,
                     const StrategyProfile& x0, const RunOptions& opts = {}) {
  cfg.validate();
  if (static_cast<std::size_t>(graph.size()) != game.num_agents())
    throw DimensionMismatch("run: graph size", static_cast<Index>(game.num_agents()), graph.size());
  if (opts.x_star) game.check(*opts.x_star);

  const ConsensusBasis basis(graph.size());
  RunResult res;
  res.state = init(game, x0);
  detail::record(game, basis, res.state, 0.0, opts.x_star, res.trace);

  while (res.state.t < cfg.max_iter) {
    TradesState next = step(game, graph, cfg, res.state, opts.step);
    const double step_norm = (next.x.stacked() - res.state.x.stacked()).norm();
    res.state = std::move(next);
    const bool done = step_norm / cfg.delta <= cfg.stop_tol;
    if (done) res.report.stop = StopReason::stop_tol;
    if (done || res.state.t % cfg.trace_stride == 0 || res.state.t == cfg.max_iter)
      detail::record(game, basis, res.state, step_norm, opts.x_star, res.trace);
    if (done) break;
  }

  auto& rep = res.report;
  rep.iterations = res.state.t;
  const auto& column = opts.x_star ? res.trace.err_x : res.trace.step_norm;
  rep.fit_source = opts.x_star ? "err_x" : "step_norm";
  rep.fit = fit_linear_rate(res.trace.t, column, opts.fit);
  if (rep.fit.valid()) rep.contraction = std::exp(-rep.fit.a2);
  rep.final_err = column.back();
  for (std::size_t k = 0; k < res.trace.size(); ++k) {
    rep.max_tracker_sum = std::max(rep.max_tracker_sum, res.trace.tracker_sum[k]);
    rep.max_feasibility = std::max(rep.max_feasibility, res.trace.feasibility[k]);
  }
  return res;
}

}  // namespace trades
