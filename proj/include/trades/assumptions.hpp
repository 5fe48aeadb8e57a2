#pragma once

// Assumption checks (strong monotonicity, Lipschitz bounds, well-posed sets) and
// the centralized projected-gradient NE oracle used as reference x*.

#include "trades/affine.hpp"
#include "trades/game.hpp"

#include <algorithm>
#include <random>
#include <sstream>
#include <string>

namespace trades {

struct AssumptionReport {
  bool exact = false;  // mu/L from a closed-form affine certificate
  double mu = 0.0;     // exact modulus, or sampled lower bound
  double lipschitz = 0.0;
  double beta1_total = 0.0;  // grad_{x_i} J_i(x_i, phi_i(x_i)/N + y) in (x_i, y)
  double beta1 = 0.0;        // grad1 J_i
  double beta2 = 0.0;        // grad2 J_i
  double beta3 = 0.0;        // phi_i
  double projector_idempotence = 0.0;
  int samples = 0;
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
};

struct ValidationOptions {
  int sample_budget = 64;
  double sample_scale = 1.0;
  std::uint64_t seed = 7;
};

namespace detail {

inline Vec random_vector(std::mt19937_64& rng, Index n, double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (Index k = 0; k < n; ++k) v[k] = g(rng);
  return v;
}

inline double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

}  // namespace detail

inline AssumptionReport validate_assumptions(const GameDefinition& game, const ValidationOptions& opts = {}) {
  if (opts.sample_budget < 2) throw std::invalid_argument("validate_assumptions: sample_budget must be >= 2");
  AssumptionReport rep;
  rep.samples = opts.sample_budget;
  std::mt19937_64 rng(opts.seed);
  const auto N = game.num_agents();
  const Index d = game.aggregate_dim();

  auto random_feasible = [&]() {
    StrategyProfile x(game.dims());
    x.stacked() = detail::random_vector(rng, game.total_dim(), opts.sample_scale);
    return project(game, x);
  };

  if (game.affine()) {
    rep.exact = true;
    rep.mu = affine_monotonicity_modulus(game.affine()->A);
    rep.lipschitz = affine_lipschitz(game.affine()->A);
  } else {
    rep.mu = std::numeric_limits<double>::infinity();
    for (int k = 0; k < opts.sample_budget; ++k) {
      const auto x = random_feasible();
      const auto y = random_feasible();
      const Vec dx = x.stacked() - y.stacked();
      const double nd = dx.squaredNorm();
      if (nd == 0.0) continue;
      const Vec dF = pseudo_gradient(game, x).stacked() - pseudo_gradient(game, y).stacked();
      rep.mu = std::min(rep.mu, dF.dot(dx) / nd);
      rep.lipschitz = std::max(rep.lipschitz, dF.norm() / std::sqrt(nd));
    }
  }

  for (std::size_t i = 0; i < N; ++i) {
    const auto& a = game.agent(i);
    const Index ni = a.rule.dim_in;
    const int per_agent = std::max(2, opts.sample_budget / static_cast<int>(std::min<std::size_t>(N, 8)));
    for (int k = 0; k < per_agent; ++k) {
      const Vec x1 = a.projector(detail::random_vector(rng, ni, opts.sample_scale));
      const Vec x2 = a.projector(detail::random_vector(rng, ni, opts.sample_scale));
      const Vec y1 = detail::random_vector(rng, d, opts.sample_scale);
      const Vec y2 = detail::random_vector(rng, d, opts.sample_scale);
      const double dist = std::sqrt((x1 - x2).squaredNorm() + (y1 - y2).squaredNorm());
      const Vec s1 = a.rule.eval(x1) / static_cast<double>(N) + y1;
      const Vec s2 = a.rule.eval(x2) / static_cast<double>(N) + y2;
      rep.beta1_total = std::max(
          rep.beta1_total,
          detail::ratio((local_operator(game, i, x1, s1) - local_operator(game, i, x2, s2)).norm(), dist));
      rep.beta1 = std::max(rep.beta1, detail::ratio((a.cost.grad1(x1, y1) - a.cost.grad1(x2, y2)).norm(), dist));
      rep.beta2 = std::max(rep.beta2, detail::ratio((a.cost.grad2(x1, y1) - a.cost.grad2(x2, y2)).norm(), dist));
      rep.beta3 = std::max(rep.beta3, detail::ratio((a.rule.eval(x1) - a.rule.eval(x2)).norm(), (x1 - x2).norm()));
      rep.projector_idempotence = std::max(rep.projector_idempotence, (a.projector(x1) - x1).norm());
    }
  }

  if (!(rep.mu > 0.0)) {
    std::ostringstream os;
    os << "pseudo-gradient is not strongly monotone (mu " << (rep.exact ? "= " : ">= ") << rep.mu << ")";
    rep.violations.push_back(os.str());
  }
  if (rep.projector_idempotence > 1e-8) rep.violations.push_back("projector is not idempotent on sampled points");
  return rep;
}

struct OracleOptions {
  std::optional<double> gamma;
  double tol = 1e-12;
  long max_iter = 1'000'000;
};

struct OracleResult {
  StrategyProfile x;
  double residual = 0.0;
  long iterations = 0;
  double gamma = 0.0;
};

/// Default stepsize 0.9 * 2 mu / L^2 (projected-gradient contraction region).
inline double default_oracle_stepsize(const AssumptionReport& rep) {
  if (!(rep.mu > 0.0) || !(rep.lipschitz > 0.0))
    throw std::invalid_argument("solve_ne_oracle: no valid (mu, L) estimate; supply gamma explicitly");
  return 0.9 * 2.0 * rep.mu / (rep.lipschitz * rep.lipschitz);
}

/// Iterates x <- P_X[x - gamma F(x)] until ||x - P_X[x - gamma F(x)]|| <= tol.
inline OracleResult solve_ne_oracle(const GameDefinition& game, const OracleOptions& opts = {}) {
  double gamma = 0.0;
  if (opts.gamma) {
    gamma = *opts.gamma;
  } else {
    gamma = default_oracle_stepsize(validate_assumptions(game, ValidationOptions{}));
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("solve_ne_oracle: gamma must be positive");

  StrategyProfile x = project(game, game.zero_profile());
  StrategyProfile trial(game.dims());
  double residual = std::numeric_limits<double>::infinity();
  for (long it = 0; it < opts.max_iter; ++it) {
    trial.stacked() = x.stacked() - gamma * pseudo_gradient(game, x).stacked();
    trial = project(game, trial);
    residual = (trial.stacked() - x.stacked()).norm();
    if (!std::isfinite(residual)) throw NonFiniteDetected(it);
    if (residual <= opts.tol) return {std::move(x), residual, it, gamma};
    std::swap(x, trial);
  }
  throw MaxIterExceeded("solve_ne_oracle", opts.max_iter, residual);
}

}  // namespace trades
