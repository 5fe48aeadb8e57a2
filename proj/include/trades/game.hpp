#pragma once

// Aggregative games: J_i(x_i, sigma(x)) with sigma(x) = (1/N) sum_i phi_i(x_i).

#include "trades/core.hpp"
#include "trades/projection.hpp"
#include "trades/strategy.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <vector>

namespace trades {

/// phi_i : R^{n_i} -> R^d together with its Jacobian.
struct AggregationRule {
  Index dim_in = 0;
  Index dim_out = 0;
  std::function<Vec(const Vec&)> eval;
  std::function<Mat(const Vec&)> jacobian;
  /// Optional fast path for jacobian(x)' * w; structured rules avoid forming the Jacobian.
  std::function<Vec(const Vec&, const Vec&)> jacobian_transpose_times;
  std::optional<double> lipschitz_bound;

  Vec jt_times(const Vec& x, const Vec& w) const {
    if (jacobian_transpose_times) return jacobian_transpose_times(x, w);
    return jacobian(x).transpose() * w;
  }
};

inline AggregationRule linear_rule(Mat phi) {
  auto m = std::make_shared<const Mat>(std::move(phi));
  AggregationRule rule;
  rule.dim_in = m->cols();
  rule.dim_out = m->rows();
  rule.eval = [m](const Vec& x) -> Vec { return *m * x; };
  rule.jacobian = [m](const Vec&) -> Mat { return *m; };
  rule.jacobian_transpose_times = [m](const Vec&, const Vec& w) -> Vec { return m->transpose() * w; };
  rule.lipschitz_bound = m->size() == 0 ? 0.0 : m->jacobiSvd().singularValues()(0);
  return rule;
}

/// Partial gradients of J_i(x_i, s): grad1 in x_i, grad2 in s.
struct CostOracle {
  std::function<Vec(const Vec&, const Vec&)> grad1;
  std::function<Vec(const Vec&, const Vec&)> grad2;
  std::function<double(const Vec&, const Vec&)> value;  // reporting only
  std::optional<double> beta1;
  std::optional<double> beta2;
};

struct Agent {
  CostOracle cost;
  AggregationRule rule;
  FeasibleSetProjector projector;
};

/// F(x) = A x + b, attached by constructors that know the closed form.
struct AffineCertificate {
  Mat A;
  Vec b;
};

class GameDefinition {
 public:
  GameDefinition(std::vector<Agent> agents, Index aggregate_dim) : agents_(std::move(agents)), d_(aggregate_dim) {
    if (agents_.empty()) throw std::invalid_argument("GameDefinition: no agents");
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      const auto& a = agents_[i];
      if (a.rule.dim_out != d_) throw DimensionMismatch("aggregation rule output of agent " + std::to_string(i), d_,
                                                        a.rule.dim_out);
      if (a.projector.dim() != a.rule.dim_in)
        throw DimensionMismatch("projector of agent " + std::to_string(i), a.rule.dim_in, a.projector.dim());
      dims_.push_back(a.rule.dim_in);
    }
  }

  std::size_t num_agents() const { return agents_.size(); }
  Index aggregate_dim() const { return d_; }
  const std::vector<Index>& dims() const { return dims_; }
  Index total_dim() const {
    Index n = 0;
    for (auto k : dims_) n += k;
    return n;
  }
  const Agent& agent(std::size_t i) const { return agents_[i]; }

  const std::optional<AffineCertificate>& affine() const { return affine_; }
  void set_affine(AffineCertificate cert) {
    if (cert.A.rows() != total_dim() || cert.A.cols() != total_dim() || cert.b.size() != total_dim())
      throw DimensionMismatch("affine certificate", total_dim(), cert.A.rows());
    affine_ = std::move(cert);
  }

  StrategyProfile zero_profile() const { return StrategyProfile(dims_); }

  void check(const StrategyProfile& x) const {
    if (x.dims() != dims_) throw DimensionMismatch("strategy profile length", total_dim(), x.n());
  }

 private:
  std::vector<Agent> agents_;
  Index d_;
  std::vector<Index> dims_;
  std::optional<AffineCertificate> affine_;
};

/// phi_i(x_i) for all agents, one row per agent.
inline RowMat aggregation_outputs(const GameDefinition& game, const StrategyProfile& x) {
  game.check(x);
  RowMat out(game.num_agents(), game.aggregate_dim());
  for (std::size_t i = 0; i < game.num_agents(); ++i) out.row(i) = game.agent(i).rule.eval(x.agent(i)).transpose();
  return out;
}

/// sigma(x) = (1/N) sum_i phi_i(x_i)
inline Vec aggregate(const GameDefinition& game, const StrategyProfile& x) {
  game.check(x);
  Vec sum = Vec::Zero(game.aggregate_dim());
  for (std::size_t i = 0; i < game.num_agents(); ++i) sum += game.agent(i).rule.eval(x.agent(i));
  return sum / static_cast<double>(game.num_agents());
}

/// F~_i(x_i, s) = grad1 J_i(x_i, s) + (Dphi_i(x_i)' grad2 J_i(x_i, s)) / N
inline Vec local_operator(const GameDefinition& game, std::size_t i, const Vec& xi, const Vec& s) {
  const auto& a = game.agent(i);
  if (xi.size() != a.rule.dim_in) throw DimensionMismatch("local_operator x_i", a.rule.dim_in, xi.size());
  if (s.size() != game.aggregate_dim()) throw DimensionMismatch("local_operator s", game.aggregate_dim(), s.size());
  Vec out = a.cost.grad1(xi, s);
  out.noalias() += a.rule.jt_times(xi, a.cost.grad2(xi, s)) / static_cast<double>(game.num_agents());
  return out;
}

/// F(x) = col_i(grad_{x_i} J_i(x_i, sigma(x))), evaluated as the stack of
/// local operators at the exact aggregate.
inline StrategyProfile pseudo_gradient(const GameDefinition& game, const StrategyProfile& x) {
  const Vec sigma = aggregate(game, x);
  StrategyProfile out(game.dims());
  for (std::size_t i = 0; i < game.num_agents(); ++i) out.agent(i) = local_operator(game, i, x.agent(i), sigma);
  return out;
}

/// Blockwise P_X.
inline StrategyProfile project(const GameDefinition& game, const StrategyProfile& x) {
  game.check(x);
  StrategyProfile out(game.dims());
  for (std::size_t i = 0; i < game.num_agents(); ++i) out.agent(i) = game.agent(i).projector(x.agent(i));
  return out;
}

inline double feasibility_residual(const GameDefinition& game, const StrategyProfile& x) {
  game.check(x);
  double r = 0.0;
  for (std::size_t i = 0; i < game.num_agents(); ++i) r = std::max(r, game.agent(i).projector.residual(x.agent(i)));
  return r;
}

}  // namespace trades
