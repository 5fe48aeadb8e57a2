#pragma once

// Closed-form game families with affine pseudo-gradient F(x) = A x + b.

#include "trades/game.hpp"

#include <limits>
#include <random>

namespace trades {

/// Raw affine game: F(x) = A x + b on a product of per-agent boxes.
struct AffineGameSpec {
  Mat A;
  Vec b;
  std::vector<Index> dims;
  Vec lower;  // stacked, -inf allowed
  Vec upper;  // stacked, +inf allowed

  Index n() const { return b.size(); }

  void validate() const {
    Index n = 0;
    for (auto k : dims) n += k;
    if (A.rows() != n || A.cols() != n) throw DimensionMismatch("AffineGameSpec A", n, A.rows());
    if (b.size() != n) throw DimensionMismatch("AffineGameSpec b", n, b.size());
    if (lower.size() != n || upper.size() != n) throw DimensionMismatch("AffineGameSpec bounds", n, lower.size());
  }
};

/// Strong monotonicity modulus of F(x) = A x + b: lambda_min((A + A')/2).
inline double affine_monotonicity_modulus(const Mat& A) {
  const Mat sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

/// Spectral norm of A; symmetric matrices reuse a symmetric eigensolve.
inline double affine_lipschitz(const Mat& A) {
  if (A.size() == 0) return 0.0;
  if ((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * A.cwiseAbs().maxCoeff()) {
    Eigen::SelfAdjointEigenSolver<Mat> es(A, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return Eigen::BDCSVD<Mat>(A).singularValues()(0);
}

/// Realizes an AffineGameSpec as an aggregative game: each agent contributes its
/// own block to a full-state aggregate (phi_i(x_i) = N E_i x_i, so sigma(x) = x)
/// and grad1 J_i(x_i, s) = (A s + b)_i, grad2 J_i = 0.
inline GameDefinition game_from_affine_spec(const AffineGameSpec& spec) {
  spec.validate();
  const auto N = spec.dims.size();
  const Index n = spec.n();
  auto A = std::make_shared<const Mat>(spec.A);
  auto b = std::make_shared<const Vec>(spec.b);
  std::vector<Agent> agents;
  Index offset = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const Index ni = spec.dims[i];
    Mat embed = Mat::Zero(n, ni);
    embed.block(offset, 0, ni, ni) = static_cast<double>(N) * Mat::Identity(ni, ni);

    CostOracle cost;
    cost.grad1 = [A, b, offset, ni](const Vec&, const Vec& s) -> Vec {
      return A->middleRows(offset, ni) * s + b->segment(offset, ni);
    };
    cost.grad2 = [n](const Vec&, const Vec&) -> Vec { return Vec::Zero(n); };
    cost.beta2 = 0.0;

    agents.push_back(Agent{std::move(cost), linear_rule(std::move(embed)),
                           FeasibleSetProjector(ConvexSet::box(spec.lower.segment(offset, ni),
                                                               spec.upper.segment(offset, ni)))});
    offset += ni;
  }
  GameDefinition game(std::move(agents), n);
  game.set_affine({spec.A, spec.b});
  return game;
}

struct QuadraticFamilyParams {
  std::size_t agents = 10;
  Index agent_dim = 2;
  Index aggregate_dim = 2;
  double coupling = 0.5;  // kappa
  double curvature_floor = 1.0;
  double box_half_width = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 1;
};

struct QuadraticFamily {
  GameDefinition game;
  AffineGameSpec spec;
  std::vector<Mat> Q, C, Phi;
  std::vector<Vec> r;
};

/// J_i(x_i, s) = 1/2 x_i'Q_i x_i + r_i'x_i + kappa x_i'C_i s with phi_i(x_i) = Phi_i x_i.
/// The attached affine certificate is assembled by expanding F symbolically:
///   A_ii = Q_i + kappa/N (C_i Phi_i + Phi_i' C_i'),  A_ij = kappa/N C_i Phi_j,  b_i = r_i.
inline QuadraticFamily make_quadratic_family(const QuadraticFamilyParams& p) {
  if (p.agents == 0 || p.agent_dim <= 0 || p.aggregate_dim <= 0)
    throw std::invalid_argument("make_quadratic_family: empty dimensions");
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](Index rows, Index cols, double scale) {
    Mat m(rows, cols);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) m(r, c) = scale * gauss(rng);
    return m;
  };

  const auto N = p.agents;
  const Index ni = p.agent_dim;
  const Index d = p.aggregate_dim;
  const double kappa = p.coupling;
  std::vector<Mat> Q, C, Phi;
  std::vector<Vec> r;
  for (std::size_t i = 0; i < N; ++i) {
    const Mat M = draw(ni, ni, 1.0);
    Q.push_back(M * M.transpose() / static_cast<double>(ni) + p.curvature_floor * Mat::Identity(ni, ni));
    r.push_back(draw(ni, 1, 1.0).col(0));
    Phi.push_back(draw(d, ni, 1.0 / std::sqrt(static_cast<double>(ni))));
    C.push_back(draw(ni, d, 1.0 / std::sqrt(static_cast<double>(d))));
  }

  std::vector<Agent> agents;
  for (std::size_t i = 0; i < N; ++i) {
    auto Qi = std::make_shared<const Mat>(Q[i]);
    auto Ci = std::make_shared<const Mat>(C[i]);
    auto ri = std::make_shared<const Vec>(r[i]);
    CostOracle cost;
    cost.grad1 = [Qi, Ci, ri, kappa](const Vec& x, const Vec& s) -> Vec {
      return *Qi * x + *ri + kappa * (*Ci * s);
    };
    cost.grad2 = [Ci, kappa](const Vec& x, const Vec&) -> Vec { return kappa * (Ci->transpose() * x); };
    cost.value = [Qi, Ci, ri, kappa](const Vec& x, const Vec& s) {
      return 0.5 * x.dot(*Qi * x) + ri->dot(x) + kappa * x.dot(*Ci * s);
    };
    const double w = p.box_half_width;
    agents.push_back(
        Agent{std::move(cost), linear_rule(Phi[i]),
              FeasibleSetProjector(ConvexSet::box(Vec::Constant(ni, -w), Vec::Constant(ni, w)))});
  }

  AffineGameSpec spec;
  spec.dims.assign(N, ni);
  const Index n = static_cast<Index>(N) * ni;
  spec.A = Mat::Zero(n, n);
  spec.b = Vec(n);
  spec.lower = Vec::Constant(n, -p.box_half_width);
  spec.upper = Vec::Constant(n, p.box_half_width);
  const double scale = kappa / static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) {
    spec.b.segment(i * ni, ni) = r[i];
    for (std::size_t j = 0; j < N; ++j) {
      Mat block = scale * C[i] * Phi[j];
      if (i == j) block += Q[i] + scale * Phi[i].transpose() * C[i].transpose();
      spec.A.block(i * ni, j * ni, ni, ni) = block;
    }
  }

  GameDefinition game(std::move(agents), d);
  game.set_affine({spec.A, spec.b});
  return QuadraticFamily{std::move(game), std::move(spec), std::move(Q), std::move(C), std::move(Phi), std::move(r)};
}

}  // namespace trades
