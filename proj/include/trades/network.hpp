#pragma once

// Communication digraphs with doubly stochastic weights and the perturbed
// consensus step z+ = W_d z + (W_d - I) phi.

#include "trades/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>
#include <vector>

namespace trades {

/// Edge (j, i) means agent i receives from j; w_ij > 0 iff (j, i) is an edge.
class WeightedDigraph {
 public:
  WeightedDigraph() = default;
  explicit WeightedDigraph(Index n)
      : n_(n), adjacency_(Eigen::MatrixX<char>::Zero(n, n)), in_neighbors_(static_cast<std::size_t>(n)) {}

  Index size() const { return n_; }

  void add_edge(Index from, Index to) {
    if (from < 0 || to < 0 || from >= n_ || to >= n_) throw std::out_of_range("WeightedDigraph: node out of range");
    if (adjacency_(to, from)) return;
    adjacency_(to, from) = 1;
    auto& row = in_neighbors_[static_cast<std::size_t>(to)];
    row.insert(std::upper_bound(row.begin(), row.end(), from), from);
  }

  bool has_edge(Index from, Index to) const { return adjacency_(to, from) != 0; }

  long edge_count() const { return adjacency_.cast<long>().sum(); }

  bool has_weights() const { return weights_.size() == n_ * n_ && n_ > 0; }
  const Mat& weights() const { return weights_; }

  void set_weights(Mat w) {
    if (w.rows() != n_ || w.cols() != n_) throw DimensionMismatch("weight matrix", n_, w.rows());
    for (Index i = 0; i < n_; ++i)
      for (Index j = 0; j < n_; ++j) {
        if (w(i, j) < 0.0) throw std::invalid_argument("weight matrix has negative entries");
        if (w(i, j) > 0.0 && adjacency_(i, j) == 0) throw std::invalid_argument("weight outside the edge support");
      }
    weights_ = std::move(w);
  }

  /// In-neighbors of i (including i) in ascending order; fixes the summation order.
  const std::vector<Index>& in_neighbors(Index i) const { return in_neighbors_[static_cast<std::size_t>(i)]; }

  bool all_self_loops() const {
    for (Index i = 0; i < n_; ++i)
      if (!adjacency_(i, i)) return false;
    return true;
  }

  /// Forward and backward reachability from node 0.
  bool strongly_connected() const {
    if (n_ == 0) return false;
    auto reach = [&](bool forward) {
      std::vector<char> seen(static_cast<std::size_t>(n_), 0);
      std::queue<Index> q;
      q.push(0);
      seen[0] = 1;
      long count = 1;
      while (!q.empty()) {
        const Index u = q.front();
        q.pop();
        for (Index v = 0; v < n_; ++v) {
          const bool edge = forward ? adjacency_(v, u) != 0 : adjacency_(u, v) != 0;
          if (edge && !seen[v]) {
            seen[v] = 1;
            ++count;
            q.push(v);
          }
        }
      }
      return count == n_;
    };
    return reach(true) && reach(false);
  }

  /// max over rows and columns of |sum - 1|
  double stochasticity_residual() const {
    if (!has_weights()) return std::numeric_limits<double>::infinity();
    const double rows = (weights_.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double cols = (weights_.colwise().sum().array() - 1.0).abs().maxCoeff();
    return std::max(rows, cols);
  }

 private:
  Index n_ = 0;
  Eigen::MatrixX<char> adjacency_;  // (to, from)
  Mat weights_;
  std::vector<std::vector<Index>> in_neighbors_;
};

/// Erdos-Renyi digraph: each ordered pair i != j independently with probability eta,
/// plus a directed Hamiltonian cycle over a seeded permutation and all self-loops.
inline WeightedDigraph gen_digraph(Index n, double eta, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_digraph: need at least one node");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("gen_digraph: eta must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(eta);
  WeightedDigraph g(n);
  for (Index from = 0; from < n; ++from)
    for (Index to = 0; to < n; ++to)
      if (from != to && coin(rng)) g.add_edge(from, to);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  for (Index k = 0; k < n && n > 1; ++k) g.add_edge(perm[k], perm[(k + 1) % n]);
  for (Index i = 0; i < n; ++i) g.add_edge(i, i);
  return g;
}

enum class WeightMethod { sinkhorn, metropolis_symmetrized };

inline const char* to_string(WeightMethod m) {
  return m == WeightMethod::sinkhorn ? "sinkhorn" : "metropolis";
}

inline WeightMethod parse_weight_method(const std::string& s) {
  if (s == "sinkhorn") return WeightMethod::sinkhorn;
  if (s == "metropolis" || s == "metropolis_symmetrized") return WeightMethod::metropolis_symmetrized;
  throw std::invalid_argument("unknown weight method '" + s + "'");
}

class SinkhornStalled : public Error {
 public:
  explicit SinkhornStalled(double residual)
      : Error("Sinkhorn balancing stalled at residual " + std::to_string(residual)), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

struct SinkhornOptions {
  double tol = 1e-13;
  long max_iter = 100'000;
};

namespace detail {

inline Mat sinkhorn_balance(const WeightedDigraph& g, const SinkhornOptions& opts) {
  const Index n = g.size();
  Mat w = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j : g.in_neighbors(i)) w(i, j) = 1.0;
  double residual = std::numeric_limits<double>::infinity();
  double plateau_ref = residual;
  for (long it = 1; it <= opts.max_iter; ++it) {
    w.array().colwise() /= w.rowwise().sum().array();
    w.array().rowwise() /= w.colwise().sum().array();
    residual = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();  // columns are exact after the sweep
    if (residual <= opts.tol) {
      // final row pass leaves rows exact; columns move by at most residual
      const double cols = (w.colwise().sum().array() - 1.0).abs().maxCoeff();
      if (cols <= opts.tol) return w;
    }
    if (it % 1000 == 0) {
      if (residual > 0.999 * plateau_ref) throw SinkhornStalled(residual);
      plateau_ref = residual;
    }
  }
  throw SinkhornStalled(residual);
}

inline Mat metropolis_weights(const WeightedDigraph& g) {
  const Index n = g.size();
  Eigen::MatrixX<char> sym = Eigen::MatrixX<char>::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j && (g.has_edge(i, j) || g.has_edge(j, i))) sym(i, j) = 1;
  Eigen::VectorX<long> deg = sym.cast<long>().rowwise().sum();
  Mat w = Mat::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j)
      if (sym(i, j)) w(i, j) = 1.0 / (1.0 + static_cast<double>(std::max(deg[i], deg[j])));
  }
  for (Index i = 0; i < n; ++i) {
    double off = 0.0;
    for (Index j = 0; j < n; ++j) off += (j == i) ? 0.0 : w(i, j);
    w(i, i) = 1.0 - off;
  }
  return w;
}

}  // namespace detail

/// Returns a copy of the graph carrying doubly stochastic weights. The Metropolis
/// variant works on the symmetrized support, so it may add reverse edges.
inline WeightedDigraph make_doubly_stochastic(const WeightedDigraph& graph, WeightMethod method,
                                              const SinkhornOptions& opts = {}) {
  if (!graph.all_self_loops()) throw std::invalid_argument("make_doubly_stochastic: self-loops required");
  if (!graph.strongly_connected()) throw std::invalid_argument("make_doubly_stochastic: graph not strongly connected");
  WeightedDigraph out = graph;
  if (method == WeightMethod::sinkhorn) {
    out.set_weights(detail::sinkhorn_balance(graph, opts));
  } else {
    for (Index i = 0; i < graph.size(); ++i)
      for (Index j = 0; j < graph.size(); ++j)
        if (graph.has_edge(i, j)) out.add_edge(j, i);
    out.set_weights(detail::metropolis_weights(graph));
  }
  if (out.stochasticity_residual() > 1e-12)
    throw Error("make_doubly_stochastic: residual " + std::to_string(out.stochasticity_residual()));
  return out;
}

/// z_i+ = sum_j w_ij z_j + sum_j w_ij (phi_j - phi_i), rows in a fixed order.
inline RowMat consensus_step(const WeightedDigraph& g, const RowMat& z, const RowMat& phi) {
  if (!g.has_weights()) throw std::invalid_argument("consensus_step: graph has no weights");
  if (z.rows() != g.size()) throw DimensionMismatch("consensus_step z rows", g.size(), z.rows());
  if (phi.rows() != z.rows() || phi.cols() != z.cols())
    throw DimensionMismatch("consensus_step phi shape", z.size(), phi.size());
  const Mat& w = g.weights();
  RowMat out(z.rows(), z.cols());
  for (Index i = 0; i < g.size(); ++i) {
    auto row = out.row(i);
    row.setZero();
    for (Index j : g.in_neighbors(i)) {
      const double wij = w(i, j);
      row += wij * z.row(j);
      row += wij * (phi.row(j) - phi.row(i));
    }
  }
  return out;
}

struct ConsensusSpectrum {
  double sesq = 0.0;              // ||W - 11'/N||_2
  double rho_disagreement = 0.0;  // spectral radius of W - 11'/N
};

inline ConsensusSpectrum spectrum(const WeightedDigraph& g) {
  if (!g.has_weights()) throw std::invalid_argument("spectrum: graph has no weights");
  const Index n = g.size();
  const Mat m = g.weights() - Mat::Constant(n, n, 1.0 / static_cast<double>(n));
  ConsensusSpectrum s;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-15) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    s.rho_disagreement = es.eigenvalues().cwiseAbs().maxCoeff();
    s.sesq = s.rho_disagreement;
  } else {
    Eigen::EigenSolver<Mat> es(m, false);
    s.rho_disagreement = es.eigenvalues().cwiseAbs().maxCoeff();
    s.sesq = Eigen::BDCSVD<Mat>(m).singularValues()(0);
  }
  return s;
}

/// Edge-list text: header "N d", then one "src dst weight" line per edge.
inline void write_graph(std::ostream& os, const WeightedDigraph& g, Index aggregate_dim) {
  os << g.size() << ' ' << aggregate_dim << '\n';
  os << std::setprecision(17);
  for (Index to = 0; to < g.size(); ++to)
    for (Index from : g.in_neighbors(to))
      os << from << ' ' << to << ' ' << (g.has_weights() ? g.weights()(to, from) : 0.0) << '\n';
}

struct GraphFile {
  WeightedDigraph graph;
  Index aggregate_dim = 0;
};

inline GraphFile read_graph(std::istream& is) {
  Index n = 0, d = 0;
  if (!(is >> n >> d) || n < 1) throw Error("read_graph: malformed header");
  GraphFile out{WeightedDigraph(n), d};
  Mat w = Mat::Zero(n, n);
  bool weighted = false;
  Index from = 0, to = 0;
  double weight = 0.0;
  while (is >> from >> to >> weight) {
    out.graph.add_edge(from, to);
    w(to, from) = weight;
    weighted = weighted || weight != 0.0;
  }
  if (!is.eof()) throw Error("read_graph: malformed edge line");
  if (weighted) out.graph.set_weights(std::move(w));
  return out;
}

}  // namespace trades
