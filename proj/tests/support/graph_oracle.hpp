#pragma once

// Tarjan strongly connected components and a dense Kronecker consensus step.

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <vector>

namespace oracle {

/// adj[u] lists the successors of u.
inline int scc_count(const std::vector<std::vector<int>>& adj) {
  const int n = static_cast<int>(adj.size());
  std::vector<int> index(n, -1), low(n, 0), stack;
  std::vector<char> on_stack(n, 0);
  int counter = 0, comps = 0;
  std::function<void(int)> visit = [&](int u) {
    index[u] = low[u] = counter++;
    stack.push_back(u);
    on_stack[u] = 1;
    for (int w : adj[u]) {
      if (index[w] < 0) {
        visit(w);
        low[u] = std::min(low[u], low[w]);
      } else if (on_stack[w]) {
        low[u] = std::min(low[u], index[w]);
      }
    }
    if (low[u] == index[u]) {
      ++comps;
      int w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack[w] = 0;
      } while (w != u);
    }
  };
  for (int u = 0; u < n; ++u)
    if (index[u] < 0) visit(u);
  return comps;
}

/// z+ = (W (x) I_d) z + (W (x) I_d - I) phi on agent-major stacked vectors.
inline Eigen::VectorXd kron_consensus(const Eigen::MatrixXd& W, int d, const Eigen::VectorXd& z,
                                      const Eigen::VectorXd& phi) {
  const auto n = W.rows();
  Eigen::MatrixXd Wd = Eigen::MatrixXd::Zero(n * d, n * d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (int k = 0; k < d; ++k) Wd(i * d + k, j * d + k) = W(i, j);
  return Wd * z + (Wd - Eigen::MatrixXd::Identity(Wd.rows(), Wd.cols())) * phi;
}

}  // namespace oracle
