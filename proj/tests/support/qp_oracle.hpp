#pragma once

// Dense projection QP by active-set enumeration:
//   min 1/2 ||w - v||^2  s.t.  E w = e,  G w <= h.
// Exponential in the number of inequalities; meant for tiny instances only.

#include <Eigen/Dense>

#include <limits>
#include <optional>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Qp {
  Mat E;  // rows x n, may have zero rows
  Vec e;
  Mat G;
  Vec h;
};

inline std::optional<Vec> project_qp(const Qp& qp, const Vec& v) {
  const auto n = v.size();
  const auto me = qp.E.rows(), mi = qp.G.rows();
  std::optional<Vec> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (long mask = 0; mask < (1L << mi); ++mask) {
    std::vector<Eigen::Index> act;
    for (Eigen::Index k = 0; k < mi; ++k)
      if (mask & (1L << k)) act.push_back(k);
    const auto m = me + static_cast<Eigen::Index>(act.size());
    if (m > n) continue;
    Mat A(m, n);
    Vec c(m);
    if (me) A.topRows(me) = qp.E, c.head(me) = qp.e;
    for (std::size_t k = 0; k < act.size(); ++k) {
      A.row(me + k) = qp.G.row(act[k]);
      c[me + k] = qp.h[act[k]];
    }
    Vec w = v;
    Vec mult = Vec::Zero(m);
    if (m > 0) {
      // w = v - A' mult with A w = c  =>  (A A') mult = A v - c
      const Mat AAt = A * A.transpose();
      Eigen::FullPivLU<Mat> lu(AAt);
      if (lu.rank() < m) continue;
      mult = lu.solve(A * v - c);
      w = v - A.transpose() * mult;
    }
    bool ok = true;
    for (std::size_t k = 0; k < act.size(); ++k)
      if (mult[me + k] < -1e-12) ok = false;
    for (Eigen::Index k = 0; k < mi && ok; ++k)
      if (qp.G.row(k).dot(w) > qp.h[k] + 1e-10) ok = false;
    if (me && (qp.E * w - qp.e).cwiseAbs().maxCoeff() > 1e-10) ok = false;
    if (!ok) continue;
    const double dist = (w - v).norm();
    if (dist < best_dist) best_dist = dist, best = w;
  }
  return best;
}

}  // namespace oracle
