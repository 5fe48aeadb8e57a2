#pragma once

#include "trades/core.hpp"

#include <cmath>

namespace trades {

/// Orthonormal basis R (N x (N-1)) of the disagreement subspace: columns 2..N
/// of the Householder reflection H = I - 2uu'/(u'u), u = e_1 - 1/sqrt(N), which
/// maps e_1 to 1/sqrt(N). Hence R'1 = 0 and RR' = I - 11'/N. The lifted basis
/// R_d = R (x) I_d acts row-wise on agent-major N x d stacks.
class ConsensusBasis {
 public:
  explicit ConsensusBasis(Index n) : n_(n), u_(Vec::Constant(n, -1.0 / std::sqrt(static_cast<double>(n)))) {
    if (n < 1) throw std::invalid_argument("ConsensusBasis: need at least one agent");
    u_[0] += 1.0;
    const double uu = u_.squaredNorm();
    scale_ = uu > 0.0 ? 2.0 / uu : 0.0;
  }

  Index size() const { return n_; }

  /// R_d' z, shape (N-1) x d.
  RowMat project(const RowMat& z) const {
    if (z.rows() != n_) throw DimensionMismatch("ConsensusBasis::project rows", n_, z.rows());
    RowMat hz = z - u_ * (scale_ * (u_.transpose() * z));
    return hz.bottomRows(n_ - 1);
  }

  /// R_d w for w of shape (N-1) x d.
  RowMat lift(const RowMat& w) const {
    if (w.rows() != n_ - 1) throw DimensionMismatch("ConsensusBasis::lift rows", n_ - 1, w.rows());
    RowMat padded = RowMat::Zero(n_, w.cols());
    padded.bottomRows(n_ - 1) = w;
    return padded - u_ * (scale_ * (u_.transpose() * padded));
  }

  /// Dense R, for tests and small diagnostics.
  Mat dense() const {
    Mat h = Mat::Identity(n_, n_) - scale_ * u_ * u_.transpose();
    return h.rightCols(n_ - 1);
  }

 private:
  Index n_;
  Vec u_;
  double scale_ = 0.0;
};

struct TrackerCoordinates {
  Vec mean;     // z_bar = (1/N) 1' z
  RowMat perp;  // z_perp = R_d' z
};

inline TrackerCoordinates decompose_tracker(const ConsensusBasis& basis, const RowMat& z) {
  TrackerCoordinates c;
  c.mean = z.colwise().mean().transpose();
  c.perp = basis.project(z);
  return c;
}

/// 1 z_bar + R_d z_perp
inline RowMat reconstruct_tracker(const ConsensusBasis& basis, const TrackerCoordinates& c) {
  RowMat z = basis.lift(c.perp);
  z.rowwise() += c.mean.transpose();
  return z;
}

}  // namespace trades
