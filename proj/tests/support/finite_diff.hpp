#pragma once

#include <Eigen/Dense>

#include <functional>

namespace oracle {

/// Central-difference Jacobian of f at x.
inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h = 1e-6) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd J(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    const double step = h * std::max(1.0, std::abs(x[k]));
    xp[k] += step;
    xm[k] -= step;
    J.col(k) = (f(xp) - f(xm)) / (2 * step);
  }
  return J;
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::VectorXd xp = x, xm = x;
    const double step = h * std::max(1.0, std::abs(x[k]));
    xp[k] += step;
    xm[k] -= step;
    g[k] = (f(xp) - f(xm)) / (2 * step);
  }
  return g;
}

inline double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

}  // namespace oracle
