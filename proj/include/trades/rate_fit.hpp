#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace trades {

struct RateFit {
  double a1 = std::numeric_limits<double>::quiet_NaN();
  double a2 = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();
  std::size_t window_begin = 0;  // index into the sample arrays
  std::size_t samples = 0;
  bool valid() const { return samples >= 2 && std::isfinite(a2); }
};

struct RateFitOptions {
  std::size_t min_discard = 50;
  double discard_fraction = 0.05;
  double floor = 1e-12;
};

/// Least squares of log e_t ~ log a1 - a2 t over the post-transient window,
/// keeping only samples above the floating-point floor.
inline RateFit fit_linear_rate(const std::vector<double>& t, const std::vector<double>& err,
                               const RateFitOptions& opts = {}) {
  RateFit fit;
  const std::size_t n = std::min(t.size(), err.size());
  const auto discard = std::max(opts.min_discard, static_cast<std::size_t>(opts.discard_fraction * n));
  fit.window_begin = std::min(discard, n);

  auto collect = [&](std::size_t begin, std::vector<double>& xs, std::vector<double>& ys) {
    xs.clear();
    ys.clear();
    for (std::size_t k = begin; k < n; ++k) {
      if (std::isfinite(err[k]) && err[k] > opts.floor) {
        xs.push_back(t[k]);
        ys.push_back(std::log(err[k]));
      }
    }
  };
  std::vector<double> xs, ys;
  collect(fit.window_begin, xs, ys);
  if (xs.size() < 3) {
    fit.window_begin = 0;
    collect(0, xs, ys);
  }
  fit.samples = xs.size();
  if (xs.size() < 2) return fit;

  const double m = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    mx += xs[k];
    my += ys[k];
  }
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    sxx += (xs[k] - mx) * (xs[k] - mx);
    sxy += (xs[k] - mx) * (ys[k] - my);
    syy += (ys[k] - my) * (ys[k] - my);
  }
  if (sxx == 0.0) return fit;
  const double slope = sxy / sxx;
  fit.a2 = -slope;
  fit.a1 = std::exp(my - slope * mx);
  fit.r_squared = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace trades
