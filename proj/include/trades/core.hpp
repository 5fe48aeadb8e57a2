#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace trades {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// Agent-major stacks (one row per agent), e.g. trackers z and aggregation outputs.
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(const std::string& what, Index expected, Index got)
      : Error(what + ": expected " + std::to_string(expected) + ", got " + std::to_string(got)) {}
};

class MaxIterExceeded : public Error {
 public:
  MaxIterExceeded(const std::string& what, long iterations, double residual)
      : Error(what + ": residual " + std::to_string(residual) + " after " + std::to_string(iterations) +
              " iterations"),
        iterations_(iterations),
        residual_(residual) {}
  long iterations() const { return iterations_; }
  double residual() const { return residual_; }

 private:
  long iterations_;
  double residual_;
};

class NonFiniteDetected : public Error {
 public:
  explicit NonFiniteDetected(long iteration)
      : Error("non-finite value detected at iteration " + std::to_string(iteration)), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

inline bool all_finite(const Eigen::Ref<const Mat>& m) { return m.allFinite(); }

// splitmix64 finalizer; derives independent component seeds from one master seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace trades
