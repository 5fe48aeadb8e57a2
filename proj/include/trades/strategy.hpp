#pragma once

#include "trades/core.hpp"

#include <numeric>
#include <vector>

namespace trades {

/// Stacked strategy vector x = col(x_1, ..., x_N) with per-agent slicing.
class StrategyProfile {
 public:
  StrategyProfile() = default;

  explicit StrategyProfile(std::vector<Index> dims) : dims_(std::move(dims)) {
    offsets_.resize(dims_.size() + 1, 0);
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (dims_[i] < 0) throw std::invalid_argument("StrategyProfile: negative agent dimension");
      offsets_[i + 1] = offsets_[i] + dims_[i];
    }
    data_ = Vec::Zero(offsets_.back());
  }

  StrategyProfile(std::vector<Index> dims, Vec stacked) : StrategyProfile(std::move(dims)) {
    if (stacked.size() != data_.size()) throw DimensionMismatch("StrategyProfile stack", data_.size(), stacked.size());
    data_ = std::move(stacked);
  }

  std::size_t num_agents() const { return dims_.size(); }
  Index n() const { return data_.size(); }
  const std::vector<Index>& dims() const { return dims_; }
  Index dim(std::size_t i) const { return dims_[i]; }
  Index offset(std::size_t i) const { return offsets_[i]; }

  auto agent(std::size_t i) { return data_.segment(offsets_[i], dims_[i]); }
  auto agent(std::size_t i) const { return data_.segment(offsets_[i], dims_[i]); }

  static StrategyProfile from_blocks(const std::vector<Vec>& blocks) {
    std::vector<Index> dims;
    dims.reserve(blocks.size());
    for (const auto& b : blocks) dims.push_back(b.size());
    StrategyProfile p(dims);
    for (std::size_t i = 0; i < blocks.size(); ++i) p.agent(i) = blocks[i];
    return p;
  }

  Vec& stacked() { return data_; }
  const Vec& stacked() const { return data_; }

  bool same_layout(const StrategyProfile& other) const { return dims_ == other.dims_; }

 private:
  std::vector<Index> dims_;
  std::vector<Index> offsets_{0};
  Vec data_;
};

inline double distance(const StrategyProfile& a, const StrategyProfile& b) {
  if (!a.same_layout(b)) throw DimensionMismatch("distance: profile length", a.n(), b.n());
  return (a.stacked() - b.stacked()).norm();
}

}  // namespace trades
