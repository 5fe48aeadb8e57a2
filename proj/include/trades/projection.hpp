#pragma once

// Euclidean projections onto primitive convex sets, and Dykstra's method for
// finite intersections of them.

#include "trades/core.hpp"

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>
#include <variant>
#include <vector>

namespace trades {

struct Box {
  Vec lower;
  Vec upper;
};

/// { v : a'v = b }
struct Hyperplane {
  Vec normal;
  double offset = 0.0;
};

/// { v : a'v <= b }
struct Halfspace {
  Vec normal;
  double offset = 0.0;
};

/// Per-pair disks: v[p]^2 + v[q]^2 <= radius^2 for every (p, q) in pairs.
struct DiskPairs {
  Index dim = 0;
  std::vector<std::pair<Index, Index>> pairs;
  double radius = 1.0;
};

class ConvexSet;

struct Intersection {
  std::vector<ConvexSet> members;
};

class MaxSweepsExceeded : public Error {
 public:
  MaxSweepsExceeded(Vec best, double residual, int sweeps)
      : Error("Dykstra: membership residual " + std::to_string(residual) + " after " + std::to_string(sweeps) +
              " sweeps"),
        best_(std::move(best)),
        residual_(residual) {}
  const Vec& best_iterate() const { return best_; }
  double residual() const { return residual_; }

 private:
  Vec best_;
  double residual_;
};

class EmptyIntersectionSuspected : public Error {
 public:
  explicit EmptyIntersectionSuspected(double residual)
      : Error("Dykstra: cyclic residual stagnates at " + std::to_string(residual) + "; intersection looks empty"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class InfeasibleSpec : public Error {
 public:
  using Error::Error;
};

struct DykstraOptions {
  double tol = 1e-10;
  int max_sweeps = 5000;
};

struct DykstraResult {
  Vec point;
  int sweeps = 0;
  double residual = 0.0;
};

class ConvexSet {
 public:
  using Variant = std::variant<Box, Hyperplane, Halfspace, DiskPairs, Intersection>;

  static ConvexSet box(Vec lower, Vec upper) {
    if (lower.size() != upper.size()) throw DimensionMismatch("Box bounds", lower.size(), upper.size());
    for (Index k = 0; k < lower.size(); ++k) {
      if (std::isnan(lower[k]) || std::isnan(upper[k]) || lower[k] > upper[k])
        throw std::invalid_argument("Box: lower bound exceeds upper bound");
    }
    return ConvexSet(Box{std::move(lower), std::move(upper)});
  }

  static ConvexSet hyperplane(Vec normal, double offset) {
    if (normal.squaredNorm() == 0.0) throw std::invalid_argument("Hyperplane: zero normal");
    return ConvexSet(Hyperplane{std::move(normal), offset});
  }

  static ConvexSet halfspace(Vec normal, double offset) {
    if (normal.squaredNorm() == 0.0) throw std::invalid_argument("Halfspace: zero normal");
    return ConvexSet(Halfspace{std::move(normal), offset});
  }

  static ConvexSet disk_pairs(Index dim, std::vector<std::pair<Index, Index>> pairs, double radius) {
    if (!(radius > 0.0)) throw std::invalid_argument("DiskPairs: radius must be positive");
    std::vector<char> used(static_cast<std::size_t>(dim), 0);
    for (auto [p, q] : pairs) {
      if (p < 0 || q < 0 || p >= dim || q >= dim || p == q)
        throw std::invalid_argument("DiskPairs: index out of range");
      if (used[p] || used[q]) throw std::invalid_argument("DiskPairs: index pairs must be disjoint");
      used[p] = used[q] = 1;
    }
    return ConvexSet(DiskPairs{dim, std::move(pairs), radius});
  }

  /// Builds an intersection and certifies it nonempty by projecting the origin.
  static ConvexSet intersection(std::vector<ConvexSet> members, DykstraOptions opts = {});

  Index dim() const;
  bool is_intersection() const { return std::holds_alternative<Intersection>(v_); }
  const Variant& variant() const { return v_; }

 private:
  explicit ConvexSet(Variant v) : v_(std::move(v)) {}
  Variant v_;
};

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline void check_dim(Index expected, Index got) {
  if (expected != got) throw DimensionMismatch("projection input", expected, got);
}

}  // namespace detail

inline Index ConvexSet::dim() const {
  return std::visit(detail::overloaded{
                        [](const Box& b) { return b.lower.size(); },
                        [](const Hyperplane& h) { return h.normal.size(); },
                        [](const Halfspace& h) { return h.normal.size(); },
                        [](const DiskPairs& d) { return d.dim; },
                        [](const Intersection& s) { return s.members.front().dim(); },
                    },
                    v_);
}

/// Largest constraint violation of v (distance-like, zero inside the set).
inline double membership_residual(const ConvexSet& set, const Eigen::Ref<const Vec>& v) {
  detail::check_dim(set.dim(), v.size());
  return std::visit(
      detail::overloaded{
          [&](const Box& b) {
            double r = 0.0;
            for (Index k = 0; k < v.size(); ++k) r = std::max({r, b.lower[k] - v[k], v[k] - b.upper[k]});
            return r;
          },
          [&](const Hyperplane& h) { return std::abs(h.normal.dot(v) - h.offset) / h.normal.norm(); },
          [&](const Halfspace& h) { return std::max(0.0, (h.normal.dot(v) - h.offset) / h.normal.norm()); },
          [&](const DiskPairs& d) {
            double r = 0.0;
            for (auto [p, q] : d.pairs) r = std::max(r, std::hypot(v[p], v[q]) - d.radius);
            return r;
          },
          [&](const Intersection& s) {
            double r = 0.0;
            for (const auto& m : s.members) r = std::max(r, membership_residual(m, v));
            return r;
          },
      },
      set.variant());
}

/// Exact projection onto a primitive (non-intersection) set.
inline Vec project_primitive(const ConvexSet& set, const Eigen::Ref<const Vec>& v) {
  detail::check_dim(set.dim(), v.size());
  return std::visit(
      detail::overloaded{
          [&](const Box& b) -> Vec { return v.cwiseMax(b.lower).cwiseMin(b.upper); },
          [&](const Hyperplane& h) -> Vec {
            return v - h.normal * ((h.normal.dot(v) - h.offset) / h.normal.squaredNorm());
          },
          [&](const Halfspace& h) -> Vec {
            const double excess = h.normal.dot(v) - h.offset;
            if (excess <= 0.0) return v;
            return v - h.normal * (excess / h.normal.squaredNorm());
          },
          [&](const DiskPairs& d) -> Vec {
            Vec out = v;
            for (auto [p, q] : d.pairs) {
              const double norm = std::hypot(v[p], v[q]);
              if (norm > d.radius) {
                const double scale = d.radius / norm;
                out[p] = v[p] * scale;
                out[q] = v[q] * scale;
              }
            }
            return out;
          },
          [&](const Intersection&) -> Vec {
            throw std::invalid_argument("project_primitive: set is an intersection");
          },
      },
      set.variant());
}

/// Dykstra's alternating projections with one correction vector per member.
/// Members are visited in their stored order every sweep.
inline DykstraResult project_dykstra(const ConvexSet& set, const Eigen::Ref<const Vec>& v,
                                     const DykstraOptions& opts = {}) {
  const auto* inter = std::get_if<Intersection>(&set.variant());
  if (inter == nullptr) throw std::invalid_argument("project_dykstra: set is not an intersection");
  detail::check_dim(set.dim(), v.size());
  const auto& members = inter->members;
  for (const auto& m : members) {
    if (m.is_intersection()) throw std::invalid_argument("project_dykstra: nested intersections are not supported");
  }

  const std::size_t m = members.size();
  Vec x = v;
  if (m == 1) return {project_primitive(members.front(), v), 1, 0.0};

  std::vector<Vec> corrections(m, Vec::Zero(v.size()));
  Vec prev(v.size());
  Vec y(v.size());
  double stagnation_ref = std::numeric_limits<double>::infinity();
  constexpr int kStagnationWindow = 5000;

  double residual = membership_residual(set, x);
  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    prev = x;
    double correction_shift = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      y = x + corrections[k];
      x = project_primitive(members[k], y);
      Vec c = y - x;
      correction_shift += (c - corrections[k]).squaredNorm();
      corrections[k] = std::move(c);
    }
    // the iterate can stall for a sweep while corrections still move
    const double displacement = std::sqrt((x - prev).squaredNorm() + correction_shift);
    residual = membership_residual(set, x);
    if (displacement <= opts.tol && residual <= opts.tol) return {x, sweep, residual};

    if (sweep % kStagnationWindow == 0) {
      // slow but nonempty cases still shrink the residual over a window; an empty one plateaus at the gap
      if (residual > 1e-3 && residual > (1.0 - 1e-6) * stagnation_ref) throw EmptyIntersectionSuspected(residual);
      stagnation_ref = residual;
    }
  }
  throw MaxSweepsExceeded(x, residual, opts.max_sweeps);
}

inline ConvexSet ConvexSet::intersection(std::vector<ConvexSet> members, DykstraOptions opts) {
  if (members.empty()) throw std::invalid_argument("Intersection: empty member list");
  const Index dim = members.front().dim();
  for (const auto& m : members) {
    if (m.dim() != dim) throw DimensionMismatch("Intersection member", dim, m.dim());
    if (m.is_intersection()) throw std::invalid_argument("Intersection: members must be primitive");
  }
  ConvexSet set(Intersection{std::move(members)});
  const auto cert = project_dykstra(set, Vec::Zero(dim), opts);
  if (cert.residual > 1e-8) throw InfeasibleSpec("Intersection: feasibility certificate failed");
  return set;
}

/// Projector P_X bound to a set and Dykstra tolerances. A structured exact
/// projection, when supplied, replaces Dykstra for this set.
class FeasibleSetProjector {
 public:
  using Structured = std::function<Vec(const Eigen::Ref<const Vec>&)>;

  explicit FeasibleSetProjector(ConvexSet set, DykstraOptions opts = {}) : set_(std::move(set)), opts_(opts) {}
  FeasibleSetProjector(ConvexSet set, Structured exact, DykstraOptions opts = {})
      : set_(std::move(set)), opts_(opts), exact_(std::move(exact)) {}

  Vec operator()(const Eigen::Ref<const Vec>& v) const {
    detail::check_dim(set_.dim(), v.size());
    if (exact_) return exact_(v);
    if (set_.is_intersection()) return project_dykstra(set_, v, opts_).point;
    return project_primitive(set_, v);
  }

  double residual(const Eigen::Ref<const Vec>& v) const { return membership_residual(set_, v); }

  Index dim() const { return set_.dim(); }
  const ConvexSet& set() const { return set_; }
  const DykstraOptions& options() const { return opts_; }
  bool structured() const { return static_cast<bool>(exact_); }

 private:
  ConvexSet set_;
  DykstraOptions opts_;
  Structured exact_;
};

inline FeasibleSetProjector unconstrained_projector(Index dim) {
  const double inf = std::numeric_limits<double>::infinity();
  return FeasibleSetProjector(ConvexSet::box(Vec::Constant(dim, -inf), Vec::Constant(dim, inf)));
}

/// Exact projection onto the EV charger set. Slots decouple except for the
/// charge equality: plugged slots project onto the half-disk {p <= 0, p^2 + q^2 <= r^2},
/// unplugged slots onto {p = 0, |q| <= r} (or the origin when reactive power is off).
/// The equality multiplier lam solves sum_plugged p(lam) = -target, where
/// (p, q)(lam) = P_slot(v_p - lam, v_q) is nonincreasing in lam.
class ChargerSetProjection {
 public:
  ChargerSetProjection(std::vector<int> plugged, double target, double radius, bool reactive_always_on)
      : plugged_(std::move(plugged)), target_(target), radius_(radius), reactive_(reactive_always_on) {
    for (int a : plugged_) count_ += a;
  }

  Vec operator()(const Eigen::Ref<const Vec>& v) const {
    const auto T = static_cast<Index>(plugged_.size());
    Vec out(2 * T);
    for (Index t = 0; t < T; ++t) {
      if (plugged_[t] == 0) {
        out[t] = 0.0;
        out[T + t] = reactive_ ? std::clamp(v[T + t], -radius_, radius_) : 0.0;
      }
    }
    if (count_ == 0) return out;

    if (target_ >= radius_ * count_) {  // only p = -r, q = 0 on plugged slots remains
      for (Index t = 0; t < T; ++t)
        if (plugged_[t] == 1) out[t] = -radius_, out[T + t] = 0.0;
      return out;
    }

    auto fill = [&](double lam) {
      double sum = 0.0;
      for (Index t = 0; t < T; ++t) {
        if (plugged_[t] == 0) continue;
        half_disk(v[t] - lam, v[T + t], out[t], out[T + t]);
        sum += out[t];
      }
      return sum + target_;
    };

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Index t = 0; t < T; ++t)
      if (plugged_[t] == 1) lo = std::min(lo, v[t]), hi = std::max(hi, v[t]);
    if (fill(lo) <= 0.0) return out;  // lo gives p = 0, so this means target == 0
    double span = radius_ + std::abs(hi) + 1.0;
    hi += span;
    while (fill(hi) > 0.0) {
      span *= 2.0;
      hi += span;
      if (!std::isfinite(hi)) throw std::runtime_error("ChargerSetProjection: multiplier bracket overflow");
    }
    std::uintmax_t iters = 300;
    const auto tol = boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 2);
    const auto [a, b] = boost::math::tools::toms748_solve(fill, lo, hi, fill(lo), fill(hi), tol, iters);
    const double ga = fill(a), gb = fill(b);
    fill(std::abs(ga) <= std::abs(gb) ? a : b);
    return out;
  }

 private:
  void half_disk(double p, double q, double& op, double& oq) const {
    if (p > 0.0) {
      op = 0.0;
      oq = std::clamp(q, -radius_, radius_);
      return;
    }
    const double norm = std::hypot(p, q);
    const double scale = norm > radius_ ? radius_ / norm : 1.0;
    op = p * scale;
    oq = q * scale;
  }

  std::vector<int> plugged_;
  double target_;
  double radius_;
  bool reactive_;
  int count_ = 0;
};

/// EV charger set over a horizon of T slots, x = (p, q) in R^{2T}:
/// total charge sum_{plugged} p = -charge_target, p <= 0, p = 0 when unplugged,
/// p^2 + q^2 <= s_max^2 per slot. With reactive_always_on = false, q is also
/// pinned to zero on unplugged slots.
inline FeasibleSetProjector build_ev_projector(const std::vector<int>& plugged, double charge_target, double s_max,
                                               bool reactive_always_on = true, DykstraOptions opts = {}) {
  const auto T = static_cast<Index>(plugged.size());
  if (T == 0) throw std::invalid_argument("build_ev_projector: empty horizon");
  if (!(s_max > 0.0)) throw std::invalid_argument("build_ev_projector: inverter capacity must be positive");
  if (!(charge_target >= 0.0)) throw std::invalid_argument("build_ev_projector: negative charge target");
  int plugged_slots = 0;
  for (int a : plugged) {
    if (a != 0 && a != 1) throw std::invalid_argument("build_ev_projector: plugged profile must be binary");
    plugged_slots += a;
  }
  if (s_max * plugged_slots < charge_target)
    throw InfeasibleSpec("build_ev_projector: charge target exceeds inverter capacity over plugged slots");

  const double inf = std::numeric_limits<double>::infinity();
  Vec lower(2 * T), upper(2 * T);
  for (Index t = 0; t < T; ++t) {
    const bool on = plugged[t] == 1;
    lower[t] = on ? -inf : 0.0;
    upper[t] = 0.0;
    lower[T + t] = (on || reactive_always_on) ? -inf : 0.0;
    upper[T + t] = (on || reactive_always_on) ? inf : 0.0;
  }
  std::vector<std::pair<Index, Index>> pairs;
  for (Index t = 0; t < T; ++t) pairs.emplace_back(t, T + t);

  std::vector<ConvexSet> members;
  if (plugged_slots > 0) {
    Vec normal = Vec::Zero(2 * T);
    for (Index t = 0; t < T; ++t) normal[t] = plugged[t];
    members.push_back(ConvexSet::hyperplane(std::move(normal), -charge_target));
  }
  members.push_back(ConvexSet::box(std::move(lower), std::move(upper)));
  members.push_back(ConvexSet::disk_pairs(2 * T, std::move(pairs), s_max));
  return FeasibleSetProjector(ConvexSet::intersection(std::move(members), opts),
                              ChargerSetProjection(plugged, charge_target, s_max, reactive_always_on), opts);
}

}  // namespace trades
