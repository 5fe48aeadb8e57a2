#pragma once

// Text serialization of affine game instances.
//
//   affine_game 1
//   agents N
//   dims n_1 ... n_N
//   A            (n rows of n entries)
//   b            (n entries)
//   lower        (n entries, -inf allowed)
//   upper        (n entries, inf allowed)

#include "trades/affine.hpp"

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace trades {

class ParseError : public Error {
 public:
  using Error::Error;
};

inline void write_affine_spec(std::ostream& os, const AffineGameSpec& spec) {
  spec.validate();
  const Index n = spec.n();
  os << "affine_game 1\nagents " << spec.dims.size() << "\ndims";
  for (auto k : spec.dims) os << ' ' << k;
  os << '\n' << std::setprecision(17);
  auto row = [&](const auto& v) {
    for (Index j = 0; j < v.size(); ++j) os << (j ? " " : "") << v[j];
    os << '\n';
  };
  os << "A\n";
  for (Index i = 0; i < n; ++i) row(spec.A.row(i));
  os << "b\n";
  row(spec.b);
  os << "lower\n";
  row(spec.lower);
  os << "upper\n";
  row(spec.upper);
}

namespace detail {

class TokenStream {
 public:
  explicit TokenStream(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw ParseError("game file: unexpected end of input");
    return w;
  }

  void expect(const std::string& w) {
    const auto got = word();
    if (got != w) throw ParseError("game file: expected '" + w + "', got '" + got + "'");
  }

  double real() {
    const auto w = word();
    try {
      std::size_t used = 0;
      const double v = std::stod(w, &used);
      if (used != w.size()) throw std::invalid_argument(w);
      return v;
    } catch (const std::exception&) {
      throw ParseError("game file: not a number '" + w + "'");
    }
  }

  long integer() {
    const auto w = word();
    try {
      std::size_t used = 0;
      const long v = std::stol(w, &used);
      if (used != w.size()) throw std::invalid_argument(w);
      return v;
    } catch (const std::exception&) {
      throw ParseError("game file: not an integer '" + w + "'");
    }
  }

 private:
  std::istream& is_;
};

}  // namespace detail

inline AffineGameSpec read_affine_spec(std::istream& is) {
  detail::TokenStream in(is);
  in.expect("affine_game");
  if (in.integer() != 1) throw ParseError("game file: unsupported version");
  in.expect("agents");
  const long N = in.integer();
  if (N < 1) throw ParseError("game file: agents must be >= 1");
  AffineGameSpec spec;
  in.expect("dims");
  Index n = 0;
  for (long i = 0; i < N; ++i) {
    const long k = in.integer();
    if (k < 1) throw ParseError("game file: dims must be >= 1");
    spec.dims.push_back(k);
    n += k;
  }
  auto vec = [&](const char* tag) {
    in.expect(tag);
    Vec v(n);
    for (Index j = 0; j < n; ++j) v[j] = in.real();
    return v;
  };
  in.expect("A");
  spec.A.resize(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) spec.A(i, j) = in.real();
  spec.b = vec("b");
  spec.lower = vec("lower");
  spec.upper = vec("upper");
  if (!spec.A.allFinite() || !spec.b.allFinite()) throw ParseError("game file: A and b must be finite");
  for (Index j = 0; j < n; ++j)
    if (!(spec.lower[j] <= spec.upper[j])) throw ParseError("game file: lower > upper at entry " + std::to_string(j));
  return spec;
}

}  // namespace trades
