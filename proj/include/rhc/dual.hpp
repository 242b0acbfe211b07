#pragma once

// Forward-mode automatic differentiation.
//
// Dual<N> carries a value and a fixed-size tangent vector of N directional
// derivatives. Code that must be differentiated is written as a template over
// its scalar type and instantiated once with double and once with Dual<N>,
// seeding one tangent direction per input variable.

#include <cmath>

#include <Eigen/Core>

namespace rhc {

template <int N>
struct Dual {
  using Tangent = Eigen::Matrix<double, N, 1>;

  double v = 0.0;
  Tangent d = Tangent::Zero();

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit by design of the scalar contract
  Dual(double value, const Tangent& tangent) : v(value), d(tangent) {}

  /// Variable seeded along direction `index`.
  static Dual variable(double value, int index) {
    Dual x(value);
    x.d[index] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    d = d * o.v + o.d * v;
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    d = (d - o.d * (v * inv)) * inv;
    v *= inv;
    return *this;
  }
};

template <int N>
Dual<N> operator-(const Dual<N>& a) {
  return {-a.v, -a.d};
}
template <int N>
Dual<N> operator+(Dual<N> a, const Dual<N>& b) {
  return a += b;
}
template <int N>
Dual<N> operator-(Dual<N> a, const Dual<N>& b) {
  return a -= b;
}
template <int N>
Dual<N> operator*(Dual<N> a, const Dual<N>& b) {
  return a *= b;
}
template <int N>
Dual<N> operator/(Dual<N> a, const Dual<N>& b) {
  return a /= b;
}
template <int N>
Dual<N> operator+(Dual<N> a, double b) {
  a.v += b;
  return a;
}
template <int N>
Dual<N> operator+(double a, Dual<N> b) {
  b.v += a;
  return b;
}
template <int N>
Dual<N> operator-(Dual<N> a, double b) {
  a.v -= b;
  return a;
}
template <int N>
Dual<N> operator-(double a, const Dual<N>& b) {
  return {a - b.v, -b.d};
}
template <int N>
Dual<N> operator*(const Dual<N>& a, double b) {
  return {a.v * b, a.d * b};
}
template <int N>
Dual<N> operator*(double a, const Dual<N>& b) {
  return {a * b.v, b.d * a};
}
template <int N>
Dual<N> operator/(const Dual<N>& a, double b) {
  return {a.v / b, a.d / b};
}
template <int N>
Dual<N> operator/(double a, const Dual<N>& b) {
  const double inv = 1.0 / b.v;
  return {a * inv, b.d * (-a * inv * inv)};
}

template <int N>
bool operator<(const Dual<N>& a, const Dual<N>& b) {
  return a.v < b.v;
}
template <int N>
bool operator>(const Dual<N>& a, const Dual<N>& b) {
  return a.v > b.v;
}
template <int N>
bool operator<=(const Dual<N>& a, const Dual<N>& b) {
  return a.v <= b.v;
}
template <int N>
bool operator>=(const Dual<N>& a, const Dual<N>& b) {
  return a.v >= b.v;
}
template <int N>
bool operator==(const Dual<N>& a, const Dual<N>& b) {
  return a.v == b.v;
}

template <int N>
Dual<N> sin(const Dual<N>& a) {
  return {std::sin(a.v), a.d * std::cos(a.v)};
}
template <int N>
Dual<N> cos(const Dual<N>& a) {
  return {std::cos(a.v), a.d * -std::sin(a.v)};
}
template <int N>
Dual<N> exp(const Dual<N>& a) {
  const double e = std::exp(a.v);
  return {e, a.d * e};
}
template <int N>
Dual<N> log(const Dual<N>& a) {
  return {std::log(a.v), a.d / a.v};
}
template <int N>
Dual<N> sqrt(const Dual<N>& a) {
  const double r = std::sqrt(a.v);
  return {r, a.d * (0.5 / r)};
}
template <int N>
Dual<N> abs(const Dual<N>& a) {
  return a.v < 0.0 ? -a : a;
}
template <int N>
Dual<N> pow(const Dual<N>& a, double p) {
  const double r = std::pow(a.v, p);
  return {r, a.d * (p * std::pow(a.v, p - 1.0))};
}

template <int N>
bool isfinite(const Dual<N>& a) {
  return std::isfinite(a.v) && a.d.allFinite();
}

/// Primal value of a scalar, for either double or Dual.
inline double value_of(double x) { return x; }
template <int N>
double value_of(const Dual<N>& x) {
  return x.v;
}

/// Tangent width used for per-stage differentiation. Covers
/// state_dim + action_dim for every environment in the library.
inline constexpr int kStageTangents = 8;
using StageDual = Dual<kStageTangents>;

}  // namespace rhc

namespace Eigen {

template <int N>
struct NumTraits<rhc::Dual<N>> : NumTraits<double> {
  using Real = rhc::Dual<N>;
  using NonInteger = rhc::Dual<N>;
  using Nested = rhc::Dual<N>;
  using Literal = rhc::Dual<N>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 1 + N,
    MulCost = 1 + 2 * N
  };
};

template <int N, typename BinaryOp>
struct ScalarBinaryOpTraits<rhc::Dual<N>, double, BinaryOp> {
  using ReturnType = rhc::Dual<N>;
};
template <int N, typename BinaryOp>
struct ScalarBinaryOpTraits<double, rhc::Dual<N>, BinaryOp> {
  using ReturnType = rhc::Dual<N>;
};

}  // namespace Eigen
