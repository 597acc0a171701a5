#pragma once

#include <cmath>
#include <ostream>

#include <Eigen/Core>

namespace steerode {

// Forward-mode scalar: value plus one directional derivative. Used for
// exact df/dz traces of one-dimensional fields without touching the tape.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT: constants lift freely
  constexpr Dual(double value, double tangent) : v(value), d(tangent) {}
};

constexpr Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
constexpr Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
constexpr Dual operator-(Dual a) { return {-a.v, -a.d}; }
constexpr Dual operator*(Dual a, Dual b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
inline Dual operator/(Dual a, Dual b) {
  const double inv = 1.0 / b.v;
  return {a.v * inv, (a.d - a.v * inv * b.d) * inv};
}

constexpr Dual& operator+=(Dual& a, Dual b) { return a = a + b; }
constexpr Dual& operator-=(Dual& a, Dual b) { return a = a - b; }
constexpr Dual& operator*=(Dual& a, Dual b) { return a = a * b; }
inline Dual& operator/=(Dual& a, Dual b) { return a = a / b; }

constexpr bool operator==(Dual a, Dual b) { return a.v == b.v; }
constexpr bool operator!=(Dual a, Dual b) { return a.v != b.v; }
constexpr bool operator<(Dual a, Dual b) { return a.v < b.v; }
constexpr bool operator<=(Dual a, Dual b) { return a.v <= b.v; }
constexpr bool operator>(Dual a, Dual b) { return a.v > b.v; }
constexpr bool operator>=(Dual a, Dual b) { return a.v >= b.v; }

inline Dual tanh(Dual x) {
  const double t = std::tanh(x.v);
  return {t, (1.0 - t * t) * x.d};
}
inline Dual exp(Dual x) {
  const double e = std::exp(x.v);
  return {e, e * x.d};
}
inline Dual log(Dual x) { return {std::log(x.v), x.d / x.v}; }
inline Dual sin(Dual x) { return {std::sin(x.v), std::cos(x.v) * x.d}; }
inline Dual cos(Dual x) { return {std::cos(x.v), -std::sin(x.v) * x.d}; }
inline Dual sqrt(Dual x) {
  const double s = std::sqrt(x.v);
  return {s, 0.5 * x.d / s};
}
inline Dual abs(Dual x) { return x.v < 0.0 ? -x : x; }

inline std::ostream& operator<<(std::ostream& os, Dual x) {
  return os << x.v << "+" << x.d << "eps";
}

}  // namespace steerode

namespace Eigen {

template <>
struct NumTraits<steerode::Dual> : NumTraits<double> {
  using Real = steerode::Dual;
  using NonInteger = steerode::Dual;
  using Nested = steerode::Dual;
  using Literal = double;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 2,
    AddCost = 2,
    MulCost = 4,
  };
};

namespace internal {
template <>
struct scalar_product_traits<steerode::Dual, double> {
  using ReturnType = steerode::Dual;
};
template <>
struct scalar_product_traits<double, steerode::Dual> {
  using ReturnType = steerode::Dual;
};
}  // namespace internal

}  // namespace Eigen
