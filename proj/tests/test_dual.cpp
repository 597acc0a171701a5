#include <cmath>

#include "doctest.h"
#include "steerode/dual.hpp"
#include "steerode/types.hpp"

using namespace steerode;

namespace {

// Shared nonlinear composition exercising every overloaded primitive.
template <class S>
S composite(S x) {
  using std::tanh;
  using std::exp;
  using std::log;
  using std::sin;
  using std::cos;
  using std::sqrt;
  return tanh(x) * exp(sin(x)) / sqrt(S(1.0) + x * x) +
         log(S(2.0) + cos(x)) - x / (S(3.0) + x * x);
}

}  // namespace

TEST_CASE("dual tangents match central finite differences") {
  const double xs[] = {-2.3, -0.7, 0.0, 0.4, 1.9};
  for (const double x : xs) {
    const Dual out = composite(Dual(x, 1.0));
    CHECK(out.v == doctest::Approx(composite(x)).epsilon(1e-14));
    const double eps = 1e-6;
    const double fd = (composite(x + eps) - composite(x - eps)) / (2 * eps);
    CHECK(out.d == doctest::Approx(fd).epsilon(1e-8));
  }
}

TEST_CASE("constants carry zero tangent") {
  const Dual c = 3.5;
  CHECK(c.v == 3.5);
  CHECK(c.d == 0.0);
  const Dual x(2.0, 1.0);
  CHECK((c * x).d == 3.5);
  CHECK((x + c).d == 1.0);
}

TEST_CASE("division and chain rules") {
  const Dual x(0.8, 1.0);
  const Dual y = Dual(1.0) / x;
  CHECK(y.d == doctest::Approx(-1.0 / (0.8 * 0.8)).epsilon(1e-14));
  const Dual z = exp(log(x));
  CHECK(z.d == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("Eigen matvec propagates dual tangents directionally") {
  Matrix a(2, 3);
  a << 1.0, -2.0, 0.5,
       0.25, 3.0, -1.0;
  VectorT<Dual> x(3);
  Vector dir(3);
  dir << 0.3, -0.1, 0.7;
  Vector base(3);
  base << 1.0, 2.0, -1.5;
  for (Eigen::Index i = 0; i < 3; ++i) x(i) = Dual(base(i), dir(i));

  const VectorT<Dual> y = a.cast<Dual>() * x;
  const Vector expect_v = a * base;
  const Vector expect_d = a * dir;
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(y(i).v == doctest::Approx(expect_v(i)).epsilon(1e-14));
    CHECK(y(i).d == doctest::Approx(expect_d(i)).epsilon(1e-14));
  }
}
