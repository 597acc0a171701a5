#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "steerode/gradcheck.hpp"
#include "steerode/mlp.hpp"
#include "steerode/rng.hpp"

using namespace steerode;

namespace {

// Independent reference evaluation with explicit index loops; no Eigen
// products, so it cannot share a bug with the implementation under test.
std::vector<double> reference_forward(const Mlp& net, const Vector& z,
                                      double t) {
  std::vector<double> x(static_cast<std::size_t>(z.size()) + 1);
  for (Index i = 0; i < z.size(); ++i) x[static_cast<std::size_t>(i)] = z(i);
  x.back() = t;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Matrix& w = net.weights[l];
    std::vector<double> h(static_cast<std::size_t>(w.rows()));
    for (Index r = 0; r < w.rows(); ++r) {
      double acc = net.biases[l](r);
      for (Index c = 0; c < w.cols(); ++c)
        acc += w(r, c) * x[static_cast<std::size_t>(c)];
      h[static_cast<std::size_t>(r)] =
          (l + 1 < net.weights.size()) ? std::tanh(acc) : acc;
    }
    x = std::move(h);
  }
  return x;
}

TapedLoss sum_of_squares_loss(const std::vector<Vector>& inputs,
                              const std::vector<double>& ts,
                              const std::vector<Vector>& targets) {
  TapedLoss loss;
  loss.value = [=](const Mlp& net) {
    double acc = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      acc += (mlp_forward(net, inputs[i], ts[i]) - targets[i]).squaredNorm();
    return acc;
  };
  loss.record = [=](Tape& tape, const Mlp& net, const MlpOnTape& staged) {
    std::vector<NodeId> terms;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const NodeId z = tape.leaf(inputs[i]);
      const NodeId f = mlp_forward(tape, net, staged, z, ts[i]);
      const NodeId target = tape.leaf(targets[i]);
      const NodeId ids[] = {f, target};
      const double cs[] = {1.0, -1.0};
      terms.push_back(tape.sum(tape.square(tape.lincomb(ids, cs))));
    }
    NodeId acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    return acc;
  };
  return loss;
}

}  // namespace

TEST_CASE("identity-like single layer returns the state unchanged") {
  Mlp net;
  net.widths = {3, 2};
  Matrix w = Matrix::Zero(2, 3);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  net.weights.push_back(w);
  net.biases.push_back(Vector::Zero(2));
  validate(net);

  Vector z(2);
  z << -0.3, 1.7;
  const Vector out = mlp_forward(net, z, 5.0);
  CHECK(out(0) == -0.3);
  CHECK(out(1) == 1.7);
}

TEST_CASE("make_mlp validates widths and seeds reproducibly") {
  RngStream rng(1);
  CHECK_THROWS_AS(make_mlp({3}, rng), ConfigError);
  CHECK_THROWS_AS(make_mlp({3, 5, 1}, rng), ConfigError);  // input != out + 1
  CHECK_THROWS_AS(make_mlp({2, 0, 1}, rng), ConfigError);

  RngStream r1(7), r2(7);
  const Mlp a = make_mlp({2, 16, 1}, r1);
  const Mlp b = make_mlp({2, 16, 1}, r2);
  CHECK(a.weights[0] == b.weights[0]);
  CHECK(a.weights[1] == b.weights[1]);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(double(a.weights[l].cols()));
    CHECK(a.weights[l].cwiseAbs().maxCoeff() <= bound);
    CHECK(a.biases[l].cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(param_count(a) == 16 * 2 + 16 + 16 + 1);
}

TEST_CASE("forward pass matches a plain-loop reference") {
  RngStream rng(99);
  const Mlp net = make_mlp({3, 7, 5, 2}, rng);
  for (int trial = 0; trial < 10; ++trial) {
    Vector z(2);
    z << rng.uniform(-2, 2), rng.uniform(-2, 2);
    const double t = rng.uniform(-1, 4);
    const Vector got = mlp_forward(net, z, t);
    const std::vector<double> want = reference_forward(net, z, t);
    REQUIRE(got.size() == 2);
    for (Index i = 0; i < 2; ++i)
      CHECK(got(i) == doctest::Approx(want[static_cast<std::size_t>(i)])
                          .epsilon(1e-14));
  }
  Vector wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(mlp_forward(net, wrong, 0.0), ContractError);
}

TEST_CASE("taped forward equals the untaped forward") {
  RngStream rng(21);
  const Mlp net = make_mlp({2, 12, 8, 1}, rng);
  Tape tape;
  const MlpOnTape staged = stage(tape, net);
  Vector z(1);
  z << 0.37;
  const NodeId zn = tape.leaf(z);
  const NodeId out = mlp_forward(tape, net, staged, zn, 2.5);
  const Vector direct = mlp_forward(net, z, 2.5);
  CHECK(tape.value(out)(0, 0) == doctest::Approx(direct(0)).epsilon(1e-15));
}

TEST_CASE("dual, tape and finite differences agree on df/dz") {
  RngStream rng(33);
  for (int trial = 0; trial < 8; ++trial) {
    const Index hidden = 4 + static_cast<Index>(rng.uniform_index(12));
    const std::size_t depth = 1 + rng.uniform_index(3);
    std::vector<Index> widths{2};
    for (std::size_t l = 0; l < depth; ++l) widths.push_back(hidden);
    widths.push_back(1);
    const Mlp net = make_mlp(widths, rng);
    const double z = rng.uniform(-1.5, 1.5);
    const double t = rng.uniform(0.0, 1.0);

    const auto [fv, fdz] = dual_eval(net, z, t);

    Vector zv(1);
    zv << z;
    CHECK(fv == doctest::Approx(mlp_forward(net, zv, t)(0)).epsilon(1e-14));

    const double eps = 1e-6;
    Vector zp(1), zm(1);
    zp << z + eps;
    zm << z - eps;
    const double fd =
        (mlp_forward(net, zp, t)(0) - mlp_forward(net, zm, t)(0)) / (2 * eps);
    CHECK(fdz == doctest::Approx(fd).epsilon(1e-7));

    // Tape-computed derivative of the same composition, relative gap
    // at most 1e-10.
    Tape tape;
    const MlpOnTape staged = stage(tape, net);
    const TapedEval eval = mlp_forward_with_dz(tape, net, staged,
                                               tape.leaf(zv), t);
    CHECK(tape.value(eval.value)(0, 0) == doctest::Approx(fv).epsilon(1e-14));
    const double taped_dz = tape.value(eval.dz)(0, 0);
    CHECK(std::abs(taped_dz - fdz) <= 1e-10 * (std::abs(fdz) + 1e-12));
  }
}

TEST_CASE("gradient check: zero net with a quadratic loss is exact") {
  Mlp net;
  net.widths = {2, 6, 1};
  net.weights = {Matrix::Zero(6, 2), Matrix::Zero(1, 6)};
  net.biases = {Vector::Zero(6), Vector::Zero(1)};
  validate(net);

  std::vector<Vector> inputs;
  std::vector<double> ts;
  std::vector<Vector> targets;
  RngStream rng(3);
  for (int i = 0; i < 4; ++i) {
    Vector z(1), y(1);
    z << rng.uniform(-1, 1);
    y << rng.uniform(-1, 1);
    inputs.push_back(z);
    targets.push_back(y);
    ts.push_back(rng.uniform(0, 1));
  }
  const TapedLoss loss = sum_of_squares_loss(inputs, ts, targets);
  CHECK(grad_check(net, loss, 1e-5) <= 1e-8);
}

TEST_CASE("gradient check: seeded two-state net under sum-of-squares") {
  RngStream rng(42);
  const Mlp net = make_mlp({3, 16, 2}, rng);
  std::vector<Vector> inputs;
  std::vector<double> ts;
  std::vector<Vector> targets;
  for (int i = 0; i < 5; ++i) {
    Vector z(2), y(2);
    z << rng.uniform(-1, 1), rng.uniform(-1, 1);
    y << rng.uniform(-1, 1), rng.uniform(-1, 1);
    inputs.push_back(z);
    targets.push_back(y);
    ts.push_back(rng.uniform(0, 1));
  }
  const TapedLoss loss = sum_of_squares_loss(inputs, ts, targets);
  CHECK(grad_check(net, loss, 1e-5) <= 1e-4);

  // A deliberately corrupted adjoint must be flagged loudly.
  const std::vector<double> good = tape_grad(net, loss);
  std::vector<double> bad = good;
  double* worst = nullptr;
  double mag = 0.0;
  for (double& g : bad)
    if (std::abs(g) > mag) {
      mag = std::abs(g);
      worst = &g;
    }
  REQUIRE(worst != nullptr);
  *worst *= 1.05;
  const std::vector<double> fd = finite_diff_grad(net, loss.value, 1e-5);
  CHECK(max_rel_err(bad, fd) > 1e-2);

  CHECK_THROWS_AS(grad_check(net, loss, 0.0), ConfigError);
  CHECK_THROWS_AS(grad_check(net, loss, 0.5), ConfigError);
}

TEST_CASE("gradients are bit-identical across repeated evaluations") {
  RngStream rng(8);
  const Mlp net = make_mlp({2, 10, 1}, rng);
  std::vector<Vector> inputs{Vector::Constant(1, 0.3)};
  std::vector<double> ts{0.5};
  std::vector<Vector> targets{Vector::Constant(1, -0.2)};
  const TapedLoss loss = sum_of_squares_loss(inputs, ts, targets);
  const std::vector<double> g1 = tape_grad(net, loss);
  const std::vector<double> g2 = tape_grad(net, loss);
  REQUIRE(g1.size() == g2.size());
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}
