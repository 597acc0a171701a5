#include <cstring>
#include <functional>
#include <vector>

#include "doctest.h"
#include "steerode/rng.hpp"
#include "steerode/tape.hpp"

using namespace steerode;

namespace {

using GraphFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

Matrix random_matrix(Index rows, Index cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.uniform(-1.0, 1.0);
  return m;
}

double eval_graph(const GraphFn& build, const std::vector<Matrix>& leaves) {
  Tape tape;
  std::vector<NodeId> ids;
  for (const Matrix& m : leaves) ids.push_back(tape.leaf(m));
  return tape.value(build(tape, ids))(0, 0);
}

// Adjoints of every leaf entry vs central finite differences.
void check_against_fd(const GraphFn& build, const std::vector<Matrix>& leaves,
                      double tol = 1e-7) {
  Tape tape;
  std::vector<NodeId> ids;
  for (const Matrix& m : leaves) ids.push_back(tape.leaf(m));
  const NodeId out = build(tape, ids);
  const Gradients grads = tape.backward(out);

  const double eps = 1e-5;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    for (Index c = 0; c < leaves[l].cols(); ++c) {
      for (Index r = 0; r < leaves[l].rows(); ++r) {
        std::vector<Matrix> probe = leaves;
        probe[l](r, c) += eps;
        const double hi = eval_graph(build, probe);
        probe[l](r, c) -= 2 * eps;
        const double lo = eval_graph(build, probe);
        const double fd = (hi - lo) / (2 * eps);
        const double ad = grads.has(ids[l]) ? grads.at(ids[l])(r, c) : 0.0;
        CHECK(ad == doctest::Approx(fd).epsilon(tol).scale(1.0));
      }
    }
  }
}

}  // namespace

TEST_CASE("every primitive op backpropagates correctly") {
  RngStream rng(314);

  SUBCASE("matvec chain") {
    const GraphFn g = [](Tape& t, const std::vector<NodeId>& v) {
      return t.sum(t.square(t.matvec(v[0], v[1])));
    };
    check_against_fd(g, {random_matrix(3, 4, rng), random_matrix(4, 1, rng)});
  }
  SUBCASE("add, affine, tanh") {
    const GraphFn g = [](Tape& t, const std::vector<NodeId>& v) {
      return t.sum(t.tanh(t.affine(t.add(v[0], v[1]), 0.7, -0.2)));
    };
    check_against_fd(g, {random_matrix(5, 1, rng), random_matrix(5, 1, rng)});
  }
  SUBCASE("lincomb") {
    const GraphFn g = [](Tape& t, const std::vector<NodeId>& v) {
      const NodeId ids[] = {v[0], v[1], v[2]};
      const double cs[] = {0.5, -1.25, 2.0};
      return t.sum(t.square(t.lincomb(ids, cs)));
    };
    check_against_fd(g, {random_matrix(4, 1, rng), random_matrix(4, 1, rng),
                         random_matrix(4, 1, rng)});
  }
  SUBCASE("mul and square") {
    const GraphFn g = [](Tape& t, const std::vector<NodeId>& v) {
      return t.sum(t.mul(t.square(v[0]), t.tanh(v[1])));
    };
    check_against_fd(g, {random_matrix(6, 1, rng), random_matrix(6, 1, rng)});
  }
  SUBCASE("append_scalar, row, vstack2") {
    const GraphFn g = [](Tape& t, const std::vector<NodeId>& v) {
      const NodeId x = t.append_scalar(v[0], 1.5);
      const NodeId top = t.row(x, 0);
      const NodeId stacked = t.vstack2(t.tanh(v[1]), top);
      return t.sum(t.square(stacked));
    };
    check_against_fd(g, {random_matrix(3, 1, rng), random_matrix(2, 1, rng)});
  }
  SUBCASE("node reused by several consumers accumulates adjoints") {
    const GraphFn g = [](Tape& t, const std::vector<NodeId>& v) {
      const NodeId shared = t.tanh(v[0]);
      return t.sum(t.add(t.square(shared), t.mul(shared, v[1])));
    };
    check_against_fd(g, {random_matrix(4, 1, rng), random_matrix(4, 1, rng)});
  }
}

TEST_CASE("adjoint of w in tanh(w.x) at w = 0 is x") {
  Tape tape;
  Vector x(3);
  x << 0.4, -1.2, 2.5;
  const NodeId w = tape.leaf(Matrix::Zero(1, 3));
  const NodeId xn = tape.leaf(x);
  const NodeId out = tape.tanh(tape.matvec(w, xn));
  const Gradients grads = tape.backward(out);
  REQUIRE(grads.has(w));
  const Matrix& gw = grads.at(w);
  for (Index i = 0; i < 3; ++i)
    CHECK(gw(0, i) == doctest::Approx(x(i)).epsilon(1e-15));
}

TEST_CASE("backward requires a 1x1 output") {
  Tape tape;
  const NodeId v = tape.leaf(Matrix::Ones(3, 1));
  CHECK_THROWS_AS(tape.backward(v), ContractError);
}

TEST_CASE("rollback drops a recorded suffix and its lincomb storage") {
  Tape tape;
  const NodeId a = tape.leaf(Matrix::Ones(2, 1));
  const NodeId b = tape.tanh(a);
  const Tape::Mark m = tape.mark();

  const NodeId ids[] = {a, b};
  const double cs[] = {1.0, -2.0};
  (void)tape.lincomb(ids, cs);
  (void)tape.square(b);
  CHECK(tape.size() == 4);

  tape.rollback(m);
  CHECK(tape.size() == 2);
  CHECK(tape.value(b)(0, 0) == doctest::Approx(std::tanh(1.0)));

  // The tape keeps working after a rollback and the gradient is the one
  // of the surviving graph.
  const NodeId out = tape.sum(tape.square(b));
  const Gradients grads = tape.backward(out);
  CHECK(grads.at(a)(0, 0) ==
        doctest::Approx(2.0 * std::tanh(1.0) * (1.0 - std::pow(std::tanh(1.0), 2))));
  CHECK_THROWS_AS(tape.rollback(Tape::Mark{99, 0, 0}), ContractError);
}

TEST_CASE("gradients are bit-identical across repeated runs") {
  auto run = [] {
    RngStream rng(55);
    Tape tape;
    const NodeId w1 = tape.leaf(random_matrix(8, 5, rng));
    const NodeId x = tape.leaf(random_matrix(5, 1, rng));
    const NodeId w2 = tape.leaf(random_matrix(1, 8, rng));
    const NodeId out =
        tape.sum(tape.square(tape.matvec(w2, tape.tanh(tape.matvec(w1, x)))));
    const Gradients g = tape.backward(out);
    return std::make_pair(Matrix(g.at(w1)), Matrix(g.at(x)));
  };
  const auto [g1w, g1x] = run();
  const auto [g2w, g2x] = run();
  CHECK(std::memcmp(g1w.data(), g2w.data(), sizeof(double) * g1w.size()) == 0);
  CHECK(std::memcmp(g1x.data(), g2x.data(), sizeof(double) * g1x.size()) == 0);
}

TEST_CASE("shape mismatches are rejected") {
  Tape tape;
  const NodeId a = tape.leaf(Matrix::Ones(2, 1));
  const NodeId b = tape.leaf(Matrix::Ones(3, 1));
  const NodeId w = tape.leaf(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.add(a, b), ContractError);
  CHECK_THROWS_AS(tape.mul(a, b), ContractError);
  CHECK_THROWS_AS(tape.matvec(w, b), ContractError);
  CHECK_THROWS_AS(tape.row(a, 5), ContractError);
  CHECK_THROWS_AS(tape.value(99), ContractError);
}
