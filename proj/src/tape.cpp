#include "steerode/tape.hpp"

#include <cmath>

namespace steerode {

namespace {

void require_same_shape(const Matrix& x, const Matrix& y, const char* op) {
  if (x.rows() != y.rows() || x.cols() != y.cols())
    throw ContractError(std::string(op) + ": operand shapes differ");
}

void require_column(const Matrix& x, const char* op) {
  if (x.cols() != 1) throw ContractError(std::string(op) + ": expected a column");
}

}  // namespace

NodeId Tape::push(TapeNode n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::leaf(Matrix v) {
  TapeNode n;
  n.op = OpKind::kLeaf;
  n.value = std::move(v);
  return push(std::move(n));
}

NodeId Tape::matvec(NodeId w, NodeId x) {
  const Matrix& wv = node(w).value;
  const Matrix& xv = node(x).value;
  require_column(xv, "matvec");
  if (wv.cols() != xv.rows()) throw ContractError("matvec: inner dims differ");
  TapeNode n;
  n.op = OpKind::kMatVec;
  n.in = {w, x};
  n.value.noalias() = wv * xv;
  return push(std::move(n));
}

NodeId Tape::add(NodeId x, NodeId y) {
  const Matrix& xv = node(x).value;
  const Matrix& yv = node(y).value;
  require_same_shape(xv, yv, "add");
  TapeNode n;
  n.op = OpKind::kAdd;
  n.in = {x, y};
  n.value = xv + yv;
  return push(std::move(n));
}

NodeId Tape::lincomb(std::span<const NodeId> xs, std::span<const double> cs) {
  if (xs.size() != cs.size() || xs.empty())
    throw ContractError("lincomb: need matching, non-empty ids and coeffs");
  const Matrix& first = node(xs[0]).value;
  TapeNode n;
  n.op = OpKind::kLinComb;
  n.lin = static_cast<std::int32_t>(lincombs_.size());
  n.value = cs[0] * first;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const Matrix& v = node(xs[i]).value;
    require_same_shape(first, v, "lincomb");
    n.value.noalias() += cs[i] * v;
  }
  lincombs_.push_back({lin_ids_.size(), xs.size()});
  lin_ids_.insert(lin_ids_.end(), xs.begin(), xs.end());
  lin_coeffs_.insert(lin_coeffs_.end(), cs.begin(), cs.end());
  return push(std::move(n));
}

NodeId Tape::affine(NodeId x, double a, double b) {
  TapeNode n;
  n.op = OpKind::kAffine;
  n.in = {x, kNoNode};
  n.a = a;
  n.value = (a * node(x).value).array() + b;
  return push(std::move(n));
}

NodeId Tape::tanh(NodeId x) {
  TapeNode n;
  n.op = OpKind::kTanh;
  n.in = {x, kNoNode};
  n.value = node(x).value.array().tanh();
  return push(std::move(n));
}

NodeId Tape::mul(NodeId x, NodeId y) {
  const Matrix& xv = node(x).value;
  const Matrix& yv = node(y).value;
  require_same_shape(xv, yv, "mul");
  TapeNode n;
  n.op = OpKind::kMul;
  n.in = {x, y};
  n.value = xv.cwiseProduct(yv);
  return push(std::move(n));
}

NodeId Tape::square(NodeId x) {
  TapeNode n;
  n.op = OpKind::kSquare;
  n.in = {x, kNoNode};
  n.value = node(x).value.array().square();
  return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
  TapeNode n;
  n.op = OpKind::kSum;
  n.in = {x, kNoNode};
  n.value = Matrix::Constant(1, 1, node(x).value.sum());
  return push(std::move(n));
}

NodeId Tape::append_scalar(NodeId x, double s) {
  const Matrix& xv = node(x).value;
  require_column(xv, "append_scalar");
  TapeNode n;
  n.op = OpKind::kAppendScalar;
  n.in = {x, kNoNode};
  n.a = s;
  n.value.resize(xv.rows() + 1, 1);
  n.value.topRows(xv.rows()) = xv;
  n.value(xv.rows(), 0) = s;
  return push(std::move(n));
}

NodeId Tape::row(NodeId x, Index i) {
  const Matrix& xv = node(x).value;
  require_column(xv, "row");
  if (i < 0 || i >= xv.rows()) throw ContractError("row: index out of range");
  TapeNode n;
  n.op = OpKind::kRow;
  n.in = {x, kNoNode};
  n.a = static_cast<double>(i);
  n.value = Matrix::Constant(1, 1, xv(i, 0));
  return push(std::move(n));
}

NodeId Tape::vstack2(NodeId x, NodeId y) {
  const Matrix& xv = node(x).value;
  const Matrix& yv = node(y).value;
  require_column(xv, "vstack2");
  require_column(yv, "vstack2");
  TapeNode n;
  n.op = OpKind::kVStack2;
  n.in = {x, y};
  n.value.resize(xv.rows() + yv.rows(), 1);
  n.value.topRows(xv.rows()) = xv;
  n.value.bottomRows(yv.rows()) = yv;
  return push(std::move(n));
}

void Tape::clear() {
  nodes_.clear();
  lincombs_.clear();
  lin_ids_.clear();
  lin_coeffs_.clear();
}

Tape::Mark Tape::mark() const {
  return {nodes_.size(), lincombs_.size(), lin_ids_.size()};
}

void Tape::rollback(const Mark& m) {
  if (m.nodes > nodes_.size() || m.lincombs > lincombs_.size() ||
      m.lin_terms > lin_ids_.size())
    throw ContractError("rollback: mark is ahead of the tape");
  nodes_.resize(m.nodes);
  lincombs_.resize(m.lincombs);
  lin_ids_.resize(m.lin_terms);
  lin_coeffs_.resize(m.lin_terms);
}

Gradients Tape::backward(NodeId output) const {
  const TapeNode& out = node(output);
  if (out.value.rows() != 1 || out.value.cols() != 1)
    throw ContractError("backward: output must be 1x1");

  Gradients g(nodes_.size());
  g.slot(output) = Matrix::Constant(1, 1, 1.0);

  auto accumulate = [&g, this](NodeId id, const auto& contrib) {
    Matrix& slot = g.slot(id);
    if (slot.size() == 0) {
      slot = contrib;
    } else {
      slot.noalias() += contrib;
    }
  };

  for (NodeId id = output; id >= 0; --id) {
    if (!g.has(id)) continue;
    const TapeNode& n = nodes_[static_cast<std::size_t>(id)];
    const Matrix& gv = g.at(id);
    switch (n.op) {
      case OpKind::kLeaf:
        break;
      case OpKind::kMatVec: {
        const Matrix& wv = node(n.in[0]).value;
        const Matrix& xv = node(n.in[1]).value;
        accumulate(n.in[0], gv * xv.transpose());
        accumulate(n.in[1], wv.transpose() * gv);
        break;
      }
      case OpKind::kAdd:
        accumulate(n.in[0], gv);
        accumulate(n.in[1], gv);
        break;
      case OpKind::kLinComb: {
        const LinCombRef& lc = lincombs_[static_cast<std::size_t>(n.lin)];
        for (std::size_t i = 0; i < lc.count; ++i)
          accumulate(lin_ids_[lc.first + i],
                     lin_coeffs_[lc.first + i] * gv);
        break;
      }
      case OpKind::kAffine:
        accumulate(n.in[0], n.a * gv);
        break;
      case OpKind::kTanh:
        accumulate(n.in[0],
                   ((1.0 - n.value.array().square()) * gv.array()).matrix());
        break;
      case OpKind::kMul:
        accumulate(n.in[0], node(n.in[1]).value.cwiseProduct(gv));
        accumulate(n.in[1], node(n.in[0]).value.cwiseProduct(gv));
        break;
      case OpKind::kSquare:
        accumulate(n.in[0], 2.0 * node(n.in[0]).value.cwiseProduct(gv));
        break;
      case OpKind::kSum:
        accumulate(n.in[0],
                   Matrix::Constant(node(n.in[0]).value.rows(),
                                    node(n.in[0]).value.cols(), gv(0, 0)));
        break;
      case OpKind::kAppendScalar:
        accumulate(n.in[0], gv.topRows(gv.rows() - 1));
        break;
      case OpKind::kRow: {
        const Index i = static_cast<Index>(n.a);
        Matrix scatter = Matrix::Zero(node(n.in[0]).value.rows(), 1);
        scatter(i, 0) = gv(0, 0);
        accumulate(n.in[0], scatter);
        break;
      }
      case OpKind::kVStack2: {
        const Index top = node(n.in[0]).value.rows();
        accumulate(n.in[0], gv.topRows(top));
        accumulate(n.in[1], gv.bottomRows(gv.rows() - top));
        break;
      }
    }
  }
  return g;
}

}  // namespace steerode
