#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "steerode/errors.hpp"
#include "steerode/types.hpp"

namespace steerode {

using NodeId = std::int32_t;
inline constexpr NodeId kNoNode = -1;

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatVec,        // W (m x n) * x (n x 1)
  kAdd,           // elementwise
  kLinComb,       // sum_i c_i * x_i, all same shape
  kAffine,        // a * x + b, elementwise with scalar a, b
  kTanh,          // elementwise
  kMul,           // elementwise product
  kSquare,        // elementwise square
  kSum,           // sum of all entries -> 1 x 1
  kAppendScalar,  // [x; s] for a column x and constant s
  kRow,           // single row of a column vector -> 1 x 1
  kVStack2,       // [x; y] for two columns
};

struct TapeNode {
  OpKind op = OpKind::kLeaf;
  std::array<NodeId, 2> in{kNoNode, kNoNode};
  std::int32_t lin = -1;  // index into the lincomb pool when op == kLinComb
  double a = 0.0;         // affine scale / appended scalar / row index
  Matrix value;
};

// Adjoints produced by Tape::backward. Entries are empty for nodes the
// output does not depend on.
class Gradients {
 public:
  explicit Gradients(std::size_t n) : adj_(n) {}
  bool has(NodeId id) const { return adj_[check(id)].size() > 0; }
  const Matrix& at(NodeId id) const {
    if (!has(id)) throw ContractError("Gradients: node has no adjoint");
    return adj_[id];
  }
  Matrix& slot(NodeId id) { return adj_[check(id)]; }
  std::size_t size() const { return adj_.size(); }

 private:
  std::size_t check(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= adj_.size())
      throw ContractError("Gradients: node id out of range");
    return static_cast<std::size_t>(id);
  }
  std::vector<Matrix> adj_;
};

// Record-then-replay reverse-mode tape over dense matrices. Nodes are
// appended in evaluation order, so ids are already a topological order;
// backward() walks them once in reverse. rollback() drops a recorded
// suffix, which is how rejected adaptive solver steps are excluded from
// the gradient while keeping everything recorded before them valid.
class Tape {
 public:
  struct Mark {
    std::size_t nodes = 0;
    std::size_t lincombs = 0;
    std::size_t lin_terms = 0;
  };

  NodeId leaf(Matrix v);
  NodeId matvec(NodeId w, NodeId x);
  NodeId add(NodeId x, NodeId y);
  NodeId lincomb(std::span<const NodeId> xs, std::span<const double> cs);
  NodeId affine(NodeId x, double a, double b);
  NodeId tanh(NodeId x);
  NodeId mul(NodeId x, NodeId y);
  NodeId square(NodeId x);
  NodeId sum(NodeId x);
  NodeId append_scalar(NodeId x, double s);
  NodeId row(NodeId x, Index i);
  NodeId vstack2(NodeId x, NodeId y);

  const Matrix& value(NodeId id) const { return node(id).value; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear();

  Mark mark() const;
  void rollback(const Mark& m);

  // Reverse sweep from a 1x1 output node. Seeds its adjoint with 1.
  Gradients backward(NodeId output) const;

 private:
  const TapeNode& node(NodeId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
      throw ContractError("Tape: node id out of range");
    return nodes_[static_cast<std::size_t>(id)];
  }
  NodeId push(TapeNode n);

  struct LinCombRef {
    std::size_t first = 0;
    std::size_t count = 0;
  };
  std::vector<TapeNode> nodes_;
  std::vector<LinCombRef> lincombs_;
  std::vector<NodeId> lin_ids_;
  std::vector<double> lin_coeffs_;
};

}  // namespace steerode
