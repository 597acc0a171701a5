#pragma once

#include <utility>
#include <vector>

#include "steerode/dual.hpp"
#include "steerode/rng.hpp"
#include "steerode/tape.hpp"
#include "steerode/types.hpp"

namespace steerode {

// Fully connected tanh network modelling a time-dependent vector field
// f(z, t). The input layer always receives [z; t], so the input width is
// the state dimension plus one and the output width is the state
// dimension. Hidden layers use tanh; the output layer is linear.
struct Mlp {
  std::vector<Index> widths;   // input, hidden..., output
  std::vector<Matrix> weights; // weights[l] has shape widths[l+1] x widths[l]
  std::vector<Vector> biases;  // biases[l] has length widths[l+1]

  Index state_dim() const { return widths.back(); }
  Index input_dim() const { return widths.front(); }
  std::size_t layer_count() const { return weights.size(); }
};

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer, biases zero.
Mlp make_mlp(const std::vector<Index>& widths, RngStream& rng);

// Shape invariants: >= 2 widths, input = output + 1, weight/bias shapes.
void validate(const Mlp& net);

Index param_count(const Mlp& net);

// Stable flat parameter order: per layer, weight entries in storage order
// (column-major), then the bias. The optimizer, the gradient flattening
// and the finite-difference probes all share this order.
std::vector<double*> param_ptrs(Mlp& net);
std::vector<const double*> param_ptrs(const Mlp& net);

// Plain evaluation of f([z; t]).
Vector mlp_forward(const Mlp& net, const Vector& z, double t);

// Same computation templated on the scalar, usable with Dual.
template <class Scalar>
VectorT<Scalar> mlp_forward_scalar(const Mlp& net, const VectorT<Scalar>& z,
                                   Scalar t) {
  if (z.size() + 1 != net.input_dim())
    throw ContractError("mlp_forward: state dim does not match input width");
  VectorT<Scalar> x(z.size() + 1);
  x.head(z.size()) = z;
  x(z.size()) = t;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    VectorT<Scalar> h = net.weights[l].template cast<Scalar>() * x +
                        net.biases[l].template cast<Scalar>();
    if (l + 1 < net.weights.size()) {
      for (Index i = 0; i < h.size(); ++i) h(i) = tanh(h(i));
    }
    x = std::move(h);
  }
  return x;
}

// (f, df/dz) for one-dimensional state via a single forward-mode pass.
std::pair<double, double> dual_eval(const Mlp& net, double z, double t);

// Parameters staged as tape leaves, in layer order.
struct MlpOnTape {
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
};

MlpOnTape stage(Tape& tape, const Mlp& net);

// Taped evaluation of f([z; t]) where z is a tape node.
NodeId mlp_forward(Tape& tape, const Mlp& net, const MlpOnTape& staged,
                   NodeId z, double t);

// Taped evaluation that also propagates the input-direction tangent
// through every layer, yielding d f / d z_0 as a tape node. Only valid
// for one-dimensional state; used for trainable divergence traces.
struct TapedEval {
  NodeId value = kNoNode;
  NodeId dz = kNoNode;
};
TapedEval mlp_forward_with_dz(Tape& tape, const Mlp& net,
                              const MlpOnTape& staged, NodeId z, double t);

// Adjoints of the staged parameters, flattened in param_ptrs order.
// Parameters the output does not reach contribute zeros.
std::vector<double> flatten_param_grads(const Mlp& net,
                                        const MlpOnTape& staged,
                                        const Gradients& grads);

}  // namespace steerode
