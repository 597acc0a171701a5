#include "steerode/mlp.hpp"

#include <cmath>

namespace steerode {

Mlp make_mlp(const std::vector<Index>& widths, RngStream& rng) {
  if (widths.size() < 2) throw ConfigError("make_mlp: need at least two widths");
  for (Index w : widths)
    if (w <= 0) throw ConfigError("make_mlp: widths must be positive");
  if (widths.front() != widths.back() + 1)
    throw ConfigError("make_mlp: input width must be state width + 1");
  Mlp net;
  net.widths = widths;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const Index rows = widths[l + 1];
    const Index cols = widths[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    Matrix w(rows, cols);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r) w(r, c) = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(rows));
  }
  validate(net);
  return net;
}

void validate(const Mlp& net) {
  if (net.widths.size() < 2)
    throw ContractError("Mlp: need at least two widths");
  if (net.widths.front() != net.widths.back() + 1)
    throw ContractError("Mlp: input width must be state width + 1");
  if (net.weights.size() + 1 != net.widths.size() ||
      net.biases.size() != net.weights.size())
    throw ContractError("Mlp: layer count does not match widths");
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    if (net.weights[l].rows() != net.widths[l + 1] ||
        net.weights[l].cols() != net.widths[l])
      throw ContractError("Mlp: weight shape does not match widths");
    if (net.biases[l].size() != net.widths[l + 1])
      throw ContractError("Mlp: bias length does not match widths");
  }
}

Index param_count(const Mlp& net) {
  Index n = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    n += net.weights[l].size() + net.biases[l].size();
  return n;
}

std::vector<double*> param_ptrs(Mlp& net) {
  std::vector<double*> ptrs;
  ptrs.reserve(static_cast<std::size_t>(param_count(net)));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Matrix& w = net.weights[l];
    for (Index i = 0; i < w.size(); ++i) ptrs.push_back(w.data() + i);
    Vector& b = net.biases[l];
    for (Index i = 0; i < b.size(); ++i) ptrs.push_back(b.data() + i);
  }
  return ptrs;
}

std::vector<const double*> param_ptrs(const Mlp& net) {
  std::vector<const double*> ptrs;
  ptrs.reserve(static_cast<std::size_t>(param_count(net)));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Matrix& w = net.weights[l];
    for (Index i = 0; i < w.size(); ++i) ptrs.push_back(w.data() + i);
    const Vector& b = net.biases[l];
    for (Index i = 0; i < b.size(); ++i) ptrs.push_back(b.data() + i);
  }
  return ptrs;
}

Vector mlp_forward(const Mlp& net, const Vector& z, double t) {
  if (z.size() + 1 != net.input_dim())
    throw ContractError("mlp_forward: state dim does not match input width");
  Vector x(z.size() + 1);
  x.head(z.size()) = z;
  x(z.size()) = t;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Vector h = net.biases[l];
    h.noalias() += net.weights[l] * x;
    if (l + 1 < net.weights.size()) h = h.array().tanh();
    x = std::move(h);
  }
  return x;
}

std::pair<double, double> dual_eval(const Mlp& net, double z, double t) {
  if (net.state_dim() != 1)
    throw ContractError("dual_eval: state must be one-dimensional");
  VectorT<Dual> zd(1);
  zd(0) = Dual(z, 1.0);
  const VectorT<Dual> out = mlp_forward_scalar<Dual>(net, zd, Dual(t));
  return {out(0).v, out(0).d};
}

MlpOnTape stage(Tape& tape, const Mlp& net) {
  validate(net);
  MlpOnTape staged;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    staged.weights.push_back(tape.leaf(net.weights[l]));
    staged.biases.push_back(tape.leaf(net.biases[l]));
  }
  return staged;
}

NodeId mlp_forward(Tape& tape, const Mlp& net, const MlpOnTape& staged,
                   NodeId z, double t) {
  if (tape.value(z).rows() + 1 != net.input_dim())
    throw ContractError("mlp_forward: state dim does not match input width");
  NodeId x = tape.append_scalar(z, t);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    NodeId h = tape.add(tape.matvec(staged.weights[l], x), staged.biases[l]);
    x = (l + 1 < net.weights.size()) ? tape.tanh(h) : h;
  }
  return x;
}

TapedEval mlp_forward_with_dz(Tape& tape, const Mlp& net,
                              const MlpOnTape& staged, NodeId z, double t) {
  if (net.state_dim() != 1)
    throw ContractError("mlp_forward_with_dz: state must be one-dimensional");
  if (tape.value(z).rows() != 1)
    throw ContractError("mlp_forward_with_dz: z must be 1x1");
  NodeId x = tape.append_scalar(z, t);
  // Tangent of [z; t] in the z direction.
  Matrix seed = Matrix::Zero(net.input_dim(), 1);
  seed(0, 0) = 1.0;
  NodeId j = tape.leaf(std::move(seed));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    NodeId h = tape.add(tape.matvec(staged.weights[l], x), staged.biases[l]);
    j = tape.matvec(staged.weights[l], j);
    if (l + 1 < net.weights.size()) {
      NodeId a = tape.tanh(h);
      // tanh'(h) = 1 - tanh(h)^2, written in terms of the activation.
      NodeId dact = tape.affine(tape.square(a), -1.0, 1.0);
      j = tape.mul(dact, j);
      x = a;
    } else {
      x = h;
    }
  }
  return {x, j};
}

std::vector<double> flatten_param_grads(const Mlp& net,
                                        const MlpOnTape& staged,
                                        const Gradients& grads) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(param_count(net)));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    auto append = [&flat, &grads](NodeId id, Index rows, Index cols) {
      if (grads.has(id)) {
        const Matrix& g = grads.at(id);
        flat.insert(flat.end(), g.data(), g.data() + g.size());
      } else {
        flat.insert(flat.end(), static_cast<std::size_t>(rows * cols), 0.0);
      }
    };
    append(staged.weights[l], net.weights[l].rows(), net.weights[l].cols());
    append(staged.biases[l], net.biases[l].size(), 1);
  }
  return flat;
}

}  // namespace steerode
