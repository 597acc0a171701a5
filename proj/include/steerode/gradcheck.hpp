#pragma once

#include <functional>
#include <span>
#include <vector>

#include "steerode/mlp.hpp"

namespace steerode {

// A scalar loss of the network parameters, evaluable both directly (for
// finite differences) and on a tape (for reverse mode). The two must
// describe the same function.
struct TapedLoss {
  std::function<double(const Mlp&)> value;
  std::function<NodeId(Tape&, const Mlp&, const MlpOnTape&)> record;
};

// Reverse-mode gradient of the loss, flattened in param_ptrs order.
std::vector<double> tape_grad(const Mlp& net, const TapedLoss& loss);

// Central finite differences of loss.value, one probe per parameter.
std::vector<double> finite_diff_grad(const Mlp& net,
                                     const std::function<double(const Mlp&)>& f,
                                     double eps);

// max_i |a_i - b_i| / (|b_i| + 1e-12), with b the reference.
double max_rel_err(std::span<const double> a, std::span<const double> b);

// Convenience wrapper: reverse-mode vs central differences.
// Requires eps in (0, 1e-2].
double grad_check(const Mlp& net, const TapedLoss& loss, double eps);

}  // namespace steerode
