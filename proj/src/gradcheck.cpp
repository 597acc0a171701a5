#include "steerode/gradcheck.hpp"

#include <cmath>

namespace steerode {

std::vector<double> tape_grad(const Mlp& net, const TapedLoss& loss) {
  Tape tape;
  MlpOnTape staged = stage(tape, net);
  const NodeId out = loss.record(tape, net, staged);
  const Gradients grads = tape.backward(out);
  return flatten_param_grads(net, staged, grads);
}

std::vector<double> finite_diff_grad(const Mlp& net,
                                     const std::function<double(const Mlp&)>& f,
                                     double eps) {
  Mlp probe = net;
  std::vector<double*> ptrs = param_ptrs(probe);
  std::vector<double> grad(ptrs.size());
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const double saved = *ptrs[i];
    *ptrs[i] = saved + eps;
    const double hi = f(probe);
    *ptrs[i] = saved - eps;
    const double lo = f(probe);
    *ptrs[i] = saved;
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return grad;
}

double max_rel_err(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ContractError("max_rel_err: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double rel = std::abs(a[i] - b[i]) / (std::abs(b[i]) + 1e-12);
    if (rel > worst) worst = rel;
  }
  return worst;
}

double grad_check(const Mlp& net, const TapedLoss& loss, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2))
    throw ConfigError("grad_check: eps must lie in (0, 1e-2]");
  const std::vector<double> ad = tape_grad(net, loss);
  const std::vector<double> fd = finite_diff_grad(net, loss.value, eps);
  return max_rel_err(ad, fd);
}

}  // namespace steerode
