#pragma once

#include <cmath>
#include <span>

#include "steerode/mlp.hpp"

namespace steerode {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 1.0;  // per-step multiplier on the learning rate
};

// Bias-corrected Adam over the flat parameter order of an Mlp.
class Adam {
 public:
  Adam(Index n, AdamConfig cfg)
      : cfg_(cfg), m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

  void step(Mlp& net, std::span<const double> grad) {
    std::vector<double*> ptrs = param_ptrs(net);
    if (grad.size() != ptrs.size() ||
        static_cast<Index>(grad.size()) != m_.size())
      throw ContractError("Adam: gradient length mismatch");
    ++t_;
    const double lr_t = cfg_.lr * std::pow(cfg_.lr_decay, t_ - 1);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      const double g = grad[i];
      m_(static_cast<Index>(i)) =
          cfg_.beta1 * m_(static_cast<Index>(i)) + (1.0 - cfg_.beta1) * g;
      v_(static_cast<Index>(i)) =
          cfg_.beta2 * v_(static_cast<Index>(i)) + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_(static_cast<Index>(i)) / c1;
      const double vhat = v_(static_cast<Index>(i)) / c2;
      *ptrs[i] -= lr_t * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  int t_ = 0;
  Vector m_;
  Vector v_;
};

}  // namespace steerode
