#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "steerode/mlp.hpp"
#include "steerode/tape.hpp"
#include "steerode/types.hpp"

namespace steerode {

enum class Method { kRk4, kDopri5 };

struct SolverConfig {
  Method method = Method::kDopri5;
  double rtol = 1e-5;
  double atol = 1e-7;
  double initial_step = 0.0;  // 0: choose automatically
  long max_steps = 100000;    // trial steps (accepted + rejected)
  int rk4_steps = 100;        // fixed-step count for the rk4 method
  bool record_trajectory = false;
};

struct StepRecord {
  double t = 0.0;      // step start
  double h = 0.0;      // attempted size
  double err = 0.0;    // scaled max-norm error estimate (0 for rk4)
  bool accepted = true;
};

struct SolveResult {
  Vector final_state;
  NodeId final_node = kNoNode;  // set by taped solves
  long nfe = 0;
  long accepted = 0;
  long rejected = 0;
  // (t, state) at t0 and after every accepted step, when requested.
  std::vector<std::pair<double, Vector>> trajectory;
  std::vector<StepRecord> steps;

  // Accepted step sizes in order, for replaying a frozen schedule.
  std::vector<double> accepted_h() const;

  // Piecewise-linear read of the recorded trajectory. First-order only;
  // meant for plotting, not for accuracy-sensitive evaluation.
  Vector sample_at(double t) const;
};

using OdeFn = std::function<Vector(const Vector&, double)>;
using TapedOdeFn = std::function<NodeId(Tape&, NodeId, double)>;

// Classic fixed-step fourth-order Runge-Kutta. Integrates from t0 to t1
// (either direction) in n_steps equal steps. nfe is exactly 4 * n_steps.
SolveResult rk4_solve(const OdeFn& f, const Vector& z0, double t0, double t1,
                      int n_steps, const SolverConfig& cfg = {});
SolveResult rk4_solve(Tape& tape, const TapedOdeFn& f, NodeId z0, double t0,
                      double t1, int n_steps, const SolverConfig& cfg = {});

// Dormand-Prince 4(5) with FSAL and a PI step controller. The error test
// is component-wise: |e_i| <= atol + rtol * max(|y_i|, |y_next_i|).
// nfe is exactly 6 * (accepted + rejected) + 1.
SolveResult dopri5_solve(const OdeFn& f, const Vector& z0, double t0, double t1,
                         const SolverConfig& cfg = {});
// Taped variant: rejected trial steps are rolled off the tape, so the
// gradient sees only the accepted-step arithmetic. The controller reads
// plain values and is itself not differentiated.
SolveResult dopri5_solve(Tape& tape, const TapedOdeFn& f, NodeId z0, double t0,
                         double t1, const SolverConfig& cfg = {});

// Re-runs the accepted-step stage arithmetic under a frozen schedule, no
// controller involved. Bit-identical to the accepted path of the solve
// that produced the schedule, which makes finite differences through an
// adaptive solve well defined.
Vector dopri5_replay(const OdeFn& f, const Vector& z0, double t0,
                     std::span<const double> schedule);

// A scalar loss of the final solver state, evaluable directly and on a
// tape; both views must agree.
struct StateLoss {
  std::function<double(const Vector&)> value;
  std::function<NodeId(Tape&, NodeId)> record;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // flat param_ptrs order
  SolveResult solve;
};

// Records net-driven dynamics dz/dt = net([z; t]) on a fresh tape, solves
// from t0 to t1 with cfg.method, applies the loss to the final state and
// backpropagates to the network parameters.
LossGrad solve_loss_grad(const Mlp& net, const Vector& z0, double t0,
                         double t1, const SolverConfig& cfg,
                         const StateLoss& loss);

}  // namespace steerode
