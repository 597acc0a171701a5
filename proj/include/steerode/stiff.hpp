#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "steerode/adam.hpp"
#include "steerode/endtime.hpp"
#include "steerode/mlp.hpp"
#include "steerode/ode.hpp"
#include "steerode/rng.hpp"
#include "steerode/types.hpp"
#include "steerode/version.hpp"

namespace steerode {

// A family of linear scalar problems dy/dt = -r y + forcing(t) whose
// stiffness ratio is exactly r. Every variant has a closed form with
// y(0) = 0, assembled from exponential and trigonometric particular
// solutions plus a C e^{-rt} homogeneous term.
enum class StiffVariant { kBase, kMultiExp, kPeriodic, kSteady7 };

std::string to_string(StiffVariant v);
StiffVariant stiff_variant_from_string(const std::string& s);

struct StiffProblem {
  StiffVariant variant = StiffVariant::kBase;
  double r = 1000.0;
  // Forcing decay rates for kMultiExp: -r y + 3 r - 2 r sum_j e^{-k_j t}.
  std::vector<double> decay_rates{1.0};

  bool closed_form() const { return true; }
};

StiffProblem base_problem(double r);
StiffProblem multi_exp_problem(double r, std::vector<double> decay_rates);
StiffProblem periodic_problem(double r);
StiffProblem steady7_problem(double r);

// Exact right-hand side for the variant:
//   base:     -r y + 3 r - 2 r e^{-t}
//   multiexp: -r y + 3 r - 2 r sum_j e^{-k_j t}
//   periodic: base + r sin(t)
//   steady7:  -r y + 7 r - 2 r e^{-t}
double stiff_rhs(const StiffProblem& p, double y, double t);

// Closed-form solution through y(0) = 0. Throws ConfigError when a
// particular-solution coefficient is singular (r equal to 1, or to any
// multi-exponential decay rate, or r = 0 for the periodic term).
double stiff_solution(const StiffProblem& p, double t);

// Base-family shorthand: 3 - ((r-3)/(r-1)) e^{-r t} - (2r/(r-1)) e^{-t}.
double stiff_solution(double r, double t);

struct TrainConfig {
  StiffProblem problem;
  int hidden = 500;
  double dt = 0.125;
  double train_lo = 0.0;
  double train_hi = 15.0;
  double test_lo = 0.0;
  double test_hi = 25.0;
  int n_train = 1000;
  AdamConfig adam;
  int epochs = 400;
  int batch = 0;  // 0: full batch, one optimizer step per epoch
  EndTimeKind sampler_kind = EndTimeKind::kFixed;
  double b = 0.0;
  double std_dev = 0.0;
  SolverConfig solver;
  std::uint64_t seed = kDefaultSeed;
  int test_grid_points = 2001;
  bool closed_loop = true;
  // Leaves wall_secs at 0.0 unless enabled, so output files stay
  // byte-identical across runs of the same config.
  bool record_timing = false;
};

// Throws ConfigError naming the offending field.
void validate(const TrainConfig& cfg);

struct Example {
  double t0 = 0.0;
  double y0 = 0.0;
  double t1 = 0.0;
  double y1 = 0.0;
};

// n_train rows with t0 ~ U(train_lo, train_hi), y from the closed form,
// t1 = t0 + dt.
std::vector<Example> make_training_set(const TrainConfig& cfg, RngStream& rng);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double test_mse = 0.0;
  long train_nfe = 0;  // this epoch's training solves only
  long cum_train_nfe = 0;
};

struct RunRecord {
  TrainConfig cfg;
  double min_test_mse = std::numeric_limits<double>::infinity();
  double final_test_mse = std::numeric_limits<double>::infinity();
  int min_epoch = -1;
  long total_nfe = 0;  // training solves across all epochs
  double wall_secs = 0.0;
  bool failed = false;
  std::string fail_reason;
  std::vector<EpochStats> history;
};

struct TrainResult {
  RunRecord record;
  Mlp model;       // after the last epoch
  Mlp best_model;  // snapshot at min_epoch
};

// One full training run: per epoch, draw every example's end time from
// the sampler, solve the model ODE from (t0, y0) to the drawn T, square
// the gap to the closed form at T, and step Adam on the mean gradient.
// Test MSE is evaluated after every epoch at fixed end times. Solver
// blowups mark the run failed and keep the partial history.
TrainResult train(const TrainConfig& cfg);

struct EvalResult {
  double mse = std::numeric_limits<double>::infinity();
  bool diverged = false;
  long nfe = 0;
  std::vector<double> grid;
  std::vector<double> y_true;
  std::vector<double> y_pred;
};

// Chains solves across [lo, hi], stopping exactly at each of the
// grid_points evaluation times (no interpolation). Closed loop carries
// the model's state through the whole range; open loop resets to the
// closed form at every dt boundary. Predictions past a solver failure
// or beyond |y| = 1e6 are clamped to +-1e6 and flagged. End times are
// never perturbed here.
EvalResult eval_mse(const OdeFn& field, const StiffProblem& p, double lo,
                    double hi, double dt, int grid_points,
                    const SolverConfig& solver, bool closed_loop);
EvalResult eval_mse(const Mlp& model, const StiffProblem& p, double lo,
                    double hi, double dt, int grid_points,
                    const SolverConfig& solver, bool closed_loop);

// dz/dt = net([z; t]) as a plain field.
OdeFn mlp_field(const Mlp& net);

struct SweepGrid {
  TrainConfig base;
  std::vector<StiffVariant> variants;  // empty: keep base.problem.variant
  std::vector<double> rs;
  std::vector<int> hiddens;
  std::vector<double> bs;    // uniform sampler cells
  std::vector<double> stds;  // gaussian sampler cells
  std::vector<std::uint64_t> seeds;
};

// Nested expansion (variant, r, hidden, sampler cell, seed), innermost
// last, so cell order is deterministic. Empty axes keep the base value;
// sampler cells cover bs first (uniform), then stds (gaussian), and if
// both lists are empty the base sampler is kept.
std::vector<TrainConfig> expand_grid(const SweepGrid& grid);

// Runs every cell, up to `workers` in parallel. A failed cell yields a
// failed RunRecord and the sweep continues. Result order always matches
// cell order.
std::vector<RunRecord> sweep(const std::vector<TrainConfig>& cells,
                             int workers = 1);

// Exact column set, one line, no trailing newline:
// seed,variant,r,sampler_kind,b,std,hidden,lr,epochs,rtol,atol,
// min_test_mse,final_test_mse,min_epoch,total_nfe,wall_secs
std::string run_record_csv_header();
std::string run_record_csv_row(const RunRecord& rec);

}  // namespace steerode
