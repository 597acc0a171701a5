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
#include "steerode/version.hpp"

namespace steerode {

// Mixture-of-Gaussians target density for the one-dimensional flow.
struct MogSpec {
  std::vector<double> means{-2.0, 2.0};
  std::vector<double> stds{0.5, 0.5};
  std::vector<double> weights{0.5, 0.5};
};

// Positive weights summing to 1, positive stds, matching lengths.
void validate(const MogSpec& mog);

double mog_pdf(const MogSpec& mog, double x);
double mog_log_pdf(const MogSpec& mog, double x);
double mog_sample(const MogSpec& mog, RngStream& rng);

// Differential entropy -int p log p by Simpson quadrature on [lo, hi]
// with an odd number of points. This is the floor for any model NLL on
// the mixture, so it serves as the oracle the trained flow is judged
// against.
double mog_entropy(const MogSpec& mog, double lo, double hi, int points);

// Flow state: z paired with the accumulated -int tr(df/dz) dt term, so
// logp = log N(z; 0, 1) + delta_logp once integrated back to t0.
struct CnfState {
  double z = 0.0;
  double delta_logp = 0.0;
};

// Augmented dynamics d[z; l]/dt = [f(z, t); -df/dz(z, t)] over a 2-vector
// state, the scalar derivative computed exactly in one forward-mode pass.
OdeFn cnf_rhs(const Mlp& net);

struct FlowResult {
  CnfState state;
  double logp = 0.0;
  long nfe = 0;
};

// Integrates the augmented system from (x, 0) at time T backward to t0,
// then applies the standard-normal base density at z(t0).
FlowResult backward_flow(const Mlp& net, double x, double t0, double T,
                         const SolverConfig& solver);

double log_likelihood(const Mlp& net, double x, double t0, double T,
                      const SolverConfig& solver);

// Cross-entropy -int p_mog(x) log p_model(x) dx by Simpson quadrature:
// the model NLL against the target without sampling noise. Adds solver
// evaluations to *nfe when given.
double quadrature_nll(const Mlp& net, const MogSpec& mog, double t0, double T,
                      const SolverConfig& solver, double lo, double hi,
                      int points, long* nfe = nullptr);

// int p_model(x) dx over [lo, hi] by Simpson quadrature; a trained model
// must stay within quadrature error of 1.
double density_integral(const Mlp& net, double t0, double T,
                        const SolverConfig& solver, double lo, double hi,
                        int points);

struct CnfTrainConfig {
  MogSpec mog;
  int hidden = 32;
  int layers = 2;  // hidden tanh layers; depth buys the time-gating the
                   // freeze-past-the-sampled-end-time solution needs
  int n_train = 256;
  int batch = 32;
  int epochs = 40;
  AdamConfig adam;
  double t0 = 0.0;
  double t1 = 1.0;  // evaluation end time; training may sample around it
  EndTimeKind sampler_kind = EndTimeKind::kFixed;
  double b = 0.0;        // uniform half-width
  double std_dev = 0.0;  // gaussian spread
  // Shift the nominal end time to t1 - b so uniform draws never exceed
  // t1; the flow then finishes its transformation by t1 - b on average.
  bool constrained_shift = true;
  SolverConfig solver;
  std::uint64_t seed = kDefaultSeed;
  double eval_lo = -6.0;
  double eval_hi = 6.0;
  int eval_points = 121;
  bool record_timing = false;
};

void validate(const CnfTrainConfig& cfg);

struct CnfEpochStats {
  int epoch = 0;
  double nll = 0.0;  // quadrature NLL at the fixed evaluation end time
  long train_nfe = 0;
  long cum_train_nfe = 0;
  double t_end_mean = 0.0;  // mean sampled end time this epoch
};

struct CnfRunRecord {
  CnfTrainConfig cfg;
  double min_nll = std::numeric_limits<double>::infinity();
  double final_nll = std::numeric_limits<double>::infinity();
  int min_epoch = -1;
  long total_nfe = 0;
  double wall_secs = 0.0;
  bool failed = false;
  std::string fail_reason;
  std::vector<CnfEpochStats> history;
};

struct CnfTrainResult {
  CnfRunRecord record;
  Mlp model;
  Mlp best_model;
};

// Maximum-likelihood training: one end-time draw per optimizer step
// shared by the whole batch, mean NLL gradient per batch, evaluation
// NLL always at the fixed end time t1. Divergence during an epoch stops
// the run with the history up to that point retained.
CnfTrainResult train_cnf(const CnfTrainConfig& cfg);

// Cumulative training NFE at the first epoch whose evaluation NLL is at
// most thr; -1 if the run never reaches it.
long nfe_to_threshold(const std::vector<CnfEpochStats>& history, double thr);

struct TrajectoryPoint {
  int sample_id = 0;
  double t = 0.0;
  double z = 0.0;
};

// Pushes each starting z forward through dz/dt = f(z, t) from t0,
// stopping exactly at each checkpoint (non-decreasing, first >= t0).
// Rows are sample-major: all checkpoints of sample 0, then sample 1, ...
std::vector<TrajectoryPoint> export_trajectories(
    const Mlp& net, const std::vector<double>& z0s, double t0,
    const std::vector<double>& checkpoints, const SolverConfig& solver);

// Mean |z(t_hi) - z(t_lo)| over the pushed-forward samples: the late-path
// displacement that shrinks when training finishes the flow early.
double path_displacement(const Mlp& net, const std::vector<double>& z0s,
                         double t0, double t_lo, double t_hi,
                         const SolverConfig& solver);

std::string cnf_history_csv_header();
std::string cnf_history_csv_row(const CnfEpochStats& st);
std::string trajectory_csv_header();
std::string trajectory_csv_row(const TrajectoryPoint& p);

}  // namespace steerode
