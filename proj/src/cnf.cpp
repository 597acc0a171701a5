#include "steerode/cnf.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "steerode/csv.hpp"

namespace steerode {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_normal01(double z) { return -0.5 * z * z - 0.5 * kLog2Pi; }

// Simpson weights demand an odd point count.
void require_quadrature_grid(double lo, double hi, int points,
                             const char* where) {
  if (!(hi > lo))
    throw ConfigError(std::string(where) + ": grid needs hi > lo");
  if (points < 3 || points % 2 == 0)
    throw ConfigError(std::string(where) +
                      ": quadrature needs an odd point count >= 3");
}

double simpson_weight(int i, int points, double h) {
  if (i == 0 || i == points - 1) return h / 3.0;
  return (i % 2 == 1) ? 4.0 * h / 3.0 : 2.0 * h / 3.0;
}

SolveResult solve_plain(const OdeFn& f, const Vector& y0, double ta, double tb,
                        const SolverConfig& cfg) {
  return cfg.method == Method::kRk4
             ? rk4_solve(f, y0, ta, tb, cfg.rk4_steps, cfg)
             : dopri5_solve(f, y0, ta, tb, cfg);
}

SolveResult solve_taped(Tape& tape, const TapedOdeFn& f, NodeId y0, double ta,
                        double tb, const SolverConfig& cfg) {
  return cfg.method == Method::kRk4
             ? rk4_solve(tape, f, y0, ta, tb, cfg.rk4_steps, cfg)
             : dopri5_solve(tape, f, y0, ta, tb, cfg);
}

// Per-sample NLL and its parameter gradient through the backward solve.
double taped_nll_grad(const Mlp& net, double x, double t0, double T,
                      const SolverConfig& solver, std::vector<double>& grad,
                      long& nfe) {
  Tape tape;
  const MlpOnTape staged = stage(tape, net);
  const TapedOdeFn f = [&net, &staged](Tape& tp, NodeId y, double t) {
    const NodeId z = tp.row(y, 0);
    const TapedEval fe = mlp_forward_with_dz(tp, net, staged, z, t);
    return tp.vstack2(fe.value, tp.affine(fe.dz, -1.0, 0.0));
  };
  Matrix y0(2, 1);
  y0 << x, 0.0;
  const SolveResult res =
      solve_taped(tape, f, tape.leaf(std::move(y0)), T, t0, solver);
  const NodeId z0 = tape.row(res.final_node, 0);
  const NodeId ell = tape.row(res.final_node, 1);
  const std::array<NodeId, 2> ids = {tape.square(z0), ell};
  const std::array<double, 2> cs = {0.5, 1.0};
  const NodeId nll = tape.affine(tape.lincomb(ids, cs), 1.0, 0.5 * kLog2Pi);
  const Gradients g = tape.backward(nll);
  grad = flatten_param_grads(net, staged, g);
  nfe = res.nfe;
  return tape.value(nll)(0, 0);
}

EndTimeSampler make_sampler(const CnfTrainConfig& cfg) {
  switch (cfg.sampler_kind) {
    case EndTimeKind::kFixed:
      return fixed_end_time(cfg.t0, cfg.t1);
    case EndTimeKind::kUniform: {
      if (cfg.b == 0.0) return fixed_end_time(cfg.t0, cfg.t1);
      const double t1_train = cfg.constrained_shift
                                  ? constrained_t1(cfg.t1, cfg.b, cfg.t0)
                                  : cfg.t1;
      return uniform_end_time(cfg.t0, t1_train, cfg.b);
    }
    case EndTimeKind::kGaussian: {
      if (cfg.std_dev == 0.0) return fixed_end_time(cfg.t0, cfg.t1);
      const double lo =
          std::max(cfg.t1 - 3.0 * cfg.std_dev, cfg.t0 + 0.01 * (cfg.t1 - cfg.t0));
      return gaussian_end_time(cfg.t0, cfg.t1, cfg.std_dev,
                               std::make_pair(lo, cfg.t1 + 3.0 * cfg.std_dev));
    }
  }
  throw ContractError("make_sampler: unknown end-time kind");
}

}  // namespace

void validate(const MogSpec& mog) {
  if (mog.means.empty())
    throw ConfigError("mog: needs at least one component");
  if (mog.stds.size() != mog.means.size() ||
      mog.weights.size() != mog.means.size())
    throw ConfigError("mog: means, stds and weights must have equal length");
  double sum = 0.0;
  for (std::size_t i = 0; i < mog.means.size(); ++i) {
    if (!(mog.stds[i] > 0.0))
      throw ConfigError("mog: stds must be positive");
    if (!(mog.weights[i] > 0.0))
      throw ConfigError("mog: weights must be positive");
    sum += mog.weights[i];
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ConfigError("mog: weights must sum to 1");
}

double mog_pdf(const MogSpec& mog, double x) {
  double p = 0.0;
  for (std::size_t i = 0; i < mog.means.size(); ++i) {
    const double s = mog.stds[i];
    const double u = (x - mog.means[i]) / s;
    p += mog.weights[i] * std::exp(-0.5 * u * u) /
         (s * std::sqrt(2.0 * 3.14159265358979323846));
  }
  return p;
}

double mog_log_pdf(const MogSpec& mog, double x) {
  return std::log(mog_pdf(mog, x));
}

double mog_sample(const MogSpec& mog, RngStream& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  std::size_t pick = mog.means.size() - 1;
  for (std::size_t i = 0; i < mog.means.size(); ++i) {
    acc += mog.weights[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  return mog.means[pick] + mog.stds[pick] * rng.normal();
}

double mog_entropy(const MogSpec& mog, double lo, double hi, int points) {
  validate(mog);
  require_quadrature_grid(lo, hi, points, "mog_entropy");
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + h * i;
    const double p = mog_pdf(mog, x);
    if (p > 0.0) acc -= simpson_weight(i, points, h) * p * std::log(p);
  }
  return acc;
}

OdeFn cnf_rhs(const Mlp& net) {
  if (net.state_dim() != 1)
    throw ContractError("cnf_rhs: net must model a one-dimensional field");
  return [net](const Vector& y, double t) {
    const auto [f, dfdz] = dual_eval(net, y(0), t);
    Vector out(2);
    out << f, -dfdz;
    return out;
  };
}

FlowResult backward_flow(const Mlp& net, double x, double t0, double T,
                         const SolverConfig& solver) {
  Vector y0(2);
  y0 << x, 0.0;
  const SolveResult res = solve_plain(cnf_rhs(net), y0, T, t0, solver);
  FlowResult out;
  out.state.z = res.final_state(0);
  out.state.delta_logp = -res.final_state(1);
  out.logp = log_normal01(out.state.z) + out.state.delta_logp;
  out.nfe = res.nfe;
  return out;
}

double log_likelihood(const Mlp& net, double x, double t0, double T,
                      const SolverConfig& solver) {
  return backward_flow(net, x, t0, T, solver).logp;
}

double quadrature_nll(const Mlp& net, const MogSpec& mog, double t0, double T,
                      const SolverConfig& solver, double lo, double hi,
                      int points, long* nfe) {
  require_quadrature_grid(lo, hi, points, "quadrature_nll");
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + h * i;
    const FlowResult fl = backward_flow(net, x, t0, T, solver);
    if (nfe) *nfe += fl.nfe;
    acc -= simpson_weight(i, points, h) * mog_pdf(mog, x) * fl.logp;
  }
  return acc;
}

double density_integral(const Mlp& net, double t0, double T,
                        const SolverConfig& solver, double lo, double hi,
                        int points) {
  require_quadrature_grid(lo, hi, points, "density_integral");
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double x = lo + h * i;
    acc += simpson_weight(i, points, h) *
           std::exp(log_likelihood(net, x, t0, T, solver));
  }
  return acc;
}

void validate(const CnfTrainConfig& cfg) {
  validate(cfg.mog);
  if (cfg.hidden <= 0) throw ConfigError("cnf: hidden must be positive");
  if (cfg.layers <= 0) throw ConfigError("cnf: layers must be positive");
  if (cfg.n_train <= 0) throw ConfigError("cnf: n_train must be positive");
  if (cfg.epochs <= 0) throw ConfigError("cnf: epochs must be positive");
  if (!(cfg.t1 > cfg.t0))
    throw ConfigError("cnf: t1 must exceed t0");
  require_quadrature_grid(cfg.eval_lo, cfg.eval_hi, cfg.eval_points,
                          "cnf eval");
  if (cfg.sampler_kind == EndTimeKind::kUniform && cfg.b > 0.0) {
    const double t1_train =
        cfg.constrained_shift ? constrained_t1(cfg.t1, cfg.b, cfg.t0) : cfg.t1;
    if (!(cfg.b < t1_train - cfg.t0))
      throw ConfigError(
          "cnf: b must be less than the trained end-time offset t1_train - "
          "t0 so sampled end times stay past the interval start; got b = " +
          format_double(cfg.b) + " with t1_train = " + format_double(t1_train));
  }
  if (cfg.sampler_kind == EndTimeKind::kGaussian && !(cfg.std_dev >= 0.0))
    throw ConfigError("cnf: std must be non-negative");
  validate(make_sampler(cfg));
}

CnfTrainResult train_cnf(const CnfTrainConfig& cfg) {
  validate(cfg);
  const auto t_begin = std::chrono::steady_clock::now();

  RngStream root(cfg.seed);
  RngStream data_rng = root.split(0);
  RngStream init_rng = root.split(1);
  RngStream end_rng = root.split(2);
  RngStream shuffle_rng = root.split(3);

  CnfTrainResult out;
  out.record.cfg = cfg;

  std::vector<double> xs(static_cast<std::size_t>(cfg.n_train));
  for (double& x : xs) x = mog_sample(cfg.mog, data_rng);

  std::vector<Index> widths(static_cast<std::size_t>(cfg.layers) + 2,
                            static_cast<Index>(cfg.hidden));
  widths.front() = 2;
  widths.back() = 1;
  Mlp net = make_mlp(widths, init_rng);
  Adam opt(param_count(net), cfg.adam);
  out.best_model = net;

  const EndTimeSampler sampler = make_sampler(cfg);
  const int n = cfg.n_train;
  const int batch = (cfg.batch <= 0 || cfg.batch > n) ? n : cfg.batch;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad_sum(static_cast<std::size_t>(param_count(net)));
  std::vector<double> grad(grad_sum.size());
  long cum_nfe = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) shuffle_indices(order, shuffle_rng);
    long epoch_nfe = 0;
    double t_end_sum = 0.0;
    int steps = 0;
    try {
      for (int start = 0; start < n; start += batch) {
        const int stop = std::min(n, start + batch);
        // One end-time draw per optimizer step, shared by the batch.
        const double t_end = sample_end_time(sampler, end_rng);
        t_end_sum += t_end;
        ++steps;
        std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
        for (int j = start; j < stop; ++j) {
          const double x = xs[static_cast<std::size_t>(order[j])];
          long nfe = 0;
          taped_nll_grad(net, x, cfg.t0, t_end, cfg.solver, grad, nfe);
          epoch_nfe += nfe;
          for (std::size_t k = 0; k < grad_sum.size(); ++k)
            grad_sum[k] += grad[k];
        }
        const double inv = 1.0 / static_cast<double>(stop - start);
        for (double& g : grad_sum) g *= inv;
        opt.step(net, grad_sum);
      }
    } catch (const std::runtime_error& e) {
      out.record.failed = true;
      out.record.fail_reason = e.what();
      break;
    }

    CnfEpochStats st;
    st.epoch = epoch;
    try {
      st.nll = quadrature_nll(net, cfg.mog, cfg.t0, cfg.t1, cfg.solver,
                              cfg.eval_lo, cfg.eval_hi, cfg.eval_points);
    } catch (const std::runtime_error& e) {
      out.record.failed = true;
      out.record.fail_reason = e.what();
      break;
    }
    if (!std::isfinite(st.nll)) {
      out.record.failed = true;
      out.record.fail_reason = "evaluation NLL is not finite";
      break;
    }
    st.train_nfe = epoch_nfe;
    cum_nfe += epoch_nfe;
    st.cum_train_nfe = cum_nfe;
    st.t_end_mean = t_end_sum / static_cast<double>(steps);
    out.record.history.push_back(st);
    out.record.final_nll = st.nll;
    if (st.nll < out.record.min_nll) {
      out.record.min_nll = st.nll;
      out.record.min_epoch = epoch;
      out.best_model = net;
    }
  }

  out.record.total_nfe = cum_nfe;
  if (cfg.record_timing) {
    const auto t_done = std::chrono::steady_clock::now();
    out.record.wall_secs =
        std::chrono::duration<double>(t_done - t_begin).count();
  }
  out.model = std::move(net);
  return out;
}

long nfe_to_threshold(const std::vector<CnfEpochStats>& history, double thr) {
  for (const CnfEpochStats& st : history)
    if (st.nll <= thr) return st.cum_train_nfe;
  return -1;
}

std::vector<TrajectoryPoint> export_trajectories(
    const Mlp& net, const std::vector<double>& z0s, double t0,
    const std::vector<double>& checkpoints, const SolverConfig& solver) {
  if (checkpoints.empty())
    throw ConfigError("trajectories: needs at least one checkpoint");
  double prev = t0;
  for (double c : checkpoints) {
    if (c < prev)
      throw ConfigError(
          "trajectories: checkpoints must be non-decreasing and start at or "
          "after t0");
    prev = c;
  }
  const OdeFn field = [&net](const Vector& z, double t) {
    return mlp_forward(net, z, t);
  };
  std::vector<TrajectoryPoint> rows;
  rows.reserve(z0s.size() * checkpoints.size());
  for (std::size_t i = 0; i < z0s.size(); ++i) {
    Vector z(1);
    z(0) = z0s[i];
    double t = t0;
    for (double c : checkpoints) {
      if (c > t) {
        z = solve_plain(field, z, t, c, solver).final_state;
        t = c;
      }
      rows.push_back({static_cast<int>(i), c, z(0)});
    }
  }
  return rows;
}

double path_displacement(const Mlp& net, const std::vector<double>& z0s,
                         double t0, double t_lo, double t_hi,
                         const SolverConfig& solver) {
  if (z0s.empty())
    throw ConfigError("path_displacement: needs at least one sample");
  if (!(t_lo < t_hi))
    throw ConfigError("path_displacement: needs t_lo < t_hi");
  const std::vector<TrajectoryPoint> rows =
      export_trajectories(net, z0s, t0, {t_lo, t_hi}, solver);
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < rows.size(); i += 2)
    acc += std::abs(rows[i + 1].z - rows[i].z);
  return acc / static_cast<double>(z0s.size());
}

std::string cnf_history_csv_header() {
  return "epoch,nll,cumulative_nfe,t_end_mean";
}

std::string cnf_history_csv_row(const CnfEpochStats& st) {
  const std::array<std::string, 4> cells = {
      std::to_string(st.epoch), format_double(st.nll),
      std::to_string(st.cum_train_nfe), format_double(st.t_end_mean)};
  return join_csv(cells);
}

std::string trajectory_csv_header() { return "sample_id,t,z"; }

std::string trajectory_csv_row(const TrajectoryPoint& p) {
  const std::array<std::string, 3> cells = {std::to_string(p.sample_id),
                                            format_double(p.t),
                                            format_double(p.z)};
  return join_csv(cells);
}

}  // namespace steerode
