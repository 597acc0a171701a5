#include "steerode/stiff.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>
#include <utility>

#include "steerode/csv.hpp"
#include "steerode/errors.hpp"

namespace steerode {

namespace {

constexpr double kClampY = 1e6;

void require_r(double r) {
  if (!(r > 1.0))
    throw ConfigError("r must exceed 1 (the family's stiffness ratio is r); got r = " +
                      format_double(r));
}

void check_not_singular(double r, double k) {
  if (std::abs(r - k) < 1e-12 * std::max(1.0, std::abs(r)))
    throw ConfigError(
        "r = " + format_double(r) +
        " collides with forcing decay rate " + format_double(k) +
        "; the particular-solution coefficient 2r/(r - k) is singular");
}

}  // namespace

std::string to_string(StiffVariant v) {
  switch (v) {
    case StiffVariant::kBase: return "base";
    case StiffVariant::kMultiExp: return "multi_exp";
    case StiffVariant::kPeriodic: return "periodic";
    case StiffVariant::kSteady7: return "steady7";
  }
  throw ContractError("unknown StiffVariant");
}

StiffVariant stiff_variant_from_string(const std::string& s) {
  if (s == "base") return StiffVariant::kBase;
  if (s == "multi_exp") return StiffVariant::kMultiExp;
  if (s == "periodic") return StiffVariant::kPeriodic;
  if (s == "steady7") return StiffVariant::kSteady7;
  throw ConfigError("unknown variant '" + s +
                    "'; expected base, multi_exp, periodic or steady7");
}

StiffProblem base_problem(double r) {
  require_r(r);
  return StiffProblem{StiffVariant::kBase, r, {1.0}};
}

StiffProblem multi_exp_problem(double r, std::vector<double> decay_rates) {
  require_r(r);
  if (decay_rates.empty())
    throw ConfigError("multi_exp needs at least one decay rate");
  return StiffProblem{StiffVariant::kMultiExp, r, std::move(decay_rates)};
}

StiffProblem periodic_problem(double r) {
  require_r(r);
  return StiffProblem{StiffVariant::kPeriodic, r, {1.0}};
}

StiffProblem steady7_problem(double r) {
  require_r(r);
  return StiffProblem{StiffVariant::kSteady7, r, {1.0}};
}

double stiff_rhs(const StiffProblem& p, double y, double t) {
  const double r = p.r;
  switch (p.variant) {
    case StiffVariant::kBase:
      return -r * y + 3.0 * r - 2.0 * r * std::exp(-t);
    case StiffVariant::kMultiExp: {
      double forcing = 0.0;
      for (const double k : p.decay_rates) forcing += std::exp(-k * t);
      return -r * y + 3.0 * r - 2.0 * r * forcing;
    }
    case StiffVariant::kPeriodic:
      return -r * y + 3.0 * r - 2.0 * r * std::exp(-t) + r * std::sin(t);
    case StiffVariant::kSteady7:
      return -r * y + 7.0 * r - 2.0 * r * std::exp(-t);
  }
  throw ContractError("unknown StiffVariant");
}

double stiff_solution(double r, double t) {
  check_not_singular(r, 1.0);
  return 3.0 - ((r - 3.0) / (r - 1.0)) * std::exp(-r * t) -
         (2.0 * r / (r - 1.0)) * std::exp(-t);
}

double stiff_solution(const StiffProblem& p, double t) {
  const double r = p.r;
  switch (p.variant) {
    case StiffVariant::kBase:
      return stiff_solution(r, t);
    case StiffVariant::kMultiExp: {
      // y = 3 + sum_j A_j e^{-k_j t} + C e^{-r t}, A_j = -2r/(r - k_j),
      // C pinned by y(0) = 0.
      double value = 3.0;
      double c = -3.0;
      for (const double k : p.decay_rates) {
        check_not_singular(r, k);
        const double a = -2.0 * r / (r - k);
        value += a * std::exp(-k * t);
        c -= a;
      }
      return value + c * std::exp(-r * t);
    }
    case StiffVariant::kPeriodic: {
      // Particular response to r sin t: alpha sin t + beta cos t with
      // alpha = r^2/(1 + r^2), beta = -r/(1 + r^2).
      check_not_singular(r, 1.0);
      const double a = -2.0 * r / (r - 1.0);
      const double alpha = r * r / (1.0 + r * r);
      const double beta = -r / (1.0 + r * r);
      const double c = -(3.0 + a + beta);
      return 3.0 + a * std::exp(-t) + alpha * std::sin(t) +
             beta * std::cos(t) + c * std::exp(-r * t);
    }
    case StiffVariant::kSteady7: {
      check_not_singular(r, 1.0);
      const double a = -2.0 * r / (r - 1.0);
      return 7.0 + a * std::exp(-t) - (7.0 + a) * std::exp(-r * t);
    }
  }
  throw ContractError("unknown StiffVariant");
}

void validate(const TrainConfig& cfg) {
  require_r(cfg.problem.r);
  if (cfg.problem.variant == StiffVariant::kMultiExp &&
      cfg.problem.decay_rates.empty())
    throw ConfigError("multi_exp needs at least one decay rate");
  if (!(cfg.dt > 0.0))
    throw ConfigError("dt must be positive; got " + format_double(cfg.dt));
  if (cfg.hidden < 1)
    throw ConfigError("hidden must be at least 1; got " +
                      std::to_string(cfg.hidden));
  if (cfg.epochs < 1)
    throw ConfigError("epochs must be at least 1; got " +
                      std::to_string(cfg.epochs));
  if (cfg.n_train < 1)
    throw ConfigError("n_train must be at least 1; got " +
                      std::to_string(cfg.n_train));
  if (cfg.batch < 0)
    throw ConfigError("batch must be 0 (full batch) or positive; got " +
                      std::to_string(cfg.batch));
  if (!(cfg.train_lo < cfg.train_hi))
    throw ConfigError("train_lo must be below train_hi");
  if (!(cfg.test_lo < cfg.test_hi))
    throw ConfigError("test_lo must be below test_hi");
  if (cfg.test_grid_points < 2)
    throw ConfigError("test_grid_points must be at least 2; got " +
                      std::to_string(cfg.test_grid_points));
  switch (cfg.sampler_kind) {
    case EndTimeKind::kFixed:
      break;
    case EndTimeKind::kUniform:
      if (cfg.b < 0.0)
        throw ConfigError("b must be nonnegative; got " +
                          format_double(cfg.b));
      if (!(cfg.b < cfg.dt))
        throw ConfigError(
            "b must be less than the interval length dt = t1 - t0 so "
            "sampled end times stay past the interval start; got b = " +
            format_double(cfg.b) + " with dt = " + format_double(cfg.dt));
      break;
    case EndTimeKind::kGaussian:
      if (!(cfg.std_dev > 0.0))
        throw ConfigError(
            "std must be positive for the gaussian end-time rule; got " +
            format_double(cfg.std_dev));
      break;
  }
}

std::vector<Example> make_training_set(const TrainConfig& cfg,
                                       RngStream& rng) {
  validate(cfg);
  std::vector<Example> rows(static_cast<std::size_t>(cfg.n_train));
  for (Example& row : rows) {
    row.t0 = rng.uniform(cfg.train_lo, cfg.train_hi);
    row.t1 = row.t0 + cfg.dt;
    row.y0 = stiff_solution(cfg.problem, row.t0);
    row.y1 = stiff_solution(cfg.problem, row.t1);
  }
  return rows;
}

OdeFn mlp_field(const Mlp& net) {
  return [net](const Vector& z, double t) { return mlp_forward(net, z, t); };
}

namespace {

// (z(T) - target)^2 as a direct value and as tape arithmetic.
StateLoss squared_gap(double target) {
  StateLoss loss;
  loss.value = [target](const Vector& v) {
    const double d = v(0) - target;
    return d * d;
  };
  loss.record = [target](Tape& tape, NodeId final_node) {
    const NodeId shift = tape.leaf(Matrix::Constant(1, 1, -target));
    return tape.square(tape.add(final_node, shift));
  };
  return loss;
}

// Wide gaussians would clip below the interval start under the default
// symmetric +-3 std window, and degenerate draws are a hard error by
// design. Floor the window just above t0 instead (one-sided clipping).
EndTimeSampler make_sampler(const TrainConfig& cfg, const Example& ex) {
  switch (cfg.sampler_kind) {
    case EndTimeKind::kFixed:
      return fixed_end_time(ex.t0, ex.t1);
    case EndTimeKind::kUniform:
      return uniform_end_time(ex.t0, ex.t1, cfg.b);
    case EndTimeKind::kGaussian: {
      const double lo =
          std::max(ex.t1 - 3.0 * cfg.std_dev, ex.t0 + 0.01 * cfg.dt);
      const double hi = ex.t1 + 3.0 * cfg.std_dev;
      return gaussian_end_time(ex.t0, ex.t1, cfg.std_dev,
                               std::make_pair(lo, hi));
    }
  }
  throw ContractError("unknown EndTimeKind");
}

double clamp_pred(double v) {
  if (std::isnan(v)) return kClampY;
  return std::clamp(v, -kClampY, kClampY);
}

}  // namespace

EvalResult eval_mse(const OdeFn& field, const StiffProblem& p, double lo,
                    double hi, double dt, int grid_points,
                    const SolverConfig& solver, bool closed_loop) {
  if (grid_points < 2)
    throw ConfigError("test_grid_points must be at least 2; got " +
                      std::to_string(grid_points));
  if (!(hi > lo)) throw ConfigError("test range must satisfy lo < hi");
  if (!(dt > 0.0))
    throw ConfigError("dt must be positive; got " + format_double(dt));

  EvalResult out;
  const int n = grid_points;
  out.grid.resize(static_cast<std::size_t>(n));
  out.y_true.resize(static_cast<std::size_t>(n));
  out.y_pred.resize(static_cast<std::size_t>(n));
  const double step = (hi - lo) / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double t = (i == n - 1) ? hi : lo + i * step;
    out.grid[static_cast<std::size_t>(i)] = t;
    out.y_true[static_cast<std::size_t>(i)] = stiff_solution(p, t);
  }

  SolverConfig sub = solver;
  sub.record_trajectory = false;
  Vector z(1);
  z(0) = stiff_solution(p, lo);
  out.y_pred[0] = z(0);
  const double eps_t = 1e-9 * std::max(1.0, std::abs(lo) + std::abs(hi));

  auto advance = [&](double from, double to) {
    if (out.diverged) return;
    try {
      const SolveResult r =
          sub.method == Method::kRk4
              ? rk4_solve(field, z, from, to, sub.rk4_steps, sub)
              : dopri5_solve(field, z, from, to, sub);
      out.nfe += r.nfe;
      z = r.final_state;
    } catch (const NumericError&) {
      out.diverged = true;
    } catch (const DivergenceError&) {
      out.diverged = true;
    }
    if (!out.diverged &&
        (!std::isfinite(z(0)) || std::abs(z(0)) > kClampY))
      out.diverged = true;
    if (out.diverged) z(0) = clamp_pred(z(0));
  };

  long boundary = 1;
  for (int i = 0; i + 1 < n; ++i) {
    double t_cur = out.grid[static_cast<std::size_t>(i)];
    const double t_next = out.grid[static_cast<std::size_t>(i + 1)];
    if (!closed_loop) {
      // Resets strictly inside the segment, for grids that do not align
      // with the dt boundaries.
      while (lo + static_cast<double>(boundary) * dt < t_next - eps_t) {
        const double tb = lo + static_cast<double>(boundary) * dt;
        if (tb > t_cur + eps_t) {
          advance(t_cur, tb);
          t_cur = tb;
        }
        if (!out.diverged) z(0) = stiff_solution(p, tb);
        ++boundary;
      }
    }
    if (t_next > t_cur + eps_t) advance(t_cur, t_next);
    out.y_pred[static_cast<std::size_t>(i + 1)] = clamp_pred(z(0));
    if (!closed_loop &&
        std::abs(lo + static_cast<double>(boundary) * dt - t_next) <= eps_t) {
      if (!out.diverged) z(0) = stiff_solution(p, t_next);
      ++boundary;
    }
  }

  double se = 0.0;
  for (int i = 0; i < n; ++i) {
    const double d = out.y_pred[static_cast<std::size_t>(i)] -
                     out.y_true[static_cast<std::size_t>(i)];
    se += d * d;
  }
  out.mse = se / n;
  return out;
}

EvalResult eval_mse(const Mlp& model, const StiffProblem& p, double lo,
                    double hi, double dt, int grid_points,
                    const SolverConfig& solver, bool closed_loop) {
  if (model.state_dim() != 1)
    throw ContractError("stiff evaluation needs a one-dimensional model");
  return eval_mse(mlp_field(model), p, lo, hi, dt, grid_points, solver,
                  closed_loop);
}

TrainResult train(const TrainConfig& cfg) {
  validate(cfg);
  const auto t_begin = std::chrono::steady_clock::now();

  RngStream root(cfg.seed);
  RngStream data_rng = root.split(0);
  RngStream init_rng = root.split(1);
  RngStream end_rng = root.split(2);
  RngStream shuffle_rng = root.split(3);

  TrainResult out;
  out.record.cfg = cfg;
  const std::vector<Example> data = make_training_set(cfg, data_rng);
  Mlp net =
      make_mlp({2, static_cast<Index>(cfg.hidden), 1}, init_rng);
  Adam opt(param_count(net), cfg.adam);
  out.best_model = net;

  const int n = static_cast<int>(data.size());
  const int batch = (cfg.batch <= 0 || cfg.batch > n) ? n : cfg.batch;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> t_draws(static_cast<std::size_t>(n));
  std::vector<double> grad_sum(
      static_cast<std::size_t>(param_count(net)));
  long cum_nfe = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // One end time per example, drawn in example order before any batch
    // partitioning, so the draw sequence is independent of batch size.
    for (int i = 0; i < n; ++i) {
      const EndTimeSampler s =
          make_sampler(cfg, data[static_cast<std::size_t>(i)]);
      t_draws[static_cast<std::size_t>(i)] = sample_end_time(s, end_rng);
    }
    if (batch < n) shuffle_indices(order, shuffle_rng);

    double epoch_loss = 0.0;
    long epoch_nfe = 0;
    try {
      for (int start = 0; start < n; start += batch) {
        const int stop = std::min(n, start + batch);
        std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
        double batch_loss = 0.0;
        for (int j = start; j < stop; ++j) {
          const Example& ex = data[static_cast<std::size_t>(order[j])];
          const double t_end = t_draws[static_cast<std::size_t>(order[j])];
          const double target = stiff_solution(cfg.problem, t_end);
          Vector z0(1);
          z0(0) = ex.y0;
          const LossGrad lg = solve_loss_grad(net, z0, ex.t0, t_end,
                                              cfg.solver,
                                              squared_gap(target));
          batch_loss += lg.loss;
          epoch_nfe += lg.solve.nfe;
          for (std::size_t k = 0; k < grad_sum.size(); ++k)
            grad_sum[k] += lg.grad[k];
        }
        const double inv = 1.0 / static_cast<double>(stop - start);
        for (double& g : grad_sum) g *= inv;
        opt.step(net, grad_sum);
        epoch_loss += batch_loss;
      }
    } catch (const std::runtime_error& e) {
      out.record.failed = true;
      out.record.fail_reason = e.what();
      break;
    }

    const EvalResult ev =
        eval_mse(net, cfg.problem, cfg.test_lo, cfg.test_hi, cfg.dt,
                 cfg.test_grid_points, cfg.solver, cfg.closed_loop);
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = epoch_loss / n;
    st.test_mse = ev.mse;
    st.train_nfe = epoch_nfe;
    cum_nfe += epoch_nfe;
    st.cum_train_nfe = cum_nfe;
    out.record.history.push_back(st);
    out.record.final_test_mse = ev.mse;
    if (ev.mse < out.record.min_test_mse) {
      out.record.min_test_mse = ev.mse;
      out.record.min_epoch = epoch;
      out.best_model = net;
    }
  }

  out.record.total_nfe = cum_nfe;
  if (cfg.record_timing) {
    const auto t_end = std::chrono::steady_clock::now();
    out.record.wall_secs =
        std::chrono::duration<double>(t_end - t_begin).count();
  }
  out.model = std::move(net);
  return out;
}

std::vector<TrainConfig> expand_grid(const SweepGrid& grid) {
  const std::vector<StiffVariant> variants =
      grid.variants.empty()
          ? std::vector<StiffVariant>{grid.base.problem.variant}
          : grid.variants;
  const std::vector<double> rs =
      grid.rs.empty() ? std::vector<double>{grid.base.problem.r} : grid.rs;
  const std::vector<int> hiddens =
      grid.hiddens.empty() ? std::vector<int>{grid.base.hidden}
                           : grid.hiddens;
  const std::vector<std::uint64_t> seeds =
      grid.seeds.empty() ? std::vector<std::uint64_t>{grid.base.seed}
                         : grid.seeds;

  struct SamplerCell {
    EndTimeKind kind;
    double b;
    double std_dev;
  };
  std::vector<SamplerCell> samplers;
  for (const double b : grid.bs)
    samplers.push_back(
        {b == 0.0 ? EndTimeKind::kFixed : EndTimeKind::kUniform, b, 0.0});
  for (const double s : grid.stds)
    samplers.push_back(
        {s == 0.0 ? EndTimeKind::kFixed : EndTimeKind::kGaussian, 0.0, s});
  if (samplers.empty())
    samplers.push_back(
        {grid.base.sampler_kind, grid.base.b, grid.base.std_dev});

  std::vector<TrainConfig> cells;
  for (const StiffVariant v : variants)
    for (const double r : rs)
      for (const int hidden : hiddens)
        for (const SamplerCell& s : samplers)
          for (const std::uint64_t seed : seeds) {
            TrainConfig c = grid.base;
            c.problem.variant = v;
            c.problem.r = r;
            c.hidden = hidden;
            c.sampler_kind = s.kind;
            c.b = s.b;
            c.std_dev = s.std_dev;
            c.seed = seed;
            cells.push_back(std::move(c));
          }
  return cells;
}

std::vector<RunRecord> sweep(const std::vector<TrainConfig>& cells,
                             int workers) {
  if (cells.empty()) throw ConfigError("sweep grid is empty");
  if (workers < 1) workers = 1;
  std::vector<RunRecord> records(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&records, &cells, &next] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        records[i] = train(cells[i]).record;
      } catch (const std::exception& e) {
        records[i].cfg = cells[i];
        records[i].failed = true;
        records[i].fail_reason = e.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  return records;
}

std::string run_record_csv_header() {
  return "seed,variant,r,sampler_kind,b,std,hidden,lr,epochs,rtol,atol,"
         "min_test_mse,final_test_mse,min_epoch,total_nfe,wall_secs";
}

std::string run_record_csv_row(const RunRecord& rec) {
  const TrainConfig& c = rec.cfg;
  const std::vector<std::string> cells = {
      std::to_string(c.seed),
      to_string(c.problem.variant),
      format_double(c.problem.r),
      to_string(c.sampler_kind),
      format_double(c.b),
      format_double(c.std_dev),
      std::to_string(c.hidden),
      format_double(c.adam.lr),
      std::to_string(c.epochs),
      format_double(c.solver.rtol),
      format_double(c.solver.atol),
      format_double(rec.min_test_mse),
      format_double(rec.final_test_mse),
      std::to_string(rec.min_epoch),
      std::to_string(rec.total_nfe),
      format_double(rec.wall_secs)};
  return join_csv(cells);
}

}  // namespace steerode
