#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "steerode/cnf.hpp"
#include "steerode/config.hpp"
#include "steerode/csv.hpp"
#include "steerode/errors.hpp"
#include "steerode/gradcheck.hpp"
#include "steerode/ode.hpp"
#include "steerode/picard.hpp"
#include "steerode/stiff.hpp"
#include "steerode/svg.hpp"
#include "steerode/version.hpp"

namespace steerode {
namespace {

namespace fs = std::filesystem;

constexpr const char* kUsage =
    "usage: steerode <stiff|sweep|picard|cnf1d|gradcheck> [--config FILE] "
    "[--KEY VALUE ...]\n"
    "  Flags override config-file values. Output directory: --outdir, or\n"
    "  the STEERODE_OUTDIR environment variable, or ./out.\n";

KvStore flags_to_store(int argc, char** argv) {
  KvStore out;
  for (int i = 2; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg.rfind("--", 0) != 0)
      throw ConfigError("expected --key value, got '" + arg + "'");
    arg.erase(0, 2);
    const std::size_t eq = arg.find('=');
    if (eq != std::string::npos) {
      out.set(arg.substr(0, eq), arg.substr(eq + 1));
    } else {
      if (i + 1 >= argc)
        throw ConfigError("flag --" + arg + " is missing a value");
      out.set(arg, argv[++i]);
    }
  }
  return out;
}

// Config file first, then flags on top, so flags win.
ConfigReader make_reader(int argc, char** argv) {
  const KvStore flags = flags_to_store(argc, argv);
  KvStore merged;
  if (const std::string* path = flags.find("config"))
    merged = load_kv_file(*path);
  for (const KvEntry& e : flags.entries()) merged.set(e.key, e.value);
  return ConfigReader(std::move(merged));
}

struct Common {
  fs::path outdir;
  std::uint64_t seed = kDefaultSeed;
};

Common read_common(ConfigReader& r) {
  Common c;
  const char* env = std::getenv("STEERODE_OUTDIR");
  r.get_string("config", "");
  c.outdir = r.get_string("outdir", env ? env : "out");
  c.seed = r.get_u64("seed", kDefaultSeed);
  return c;
}

// File-location plumbing stays out of the stamped config so the same
// experiment writes byte-identical files into any directory.
bool plumbing_key(const std::string& key) {
  return key == "outdir" || key == "config";
}

void stamp(CsvBuilder& csv, const std::string& subcommand,
           const ConfigReader& r) {
  csv.meta("artifact_version", kVersion);
  csv.meta("subcommand", subcommand);
  for (const KvEntry& e : r.effective())
    if (!plumbing_key(e.key)) csv.meta(e.key, e.value);
}

std::vector<std::pair<std::string, std::string>> meta_pairs(
    const std::string& subcommand, const ConfigReader& r) {
  std::vector<std::pair<std::string, std::string>> out;
  out.emplace_back("artifact_version", kVersion);
  out.emplace_back("subcommand", subcommand);
  for (const KvEntry& e : r.effective())
    if (!plumbing_key(e.key)) out.emplace_back(e.key, e.value);
  return out;
}

std::uint64_t effective_hash(const std::string& subcommand,
                             const ConfigReader& r) {
  std::string all = subcommand;
  for (const KvEntry& e : r.effective()) {
    if (plumbing_key(e.key)) continue;
    all += '\n';
    all += e.key;
    all += '=';
    all += e.value;
  }
  return fnv1a64(all);
}

Method method_from_string(const std::string& s) {
  if (s == "dopri5") return Method::kDopri5;
  if (s == "rk4") return Method::kRk4;
  throw ConfigError("key 'method' expects dopri5 or rk4, got '" + s + "'");
}

SolverConfig read_solver(ConfigReader& r) {
  SolverConfig s;
  s.method = method_from_string(r.get_string("method", "dopri5"));
  s.rtol = r.get_double("rtol", s.rtol);
  s.atol = r.get_double("atol", s.atol);
  s.rk4_steps = r.get_int("rk4_steps", s.rk4_steps);
  s.max_steps = r.get_int("max_steps", static_cast<int>(s.max_steps));
  return s;
}

AdamConfig read_adam(ConfigReader& r, double default_lr) {
  AdamConfig a;
  a.lr = r.get_double("lr", default_lr);
  a.lr_decay = r.get_double("lr_decay", a.lr_decay);
  a.beta1 = r.get_double("beta1", a.beta1);
  a.beta2 = r.get_double("beta2", a.beta2);
  return a;
}

// b > 0 selects the uniform window, std > 0 the gaussian one.
EndTimeKind read_sampler(ConfigReader& r, double* b, double* std_dev) {
  *b = r.get_double("b", 0.0);
  *std_dev = r.get_double("std", 0.0);
  if (*b > 0.0 && *std_dev > 0.0)
    throw ConfigError("set either key 'b' or key 'std', not both");
  if (*b > 0.0) return EndTimeKind::kUniform;
  if (*std_dev > 0.0) return EndTimeKind::kGaussian;
  return EndTimeKind::kFixed;
}

StiffProblem read_problem(ConfigReader& r) {
  const std::string variant = r.get_string("variant", "base");
  const double rr = r.get_double("r", 1000.0);
  const std::vector<double> rates = r.get_double_list("decay_rates", {1.0});
  const StiffVariant v = stiff_variant_from_string(variant);
  switch (v) {
    case StiffVariant::kMultiExp: return multi_exp_problem(rr, rates);
    case StiffVariant::kPeriodic: return periodic_problem(rr);
    case StiffVariant::kSteady7: return steady7_problem(rr);
    default: return base_problem(rr);
  }
}

TrainConfig read_stiff_train(ConfigReader& r, const Common& common) {
  TrainConfig cfg;
  cfg.problem = read_problem(r);
  cfg.hidden = r.get_int("hidden", cfg.hidden);
  cfg.dt = r.get_double("dt", cfg.dt);
  cfg.train_lo = r.get_double("train_lo", cfg.train_lo);
  cfg.train_hi = r.get_double("train_hi", cfg.train_hi);
  cfg.test_lo = r.get_double("test_lo", cfg.test_lo);
  cfg.test_hi = r.get_double("test_hi", cfg.test_hi);
  cfg.n_train = r.get_int("n_train", cfg.n_train);
  cfg.adam = read_adam(r, cfg.adam.lr);
  cfg.epochs = r.get_int("epochs", cfg.epochs);
  cfg.batch = r.get_int("batch", cfg.batch);
  cfg.sampler_kind = read_sampler(r, &cfg.b, &cfg.std_dev);
  cfg.solver = read_solver(r);
  cfg.test_grid_points = r.get_int("test_grid_points", cfg.test_grid_points);
  cfg.closed_loop = r.get_bool("closed_loop", cfg.closed_loop);
  cfg.record_timing = r.get_bool("timing", false);
  cfg.seed = common.seed;
  return cfg;
}

std::string stiff_history_header() {
  return "epoch,train_loss,test_mse,train_nfe,cumulative_nfe";
}

std::string stiff_history_row(const EpochStats& st) {
  const std::array<std::string, 5> cells = {
      std::to_string(st.epoch), format_double(st.train_loss),
      format_double(st.test_mse), std::to_string(st.train_nfe),
      std::to_string(st.cum_train_nfe)};
  return join_csv(cells);
}

int cmd_stiff(ConfigReader& r, const Common& common) {
  const TrainConfig cfg = read_stiff_train(r, common);
  r.finish();
  validate(cfg);
  const TrainResult res = train(cfg);

  CsvBuilder run_csv;
  stamp(run_csv, "stiff", r);
  run_csv.raw_line(run_record_csv_header());
  run_csv.raw_line(run_record_csv_row(res.record));
  write_text_file(common.outdir / "stiff_run.csv", run_csv.text());

  CsvBuilder hist_csv;
  stamp(hist_csv, "stiff", r);
  hist_csv.raw_line(stiff_history_header());
  for (const EpochStats& st : res.record.history)
    hist_csv.raw_line(stiff_history_row(st));
  write_text_file(common.outdir / "stiff_history.csv", hist_csv.text());

  const EvalResult eval =
      eval_mse(res.best_model, cfg.problem, cfg.test_lo, cfg.test_hi, cfg.dt,
               cfg.test_grid_points, cfg.solver, cfg.closed_loop);
  CsvBuilder traj_csv;
  stamp(traj_csv, "stiff", r);
  traj_csv.raw_line("t,y_true,y_pred");
  for (std::size_t i = 0; i < eval.grid.size(); ++i) {
    const std::array<std::string, 3> cells = {format_double(eval.grid[i]),
                                              format_double(eval.y_true[i]),
                                              format_double(eval.y_pred[i])};
    traj_csv.raw_line(join_csv(cells));
  }
  write_text_file(common.outdir / "stiff_trajectory.csv", traj_csv.text());

  SvgSeries truth{"closed form", {}};
  SvgSeries pred{"model", {}};
  for (std::size_t i = 0; i < eval.grid.size(); ++i) {
    truth.points.emplace_back(eval.grid[i], eval.y_true[i]);
    pred.points.emplace_back(eval.grid[i], eval.y_pred[i]);
  }
  SvgOptions opt;
  opt.title = "stiff benchmark fit";
  opt.x_label = "t";
  opt.y_label = "y";
  opt.meta = meta_pairs("stiff", r);
  opt.config_hash = effective_hash("stiff", r);
  emit_svg({truth, pred}, opt, common.outdir / "stiff_fit.svg");

  if (res.record.failed) {
    std::cerr << "run failed: " << res.record.fail_reason << "\n";
    return 2;
  }
  std::cout << "min_test_mse = " << format_double(res.record.min_test_mse)
            << " at epoch " << res.record.min_epoch
            << ", final_test_mse = " << format_double(res.record.final_test_mse)
            << ", total_nfe = " << res.record.total_nfe << "\n";
  return 0;
}

int cmd_sweep(ConfigReader& r, const Common& common) {
  SweepGrid grid;
  grid.base = read_stiff_train(r, common);
  // Variant list as strings, converted here so read order stays simple.
  {
    const std::string joined = r.get_string("variants", "");
    if (!joined.empty()) {
      std::size_t start = 0;
      while (start <= joined.size()) {
        const std::size_t comma = joined.find(',', start);
        const std::size_t end =
            comma == std::string::npos ? joined.size() : comma;
        std::string item = joined.substr(start, end - start);
        while (!item.empty() && item.front() == ' ') item.erase(0, 1);
        while (!item.empty() && item.back() == ' ') item.pop_back();
        if (!item.empty())
          grid.variants.push_back(stiff_variant_from_string(item));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
  }
  grid.rs = r.get_double_list("rs", {});
  grid.hiddens = r.get_int_list("hiddens", {});
  grid.bs = r.get_double_list("bs", {});
  grid.stds = r.get_double_list("stds", {});
  grid.seeds = r.get_u64_list("seeds", {1, 2, 3, 4, 5});
  const int workers = r.get_int("workers", 1);
  r.finish();

  const std::vector<TrainConfig> cells = expand_grid(grid);
  const std::vector<RunRecord> records = sweep(cells, workers);

  CsvBuilder csv;
  stamp(csv, "sweep", r);
  csv.raw_line(run_record_csv_header());
  for (const RunRecord& rec : records) csv.raw_line(run_record_csv_row(rec));
  write_text_file(common.outdir / "sweep.csv", csv.text());

  // Median min test MSE against the swept sampler parameter.
  const auto median_curve = [&](bool use_b) {
    SvgSeries series{use_b ? "median min MSE vs b" : "median min MSE vs std",
                     {}};
    const std::vector<double>& axis = use_b ? grid.bs : grid.stds;
    for (const double cell : axis) {
      std::vector<double> vals;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const bool match = use_b ? (cells[i].sampler_kind ==
                                        EndTimeKind::kUniform &&
                                    cells[i].b == cell)
                                 : (cells[i].sampler_kind ==
                                        EndTimeKind::kGaussian &&
                                    cells[i].std_dev == cell);
        if (match && !records[i].failed)
          vals.push_back(records[i].min_test_mse);
      }
      if (vals.empty()) continue;
      std::sort(vals.begin(), vals.end());
      const std::size_t m = vals.size() / 2;
      const double median = vals.size() % 2 ? vals[m]
                                            : 0.5 * (vals[m - 1] + vals[m]);
      series.points.emplace_back(cell, median);
    }
    return series;
  };
  SvgOptions opt;
  opt.y_label = "median min test MSE";
  opt.log_y = true;
  opt.meta = meta_pairs("sweep", r);
  opt.config_hash = effective_hash("sweep", r);
  if (grid.bs.size() >= 2) {
    opt.title = "uniform window sweep";
    opt.x_label = "b";
    emit_svg({median_curve(true)}, opt, common.outdir / "sweep_b.svg");
  }
  if (grid.stds.size() >= 2) {
    opt.title = "gaussian spread sweep";
    opt.x_label = "std";
    emit_svg({median_curve(false)}, opt, common.outdir / "sweep_std.svg");
  }
  std::cout << "sweep cells = " << records.size() << "\n";
  return 0;
}

int cmd_picard(ConfigReader& r, const Common& common) {
  ContractionLabConfig lab;
  const double a = r.get_double("a", 0.4);
  const double b = r.get_double("b", 0.2);
  const double z0v = r.get_double("z0", 0.0);
  const double t0 = r.get_double("t0", 0.0);
  const int trials = r.get_int("trials", 1000);
  const long n = r.get_int("n", 1000000);
  lab.a = a;
  lab.c = r.get_double("c", lab.c);
  lab.poly_degree = r.get_int("poly_degree", lab.poly_degree);
  lab.probe_points = r.get_int("probe_points", lab.probe_points);
  lab.grid_points = r.get_int("grid_points", 0);
  r.finish();

  const FieldFn decay = [](double, const Vector& x) -> Vector { return -x; };
  Vector z0(1);
  z0 << z0v;
  RngStream root(common.seed);
  RngStream contraction_rng = root.split(0);
  RngStream triangular_rng = root.split(1);

  const ContractionReport report =
      empirical_contraction(decay, z0, t0, b, trials, contraction_rng, lab);

  CsvBuilder ccsv;
  stamp(ccsv, "picard", r);
  ccsv.meta("mean_ratio", format_double(report.mean_ratio));
  ccsv.meta("std_ratio", format_double(report.std_ratio));
  ccsv.meta("lemma_bound", format_double(report.lemma_bound));
  ccsv.meta("est_lipschitz", format_double(report.est_lipschitz));
  ccsv.meta("est_bound", format_double(report.est_bound));
  ccsv.meta("completed_trials", std::to_string(report.trials));
  ccsv.meta("skipped_trials", std::to_string(report.skipped));
  ccsv.raw_line("trial,delta_before,delta_after,ratio");
  for (std::size_t i = 0; i < report.ratios.size(); ++i) {
    const std::array<std::string, 4> cells = {
        std::to_string(i), format_double(report.delta_before[i]),
        format_double(report.delta_after[i]), format_double(report.ratios[i])};
    ccsv.raw_line(join_csv(cells));
  }
  write_text_file(common.outdir / "contraction.csv", ccsv.text());

  const TriangularStats tri = triangular_diff_stats(b, n, triangular_rng);
  CsvBuilder tcsv;
  stamp(tcsv, "picard", r);
  tcsv.meta("sample_mean", format_double(tri.mean));
  tcsv.meta("sample_std", format_double(tri.stddev));
  tcsv.meta("samples", std::to_string(tri.n));
  tcsv.raw_line("bin_lo,bin_hi,density");
  for (std::size_t i = 0; i + 1 < tri.bin_edges.size(); ++i) {
    const std::array<std::string, 3> cells = {format_double(tri.bin_edges[i]),
                                              format_double(tri.bin_edges[i + 1]),
                                              format_double(tri.density[i])};
    tcsv.raw_line(join_csv(cells));
  }
  write_text_file(common.outdir / "triangular.csv", tcsv.text());

  SvgSeries empirical{"sampled density", {}};
  for (std::size_t i = 0; i + 1 < tri.bin_edges.size(); ++i) {
    const double mid = 0.5 * (tri.bin_edges[i] + tri.bin_edges[i + 1]);
    empirical.points.emplace_back(mid, tri.density[i]);
  }
  SvgSeries exact{"(b-|y|)/b^2", {}};
  for (int i = 0; i <= 200; ++i) {
    const double y = -b + 2.0 * b * i / 200.0;
    exact.points.emplace_back(y, (b - std::abs(y)) / (b * b));
  }
  SvgOptions opt;
  opt.title = "difference of |perturbations|";
  opt.x_label = "y";
  opt.y_label = "density";
  opt.meta = meta_pairs("picard", r);
  opt.config_hash = effective_hash("picard", r);
  emit_svg({empirical, exact}, opt, common.outdir / "triangular_density.svg");

  std::cout << "mean contraction ratio = " << format_double(report.mean_ratio)
            << " (bound " << format_double(report.lemma_bound)
            << "), |triangular mean| = " << format_double(std::abs(tri.mean))
            << "\n";
  return 0;
}

CnfTrainConfig read_cnf_train(ConfigReader& r, const Common& common) {
  CnfTrainConfig cfg;
  cfg.mog.means = r.get_double_list("mog_means", cfg.mog.means);
  cfg.mog.stds = r.get_double_list("mog_stds", cfg.mog.stds);
  cfg.mog.weights = r.get_double_list("mog_weights", cfg.mog.weights);
  cfg.hidden = r.get_int("hidden", cfg.hidden);
  cfg.layers = r.get_int("layers", cfg.layers);
  cfg.n_train = r.get_int("n_train", cfg.n_train);
  cfg.batch = r.get_int("batch", cfg.batch);
  cfg.epochs = r.get_int("epochs", cfg.epochs);
  cfg.adam = read_adam(r, cfg.adam.lr);
  cfg.t0 = r.get_double("t0", cfg.t0);
  cfg.t1 = r.get_double("t1", cfg.t1);
  cfg.sampler_kind = read_sampler(r, &cfg.b, &cfg.std_dev);
  cfg.constrained_shift = r.get_bool("shift", cfg.constrained_shift);
  cfg.solver = read_solver(r);
  cfg.eval_lo = r.get_double("eval_lo", cfg.eval_lo);
  cfg.eval_hi = r.get_double("eval_hi", cfg.eval_hi);
  cfg.eval_points = r.get_int("eval_points", cfg.eval_points);
  cfg.record_timing = r.get_bool("timing", false);
  cfg.seed = common.seed;
  return cfg;
}

int cmd_cnf1d(ConfigReader& r, const Common& common) {
  const CnfTrainConfig cfg = read_cnf_train(r, common);
  const int traj_samples = r.get_int("traj_samples", 16);
  std::vector<double> default_times;
  for (int i = 0; i <= 8; ++i)
    default_times.push_back(cfg.t0 + (cfg.t1 - cfg.t0) * i / 8.0);
  const std::vector<double> traj_times =
      r.get_double_list("traj_times", default_times);
  r.finish();
  validate(cfg);

  const CnfTrainResult res = train_cnf(cfg);

  CsvBuilder hist;
  stamp(hist, "cnf1d", r);
  hist.meta("min_nll", format_double(res.record.min_nll));
  hist.meta("final_nll", format_double(res.record.final_nll));
  hist.meta("min_epoch", std::to_string(res.record.min_epoch));
  hist.meta("total_nfe", std::to_string(res.record.total_nfe));
  hist.raw_line(cnf_history_csv_header());
  for (const CnfEpochStats& st : res.record.history)
    hist.raw_line(cnf_history_csv_row(st));
  write_text_file(common.outdir / "cnf_history.csv", hist.text());

  if (res.record.failed) {
    std::cerr << "run failed: " << res.record.fail_reason << "\n";
    return 2;
  }

  RngStream traj_rng = RngStream(cfg.seed).split(4);
  std::vector<double> z0s(static_cast<std::size_t>(traj_samples));
  for (double& z : z0s) z = traj_rng.normal();
  const auto rows =
      export_trajectories(res.best_model, z0s, cfg.t0, traj_times, cfg.solver);
  CsvBuilder traj;
  stamp(traj, "cnf1d", r);
  traj.raw_line(trajectory_csv_header());
  for (const TrajectoryPoint& p : rows) traj.raw_line(trajectory_csv_row(p));
  write_text_file(common.outdir / "cnf_trajectories.csv", traj.text());

  SvgSeries model{"model density", {}};
  SvgSeries target{"target mixture", {}};
  const int pts = 201;
  for (int i = 0; i < pts; ++i) {
    const double x =
        cfg.eval_lo + (cfg.eval_hi - cfg.eval_lo) * i / (pts - 1.0);
    model.points.emplace_back(
        x, std::exp(log_likelihood(res.best_model, x, cfg.t0, cfg.t1,
                                   cfg.solver)));
    target.points.emplace_back(x, mog_pdf(cfg.mog, x));
  }
  SvgOptions opt;
  opt.title = "learned density";
  opt.x_label = "x";
  opt.y_label = "p(x)";
  opt.meta = meta_pairs("cnf1d", r);
  opt.config_hash = effective_hash("cnf1d", r);
  emit_svg({model, target}, opt, common.outdir / "cnf_density.svg");

  std::cout << "min_nll = " << format_double(res.record.min_nll)
            << " at epoch " << res.record.min_epoch
            << ", total_nfe = " << res.record.total_nfe << "\n";
  return 0;
}

int cmd_gradcheck(ConfigReader& r, const Common& common) {
  const double eps = r.get_double("eps", 1e-5);
  r.finish();

  RngStream root(common.seed);
  RngStream rk4_rng = root.split(0);
  RngStream adaptive_rng = root.split(1);

  struct Case {
    std::string name;
    double err = 0.0;
    double threshold = 0.0;
  };
  std::vector<Case> cases;

  {
    const Mlp net = make_mlp({3, 16, 2}, rk4_rng);
    Vector z0(2), target(2);
    z0 << 0.5, -0.25;
    target << 0.1, 0.4;
    SolverConfig scfg;
    scfg.method = Method::kRk4;
    scfg.rk4_steps = 4;
    StateLoss loss;
    loss.value = [target](const Vector& y) {
      return (y - target).squaredNorm();
    };
    loss.record = [target](Tape& tape, NodeId y) {
      const NodeId tn = tape.leaf(target);
      const NodeId ids[] = {y, tn};
      const double cs[] = {1.0, -1.0};
      return tape.sum(tape.square(tape.lincomb(ids, cs)));
    };
    const LossGrad res = solve_loss_grad(net, z0, 0.0, 1.0, scfg, loss);
    Mlp probe = net;
    std::vector<double*> ptrs = param_ptrs(probe);
    double worst = 0.0;
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      const double saved = *ptrs[i];
      const auto value = [&]() {
        const OdeFn f = [&probe](const Vector& y, double t) {
          return mlp_forward(probe, y, t);
        };
        return loss.value(
            rk4_solve(f, z0, 0.0, 1.0, scfg.rk4_steps).final_state);
      };
      *ptrs[i] = saved + eps;
      const double hi = value();
      *ptrs[i] = saved - eps;
      const double lo = value();
      *ptrs[i] = saved;
      const double fd = (hi - lo) / (2 * eps);
      worst = std::max(worst,
                       std::abs(res.grad[i] - fd) / (std::abs(fd) + 1e-12));
    }
    cases.push_back({"rk4_4step", worst, 1e-4});
  }

  {
    const Mlp net = make_mlp({2, 12, 1}, adaptive_rng);
    Vector z0(1), target(1);
    z0 << 0.8;
    target << -0.3;
    StateLoss loss;
    loss.value = [target](const Vector& y) {
      return (y - target).squaredNorm();
    };
    loss.record = [target](Tape& tape, NodeId y) {
      const NodeId tn = tape.leaf(target);
      const NodeId ids[] = {y, tn};
      const double cs[] = {1.0, -1.0};
      return tape.sum(tape.square(tape.lincomb(ids, cs)));
    };
    const LossGrad res = solve_loss_grad(net, z0, 0.0, 1.0, {}, loss);
    const std::vector<double> schedule = res.solve.accepted_h();
    Mlp probe = net;
    std::vector<double*> ptrs = param_ptrs(probe);
    double worst = 0.0;
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
      const double saved = *ptrs[i];
      const auto value = [&]() {
        const OdeFn f = [&probe](const Vector& y, double t) {
          return mlp_forward(probe, y, t);
        };
        return loss.value(dopri5_replay(f, z0, 0.0, schedule));
      };
      *ptrs[i] = saved + eps;
      const double hi = value();
      *ptrs[i] = saved - eps;
      const double lo = value();
      *ptrs[i] = saved;
      const double fd = (hi - lo) / (2 * eps);
      worst = std::max(worst,
                       std::abs(res.grad[i] - fd) / (std::abs(fd) + 1e-12));
    }
    cases.push_back({"dopri5_frozen_schedule", worst, 1e-3});
  }

  CsvBuilder csv;
  stamp(csv, "gradcheck", r);
  csv.raw_line("case,max_rel_err,threshold,pass");
  bool all_pass = true;
  for (const Case& c : cases) {
    const bool pass = c.err <= c.threshold;
    all_pass = all_pass && pass;
    const std::array<std::string, 4> cells = {c.name, format_double(c.err),
                                              format_double(c.threshold),
                                              pass ? "1" : "0"};
    csv.raw_line(join_csv(cells));
    std::cout << c.name << ": max rel err " << format_double(c.err)
              << (pass ? " (pass)" : " (FAIL)") << "\n";
  }
  write_text_file(common.outdir / "gradcheck.csv", csv.text());
  if (!all_pass) {
    std::cerr << "gradient check failed\n";
    return 2;
  }
  return 0;
}

int run_main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << kUsage;
    return 1;
  }
  const std::string sub = argv[1];
  ConfigReader reader = make_reader(argc, argv);
  Common common = read_common(reader);

  if (sub == "stiff") return cmd_stiff(reader, common);
  if (sub == "sweep") return cmd_sweep(reader, common);
  if (sub == "picard") return cmd_picard(reader, common);
  if (sub == "cnf1d") return cmd_cnf1d(reader, common);
  if (sub == "gradcheck") return cmd_gradcheck(reader, common);
  std::cerr << kUsage;
  throw ConfigError("unknown subcommand '" + sub + "'");
}

}  // namespace
}  // namespace steerode

int main(int argc, char** argv) {
  try {
    return steerode::run_main(argc, argv);
  } catch (const steerode::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}
