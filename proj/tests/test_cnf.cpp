#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "steerode/cnf.hpp"
#include "steerode/errors.hpp"
#include "steerode/mlp.hpp"

using namespace steerode;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double log_normal01(double z) { return -0.5 * z * z - 0.5 * kLog2Pi; }

double simpson(const std::function<double(double)>& g, double lo, double hi,
               int points) {
  const double h = (hi - lo) / static_cast<double>(points - 1);
  double acc = 0.0;
  for (int i = 0; i < points; ++i) {
    const double w = (i == 0 || i == points - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    acc += w * g(lo + h * static_cast<double>(i));
  }
  return acc * h / 3.0;
}

// One weight layer means no tanh anywhere: f(z, t) = wz*z + wt*t + b exactly.
Mlp affine_net(double wz, double wt, double b) {
  Mlp net;
  net.widths = {2, 1};
  Matrix w(1, 2);
  w << wz, wt;
  net.weights = {w};
  net.biases = {Vector::Constant(1, b)};
  return net;
}

Mlp zeroed_net(const std::vector<Index>& widths) {
  RngStream rng(7);
  Mlp net = make_mlp(widths, rng);
  for (Matrix& w : net.weights) w.setZero();
  for (Vector& v : net.biases) v.setZero();
  return net;
}

SolverConfig tight_solver() {
  SolverConfig s;
  s.rtol = 1e-10;
  s.atol = 1e-12;
  return s;
}

}  // namespace

TEST_CASE("mixture pdf integrates to one and entropy matches closed form") {
  const MogSpec mog;
  const double mass =
      simpson([&](double x) { return mog_pdf(mog, x); }, -9.0, 9.0, 1601);
  CHECK(std::abs(mass - 1.0) <= 1e-10);

  CHECK(mog_log_pdf(mog, 0.3) == doctest::Approx(std::log(mog_pdf(mog, 0.3)))
                                     .epsilon(1e-12));

  MogSpec single;
  single.means = {1.5};
  single.stds = {0.7};
  single.weights = {1.0};
  const double analytic = 0.5 * std::log(2.0 * M_PI * M_E * 0.49);
  CHECK(std::abs(mog_entropy(single, 1.5 - 7.0, 1.5 + 7.0, 2001) - analytic) <=
        1e-9);
}

TEST_CASE("mixture validation rejects inconsistent specs") {
  MogSpec bad;
  bad.means = {0.0, 1.0};
  bad.stds = {0.5};
  bad.weights = {0.5, 0.5};
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = MogSpec{};
  bad.stds[1] = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad = MogSpec{};
  bad.weights = {0.7, 0.7};
  CHECK_THROWS_AS(validate(bad), ConfigError);

  bad.means.clear();
  bad.stds.clear();
  bad.weights.clear();
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("mixture sampling is deterministic and matches its symmetry") {
  const MogSpec mog;
  RngStream rng(11);
  const int n = 20000;
  double sum = 0.0;
  int right = 0;
  for (int i = 0; i < n; ++i) {
    const double x = mog_sample(mog, rng);
    sum += x;
    if (x > 0.0) ++right;
  }
  CHECK(std::abs(sum / n) <= 0.06);
  CHECK(std::abs(right / static_cast<double>(n) - 0.5) <= 0.015);

  RngStream r1(123), r2(123);
  for (int i = 0; i < 32; ++i)
    CHECK(mog_sample(mog, r1) == mog_sample(mog, r2));
}

TEST_CASE("augmented field pairs the value with minus the state derivative") {
  const Mlp lin = affine_net(3.0, 0.0, 0.0);
  const OdeFn rhs = cnf_rhs(lin);
  Vector y(2);
  y << 0.8, -0.1;
  const Vector out = rhs(y, 0.4);
  CHECK(out(0) == doctest::Approx(2.4).epsilon(1e-15));
  CHECK(out(1) == doctest::Approx(-3.0).epsilon(1e-15));

  // A field with no state dependence has exactly zero divergence.
  const Mlp drift = affine_net(0.0, 2.0, -0.5);
  const OdeFn rhs2 = cnf_rhs(drift);
  Vector y2(2);
  y2 << 1.3, 0.0;
  CHECK(rhs2(y2, 0.7)(1) == 0.0);

  // Deep net: forward-mode derivative against a central difference.
  RngStream rng(5);
  const Mlp deep = make_mlp({2, 16, 16, 1}, rng);
  const OdeFn rhs3 = cnf_rhs(deep);
  const double z = 0.5, t = 0.3, h = 1e-5;
  Vector zp(1), zm(1);
  zp << z + h;
  zm << z - h;
  const double fd =
      (mlp_forward(deep, zp, t)(0) - mlp_forward(deep, zm, t)(0)) / (2.0 * h);
  Vector y3(2);
  y3 << z, 0.0;
  const double exact = -rhs3(y3, t)(1);
  CHECK(std::abs(exact - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST_CASE("zero network leaves the base density untouched") {
  const Mlp net = zeroed_net({2, 8, 8, 1});
  const SolverConfig solver = tight_solver();
  for (const double x : {-1.7, 0.4, 2.2}) {
    const FlowResult res = backward_flow(net, x, 0.0, 1.0, solver);
    CHECK(res.nfe > 0);
    CHECK(std::abs(res.state.z - x) <= 1e-14);
    CHECK(std::abs(res.state.delta_logp) <= 1e-14);
    CHECK(std::abs(res.logp - log_normal01(x)) <= 1e-12);
    CHECK(log_likelihood(net, x, 0.0, 1.0, solver) == res.logp);
  }
}

TEST_CASE("linear flow reproduces the analytic change of variables") {
  const SolverConfig solver = tight_solver();
  for (const double a : {0.7, -0.45}) {
    const Mlp net = affine_net(a, 0.0, 0.0);
    const double x = 1.3;
    const double z0 = x * std::exp(-a);
    const double expected = log_normal01(z0) - a;
    CHECK(std::abs(log_likelihood(net, x, 0.0, 1.0, solver) - expected) <=
          1e-6);
  }

  SolverConfig fixed;
  fixed.method = Method::kRk4;
  fixed.rk4_steps = 200;
  const Mlp net = affine_net(0.7, 0.0, 0.0);
  const double expected = log_normal01(1.3 * std::exp(-0.7)) - 0.7;
  CHECK(std::abs(log_likelihood(net, 1.3, 0.0, 1.0, fixed) - expected) <= 1e-6);
}

TEST_CASE("quadrature statistics validate their grids and count evaluations") {
  const MogSpec mog;
  const Mlp net = zeroed_net({2, 4, 1});
  const SolverConfig solver;
  CHECK_THROWS_AS(
      quadrature_nll(net, mog, 0.0, 1.0, solver, -6.0, 6.0, 120), ConfigError);
  CHECK_THROWS_AS(mog_entropy(mog, -6.0, 6.0, 2), ConfigError);
  CHECK_THROWS_AS(density_integral(net, 0.0, 1.0, solver, -6.0, 6.0, 1),
                  ConfigError);

  long nfe = 0;
  const double nll =
      quadrature_nll(net, mog, 0.0, 1.0, solver, -8.0, 8.0, 401, &nfe);
  CHECK(nfe > 0);
  // Zero field: model density is the standard normal, so the statistic is
  // the mixture/normal cross-entropy.
  const double expected = simpson(
      [&](double x) { return -mog_pdf(mog, x) * log_normal01(x); }, -8.0, 8.0,
      1601);
  CHECK(std::abs(nll - expected) <= 1e-8);
}

TEST_CASE("a lightly trained model is a normalized density") {
  CnfTrainConfig cfg;
  cfg.hidden = 16;
  cfg.layers = 2;
  cfg.n_train = 128;
  cfg.batch = 16;
  cfg.epochs = 10;
  cfg.adam.lr = 5e-3;
  cfg.solver.rtol = 1e-4;
  cfg.solver.atol = 1e-6;
  cfg.seed = 3;
  const CnfTrainResult res = train_cnf(cfg);
  REQUIRE(!res.record.failed);
  REQUIRE(static_cast<int>(res.record.history.size()) == cfg.epochs);
  CHECK(res.record.min_nll <= res.record.history.front().nll);

  const double mass =
      density_integral(res.model, cfg.t0, cfg.t1, cfg.solver, -8.0, 8.0, 401);
  CHECK(mass == doctest::Approx(1.0).epsilon(0.01));

  // Monte-Carlo NLL over fresh mixture draws agrees with the quadrature
  // evaluation of the same integral.
  RngStream rng(99);
  const int n = 2000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = mog_sample(cfg.mog, rng);
    acc -= log_likelihood(res.model, x, cfg.t0, cfg.t1, cfg.solver);
  }
  const double mc = acc / n;
  const double quad = quadrature_nll(res.model, cfg.mog, cfg.t0, cfg.t1,
                                     cfg.solver, -8.0, 8.0, 801);
  CHECK(std::abs(mc - quad) <= 0.1);
}

TEST_CASE("training is deterministic for a fixed seed") {
  CnfTrainConfig cfg;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.n_train = 32;
  cfg.batch = 8;
  cfg.epochs = 3;
  cfg.adam.lr = 5e-3;
  cfg.sampler_kind = EndTimeKind::kUniform;
  cfg.b = 0.25;
  cfg.solver.rtol = 1e-4;
  cfg.solver.atol = 1e-6;
  cfg.seed = 17;
  const CnfTrainResult a = train_cnf(cfg);
  const CnfTrainResult b = train_cnf(cfg);
  REQUIRE(a.record.history.size() == b.record.history.size());
  for (std::size_t i = 0; i < a.record.history.size(); ++i) {
    CHECK(a.record.history[i].nll == b.record.history[i].nll);
    CHECK(a.record.history[i].cum_train_nfe == b.record.history[i].cum_train_nfe);
    CHECK(a.record.history[i].t_end_mean == b.record.history[i].t_end_mean);
  }
  const auto pa = param_ptrs(a.model), pb = param_ptrs(b.model);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::memcmp(pa[i], pb[i], sizeof(double)) == 0);

  // The sampled end times stay inside the shifted uniform window.
  for (const CnfEpochStats& st : a.record.history) {
    CHECK(st.t_end_mean >= cfg.t1 - 2.0 * cfg.b);
    CHECK(st.t_end_mean <= cfg.t1);
  }
}

TEST_CASE("a diverging run stops early and keeps its record") {
  CnfTrainConfig cfg;
  cfg.hidden = 8;
  cfg.layers = 1;
  cfg.n_train = 16;
  cfg.batch = 4;
  cfg.epochs = 6;
  cfg.adam.lr = 1e6;
  cfg.solver.rtol = 1e-4;
  cfg.solver.atol = 1e-6;
  cfg.seed = 2;
  const CnfTrainResult res = train_cnf(cfg);
  CHECK(res.record.failed);
  CHECK(!res.record.fail_reason.empty());
  CHECK(static_cast<int>(res.record.history.size()) < cfg.epochs);
}

TEST_CASE("over-wide uniform window is rejected with the shifted bound") {
  CnfTrainConfig cfg;
  cfg.sampler_kind = EndTimeKind::kUniform;
  cfg.b = 0.5;
  try {
    validate(cfg);
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("t1_train") != std::string::npos);
  }
}

TEST_CASE("threshold crossing reports the cumulative evaluation count") {
  std::vector<CnfEpochStats> hist(3);
  hist[0].nll = 2.0;
  hist[0].cum_train_nfe = 100;
  hist[1].nll = 1.5;
  hist[1].cum_train_nfe = 250;
  hist[2].nll = 1.4;
  hist[2].cum_train_nfe = 400;
  CHECK(nfe_to_threshold(hist, 1.55) == 250);
  CHECK(nfe_to_threshold(hist, 2.5) == 100);
  CHECK(nfe_to_threshold(hist, 1.0) == -1);
  CHECK(nfe_to_threshold({}, 1.0) == -1);
}

TEST_CASE("trajectory export pins the grid, ordering and dynamics") {
  const SolverConfig solver = tight_solver();
  const Mlp still = zeroed_net({2, 4, 1});
  const std::vector<double> z0s = {-1.0, 0.5};
  const std::vector<double> grid = {0.0, 0.4, 1.0};
  const auto rows = export_trajectories(still, z0s, 0.0, grid, solver);
  REQUIRE(rows.size() == 6);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t s = i / grid.size();
    CHECK(rows[i].sample_id == static_cast<int>(s));
    CHECK(rows[i].t == grid[i % grid.size()]);
    CHECK(rows[i].z == z0s[s]);
  }

  const Mlp grow = affine_net(1.0, 0.0, 0.0);
  const auto exp_rows = export_trajectories(grow, {1.0}, 0.0, grid, solver);
  for (const auto& r : exp_rows)
    CHECK(std::abs(r.z - std::exp(r.t)) <= 1e-6);

  CHECK_THROWS_AS(export_trajectories(still, z0s, 0.0, {0.5, 0.2}, solver),
                  ConfigError);
  CHECK_THROWS_AS(export_trajectories(still, z0s, 0.5, {0.0}, solver),
                  ConfigError);
}

TEST_CASE("late-path displacement separates frozen from moving fields") {
  const SolverConfig solver = tight_solver();
  const Mlp still = zeroed_net({2, 4, 1});
  CHECK(path_displacement(still, {-1.0, 0.3, 2.0}, 0.0, 0.625, 1.0, solver) ==
        0.0);

  const Mlp grow = affine_net(1.0, 0.0, 0.0);
  const double expected = std::exp(1.0) - std::exp(0.625);
  CHECK(std::abs(path_displacement(grow, {1.0, -1.0}, 0.0, 0.625, 1.0,
                                   solver) -
                 expected) <= 1e-6);
}

TEST_CASE("history and trajectory csv layouts are pinned") {
  CHECK(cnf_history_csv_header() == "epoch,nll,cumulative_nfe,t_end_mean");
  CHECK(trajectory_csv_header() == "sample_id,t,z");

  CnfEpochStats st;
  st.epoch = 3;
  st.nll = 1.5;
  st.train_nfe = 1200;
  st.cum_train_nfe = 3600;
  st.t_end_mean = 0.875;
  CHECK(cnf_history_csv_row(st) == "3,1.5,3600,0.875");

  TrajectoryPoint p;
  p.sample_id = 2;
  p.t = 0.25;
  p.z = -1.5;
  CHECK(trajectory_csv_row(p) == "2,0.25,-1.5");
}
