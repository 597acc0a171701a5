#include "steerode/ode.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace steerode {

namespace {

constexpr double kUround = 2.3e-16;

// Dormand-Prince 4(5) tableau.
constexpr double c2 = 0.2, c3 = 0.3, c4 = 0.8, c5 = 8.0 / 9.0;
constexpr double a21 = 0.2;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                 a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                 a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

// Controller constants: safety 0.9, growth clamp [0.2, 10], PI beta 0.04.
constexpr double kSafe = 0.9;
constexpr double kFacl = 0.2;
constexpr double kFacr = 10.0;
constexpr double kBeta = 0.04;
constexpr double kExpo1 = 0.2 - kBeta * 0.75;

struct ValueBackend {
  using State = Vector;
  const OdeFn* f;

  State eval(const State& y, double t) const { return (*f)(y, t); }
  const Vector& view(const State& y) const { return y; }
  State combine(const State& base, std::span<const State* const> ks,
                std::span<const double> cs) const {
    State out = base;
    for (std::size_t i = 0; i < ks.size(); ++i) out.noalias() += cs[i] * (*ks[i]);
    return out;
  }
  int mark() const { return 0; }
  void rollback(int) const {}
  void note_final(SolveResult&, const State&) const {}
};

struct TapeBackend {
  using State = NodeId;
  Tape* tape;
  const TapedOdeFn* f;

  State eval(State y, double t) const { return (*f)(*tape, y, t); }
  const Matrix& view(State y) const { return tape->value(y); }
  State combine(State base, std::span<const State* const> ks,
                std::span<const double> cs) const {
    std::array<NodeId, 8> ids;
    std::array<double, 8> coeffs;
    ids[0] = base;
    coeffs[0] = 1.0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      ids[i + 1] = *ks[i];
      coeffs[i + 1] = cs[i];
    }
    return tape->lincomb(std::span<const NodeId>(ids.data(), ks.size() + 1),
                         std::span<const double>(coeffs.data(), ks.size() + 1));
  }
  Tape::Mark mark() const { return tape->mark(); }
  void rollback(const Tape::Mark& m) const { tape->rollback(m); }
  void note_final(SolveResult& out, const State& y) const {
    out.final_node = y;
  }
};

template <class View>
void require_finite(const View& v, double t, const char* where) {
  if (!v.allFinite())
    throw NumericError(std::string(where) + ": non-finite state at t = " +
                       std::to_string(t));
}

template <class ViewY, class ViewK>
double scaled_max_err(const ViewY& y, const ViewY& ynew, double h, double atol,
                      double rtol, const ViewK& k1, const ViewK& k3,
                      const ViewK& k4, const ViewK& k5, const ViewK& k6,
                      const ViewK& k7) {
  double worst = 0.0;
  for (Index i = 0; i < y.rows(); ++i) {
    const double e = h * (e1 * k1(i, 0) + e3 * k3(i, 0) + e4 * k4(i, 0) +
                          e5 * k5(i, 0) + e6 * k6(i, 0) + e7 * k7(i, 0));
    const double sk =
        atol + rtol * std::max(std::abs(y(i, 0)), std::abs(ynew(i, 0)));
    worst = std::max(worst, std::abs(e) / sk);
  }
  return worst;
}

// Cheap initial step guess from y0 and the already-available k1: no extra
// field evaluations, so the nfe bookkeeping stays exact. A vanishing
// field proposes the whole span, which then succeeds in one step.
template <class View>
double initial_step(const View& y0, const View& k1, double span, double atol,
                    double rtol) {
  double d0 = 0.0, d1 = 0.0;
  for (Index i = 0; i < y0.rows(); ++i) {
    const double sk = atol + rtol * std::abs(y0(i, 0));
    d0 += (y0(i, 0) / sk) * (y0(i, 0) / sk);
    d1 += (k1(i, 0) / sk) * (k1(i, 0) / sk);
  }
  const double n = static_cast<double>(y0.rows());
  d0 = std::sqrt(d0 / n);
  d1 = std::sqrt(d1 / n);
  if (d1 <= 1e-10) return span;
  if (d0 <= 1e-10) return 0.01 * span;
  return std::min(span, 0.01 * d0 / d1);
}

template <class Backend>
SolveResult dopri5_core(Backend be, typename Backend::State y0, double t0,
                        double t1, const SolverConfig& cfg) {
  using State = typename Backend::State;
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0))
    throw ConfigError("dopri5: tolerances must be positive");
  if (cfg.max_steps <= 0) throw ConfigError("dopri5: max_steps must be positive");
  require_finite(be.view(y0), t0, "dopri5");

  SolveResult out;
  if (cfg.record_trajectory)
    out.trajectory.emplace_back(t0, Vector(be.view(y0).col(0)));

  State y = y0;
  double t = t0;
  State k1 = be.eval(y, t);
  out.nfe = 1;
  require_finite(be.view(k1), t, "dopri5");

  const double span = std::abs(t1 - t0);
  if (span == 0.0) {
    out.final_state = be.view(y).col(0);
    be.note_final(out, y);
    return out;
  }
  const double dir = (t1 > t0) ? 1.0 : -1.0;
  double h =
      cfg.initial_step > 0.0
          ? dir * std::min(cfg.initial_step, span)
          : dir * initial_step(be.view(y), be.view(k1), span, cfg.atol, cfg.rtol);

  double facold = 1e-4;
  bool last_rejected = false;
  while ((t - t1) * dir < 0.0) {
    if (out.accepted + out.rejected >= cfg.max_steps)
      throw DivergenceError("dopri5: step budget exhausted", t, h,
                            out.accepted + out.rejected);
    if (0.1 * std::abs(h) <= std::abs(t) * kUround)
      throw DivergenceError("dopri5: step size underflow", t, h,
                            out.accepted + out.rejected);
    if ((t + 1.01 * h - t1) * dir > 0.0) h = t1 - t;

    const auto tape_mark = be.mark();
    const State* sk1 = &k1;
    std::array<double, 6> cs;

    cs = {h * a21};
    State ys = be.combine(y, std::span<const State* const>(&sk1, 1),
                          std::span<const double>(cs.data(), 1));
    State k2 = be.eval(ys, t + c2 * h);

    std::array<const State*, 6> ks = {&k1, &k2};
    cs = {h * a31, h * a32};
    ys = be.combine(y, std::span<const State* const>(ks.data(), 2),
                    std::span<const double>(cs.data(), 2));
    State k3 = be.eval(ys, t + c3 * h);

    ks = {&k1, &k2, &k3};
    cs = {h * a41, h * a42, h * a43};
    ys = be.combine(y, std::span<const State* const>(ks.data(), 3),
                    std::span<const double>(cs.data(), 3));
    State k4 = be.eval(ys, t + c4 * h);

    ks = {&k1, &k2, &k3, &k4};
    cs = {h * a51, h * a52, h * a53, h * a54};
    ys = be.combine(y, std::span<const State* const>(ks.data(), 4),
                    std::span<const double>(cs.data(), 4));
    State k5 = be.eval(ys, t + c5 * h);

    ks = {&k1, &k2, &k3, &k4, &k5};
    cs = {h * a61, h * a62, h * a63, h * a64, h * a65};
    ys = be.combine(y, std::span<const State* const>(ks.data(), 5),
                    std::span<const double>(cs.data(), 5));
    State k6 = be.eval(ys, t + h);

    ks = {&k1, &k3, &k4, &k5, &k6};
    cs = {h * a71, h * a73, h * a74, h * a75, h * a76};
    State ynew = be.combine(y, std::span<const State* const>(ks.data(), 5),
                            std::span<const double>(cs.data(), 5));
    State k7 = be.eval(ynew, t + h);
    out.nfe += 6;

    require_finite(be.view(ynew), t + h, "dopri5");
    require_finite(be.view(k7), t + h, "dopri5");
    const double err =
        scaled_max_err(be.view(y), be.view(ynew), h, cfg.atol, cfg.rtol,
                       be.view(k1), be.view(k3), be.view(k4), be.view(k5),
                       be.view(k6), be.view(k7));
    out.steps.push_back({t, h, err, err <= 1.0});

    const double fac11 = std::pow(err, kExpo1);
    if (err <= 1.0) {
      double fac = fac11 / std::pow(facold, kBeta);
      fac = std::max(1.0 / kFacr, std::min(1.0 / kFacl, fac / kSafe));
      double hnew = h / fac;
      facold = std::max(err, 1e-4);
      ++out.accepted;
      y = ynew;
      k1 = k7;  // FSAL
      t += h;
      if (cfg.record_trajectory)
        out.trajectory.emplace_back(t, Vector(be.view(y).col(0)));
      if (last_rejected) hnew = dir * std::min(std::abs(hnew), std::abs(h));
      h = hnew;
      last_rejected = false;
    } else {
      ++out.rejected;
      be.rollback(tape_mark);
      h = h / std::min(1.0 / kFacl, fac11 / kSafe);
      last_rejected = true;
    }
  }
  out.final_state = be.view(y).col(0);
  be.note_final(out, y);
  return out;
}

template <class Backend>
SolveResult rk4_core(Backend be, typename Backend::State y0, double t0,
                     double t1, int n_steps, const SolverConfig& cfg) {
  using State = typename Backend::State;
  if (n_steps <= 0) throw ConfigError("rk4: n_steps must be positive");
  require_finite(be.view(y0), t0, "rk4");

  SolveResult out;
  if (cfg.record_trajectory)
    out.trajectory.emplace_back(t0, Vector(be.view(y0).col(0)));
  const double h = (t1 - t0) / static_cast<double>(n_steps);
  State y = y0;
  for (int i = 0; i < n_steps; ++i) {
    const double t = t0 + h * static_cast<double>(i);
    State k1 = be.eval(y, t);
    const State* p = &k1;
    std::array<double, 4> cs = {0.5 * h};
    State k2 = be.eval(be.combine(y, std::span<const State* const>(&p, 1),
                                  std::span<const double>(cs.data(), 1)),
                       t + 0.5 * h);
    p = &k2;
    State k3 = be.eval(be.combine(y, std::span<const State* const>(&p, 1),
                                  std::span<const double>(cs.data(), 1)),
                       t + 0.5 * h);
    p = &k3;
    cs = {h};
    State k4 = be.eval(be.combine(y, std::span<const State* const>(&p, 1),
                                  std::span<const double>(cs.data(), 1)),
                       t + h);
    std::array<const State*, 4> ks = {&k1, &k2, &k3, &k4};
    cs = {h / 6.0, h / 3.0, h / 3.0, h / 6.0};
    y = be.combine(y, std::span<const State* const>(ks.data(), 4),
                   std::span<const double>(cs.data(), 4));
    out.nfe += 4;
    ++out.accepted;
    require_finite(be.view(y), t + h, "rk4");
    out.steps.push_back({t, h, 0.0, true});
    if (cfg.record_trajectory)
      out.trajectory.emplace_back(t0 + h * static_cast<double>(i + 1),
                                  Vector(be.view(y).col(0)));
  }
  out.final_state = be.view(y).col(0);
  be.note_final(out, y);
  return out;
}

}  // namespace

std::vector<double> SolveResult::accepted_h() const {
  std::vector<double> hs;
  hs.reserve(static_cast<std::size_t>(accepted));
  for (const StepRecord& s : steps)
    if (s.accepted) hs.push_back(s.h);
  return hs;
}

Vector SolveResult::sample_at(double t) const {
  if (trajectory.size() < 1)
    throw ContractError("sample_at: trajectory was not recorded");
  if (trajectory.size() == 1) return trajectory.front().second;
  const bool ascending = trajectory.back().first >= trajectory.front().first;
  auto cmp = [ascending](double a, double b) {
    return ascending ? a < b : a > b;
  };
  if (cmp(t, trajectory.front().first)) return trajectory.front().second;
  if (cmp(trajectory.back().first, t)) return trajectory.back().second;
  std::size_t lo = 0, hi = trajectory.size() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (cmp(t, trajectory[mid].first))
      hi = mid;
    else
      lo = mid;
  }
  const auto& [ta, ya] = trajectory[lo];
  const auto& [tb, yb] = trajectory[hi];
  if (tb == ta) return ya;
  const double w = (t - ta) / (tb - ta);
  return (1.0 - w) * ya + w * yb;
}

SolveResult rk4_solve(const OdeFn& f, const Vector& z0, double t0, double t1,
                      int n_steps, const SolverConfig& cfg) {
  return rk4_core(ValueBackend{&f}, z0, t0, t1, n_steps, cfg);
}

SolveResult rk4_solve(Tape& tape, const TapedOdeFn& f, NodeId z0, double t0,
                      double t1, int n_steps, const SolverConfig& cfg) {
  return rk4_core(TapeBackend{&tape, &f}, z0, t0, t1, n_steps, cfg);
}

SolveResult dopri5_solve(const OdeFn& f, const Vector& z0, double t0, double t1,
                         const SolverConfig& cfg) {
  return dopri5_core(ValueBackend{&f}, z0, t0, t1, cfg);
}

SolveResult dopri5_solve(Tape& tape, const TapedOdeFn& f, NodeId z0, double t0,
                         double t1, const SolverConfig& cfg) {
  return dopri5_core(TapeBackend{&tape, &f}, z0, t0, t1, cfg);
}

Vector dopri5_replay(const OdeFn& f, const Vector& z0, double t0,
                     std::span<const double> schedule) {
  // Stage sums are accumulated term by term with h folded into each
  // coefficient, matching the solve arithmetic exactly so replays are
  // bit-identical to the accepted path that produced the schedule.
  ValueBackend be{&f};
  Vector y = z0;
  double t = t0;
  std::array<double, 6> cs;
  for (const double h : schedule) {
    const Vector k1 = f(y, t);
    const Vector* p1 = &k1;
    cs = {h * a21};
    const Vector k2 = f(be.combine(y, std::span<const Vector* const>(&p1, 1),
                                   std::span<const double>(cs.data(), 1)),
                        t + c2 * h);
    std::array<const Vector*, 6> ks = {&k1, &k2};
    cs = {h * a31, h * a32};
    const Vector k3 =
        f(be.combine(y, std::span<const Vector* const>(ks.data(), 2),
                     std::span<const double>(cs.data(), 2)),
          t + c3 * h);
    ks = {&k1, &k2, &k3};
    cs = {h * a41, h * a42, h * a43};
    const Vector k4 =
        f(be.combine(y, std::span<const Vector* const>(ks.data(), 3),
                     std::span<const double>(cs.data(), 3)),
          t + c4 * h);
    ks = {&k1, &k2, &k3, &k4};
    cs = {h * a51, h * a52, h * a53, h * a54};
    const Vector k5 =
        f(be.combine(y, std::span<const Vector* const>(ks.data(), 4),
                     std::span<const double>(cs.data(), 4)),
          t + c5 * h);
    ks = {&k1, &k2, &k3, &k4, &k5};
    cs = {h * a61, h * a62, h * a63, h * a64, h * a65};
    const Vector k6 =
        f(be.combine(y, std::span<const Vector* const>(ks.data(), 5),
                     std::span<const double>(cs.data(), 5)),
          t + h);
    ks = {&k1, &k3, &k4, &k5, &k6};
    cs = {h * a71, h * a73, h * a74, h * a75, h * a76};
    y = be.combine(y, std::span<const Vector* const>(ks.data(), 5),
                   std::span<const double>(cs.data(), 5));
    t += h;
  }
  return y;
}

LossGrad solve_loss_grad(const Mlp& net, const Vector& z0, double t0, double t1,
                         const SolverConfig& cfg, const StateLoss& loss) {
  Tape tape;
  MlpOnTape staged = stage(tape, net);
  const TapedOdeFn f = [&net, &staged](Tape& tp, NodeId z, double t) {
    return mlp_forward(tp, net, staged, z, t);
  };
  const NodeId z0n = tape.leaf(z0);
  SolveResult solve =
      cfg.method == Method::kRk4
          ? rk4_solve(tape, f, z0n, t0, t1, cfg.rk4_steps, cfg)
          : dopri5_solve(tape, f, z0n, t0, t1, cfg);
  const NodeId out = loss.record(tape, solve.final_node);
  const Gradients grads = tape.backward(out);
  LossGrad result;
  result.loss = tape.value(out)(0, 0);
  result.grad = flatten_param_grads(net, staged, grads);
  result.solve = std::move(solve);
  return result;
}

}  // namespace steerode
