#include "steerode/picard.hpp"

#include <algorithm>
#include <cmath>

#include "steerode/errors.hpp"

namespace steerode {

namespace {

// Prefix trapezoid sums of integrand columns: P.col(0) = 0 and
// P.col(j+1) - P.col(j) is the segment trapezoid.
Matrix prefix_trapezoid(const Vector& grid, const Matrix& integrand) {
  Matrix p(integrand.rows(), integrand.cols());
  p.col(0).setZero();
  for (Index j = 0; j + 1 < grid.size(); ++j)
    p.col(j + 1) =
        p.col(j) +
        0.5 * (grid(j + 1) - grid(j)) * (integrand.col(j) + integrand.col(j + 1));
  return p;
}

// Prefix integral evaluated at x, with linear extension of the integrand
// beyond the end nodes. reach limits how far the extension may be used.
Vector prefix_at(const Vector& grid, const Matrix& integrand, const Matrix& p,
                 double x, double reach) {
  const Index n = grid.size();
  const double lo = grid(0), hi = grid(n - 1);
  if (x < lo - reach || x > hi + reach)
    throw ContractError(
        "picard_apply: perturbed time lies outside the representable grid "
        "extension");
  if (x <= lo) {
    const double h = grid(1) - grid(0);
    const Vector slope = (integrand.col(1) - integrand.col(0)) / h;
    const double d = x - lo;
    return d * integrand.col(0) + (0.5 * d * d) * slope;
  }
  if (x >= hi) {
    const double h = grid(n - 1) - grid(n - 2);
    const Vector slope = (integrand.col(n - 1) - integrand.col(n - 2)) / h;
    const double d = x - hi;
    return p.col(n - 1) + d * integrand.col(n - 1) + (0.5 * d * d) * slope;
  }
  const double* begin = grid.data();
  Index j = static_cast<Index>(std::upper_bound(begin, begin + n, x) - begin) - 1;
  j = std::max<Index>(0, std::min(j, n - 2));
  const double h = grid(j + 1) - grid(j);
  const double d = x - grid(j);
  const Vector slope = (integrand.col(j + 1) - integrand.col(j)) / h;
  return p.col(j) + d * integrand.col(j) + (0.5 * d * d) * slope;
}

}  // namespace

Index default_grid_points() { return 2001; }

PicardIterate make_initial_iterate(const Vector& z0, double t0, double a,
                                   Index points) {
  if (!(a > 0.0)) throw ConfigError("make_initial_iterate: a must be positive");
  if (points < 3 || points % 2 == 0)
    throw ConfigError("make_initial_iterate: points must be odd and >= 3");
  if (z0.size() < 1)
    throw ConfigError("make_initial_iterate: empty initial state");
  PicardIterate phi;
  phi.grid = Vector::LinSpaced(points, t0 - a, t0 + a);
  phi.grid((points - 1) / 2) = t0;
  phi.values = z0.replicate(1, points);
  phi.index = 0;
  return phi;
}

PicardIterate picard_apply(const FieldFn& f, const Vector& z0, double t0,
                           const PicardIterate& phi, double b, RngStream& rng) {
  const Index n = phi.grid.size();
  if (n < 3) throw ContractError("picard_apply: degenerate grid");
  if (phi.values.cols() != n || phi.values.rows() != z0.size())
    throw ContractError("picard_apply: iterate shape mismatch");
  const double a = phi.a();
  if (b < 0.0) throw ConfigError("picard_apply: b must be non-negative");
  if (b > 0.5 * a + 1e-12)
    throw ConfigError("picard_apply: b must not exceed a/2");

  const Index center = (n - 1) / 2;
  if (std::abs(phi.grid(center) - t0) > 1e-12 * std::max(1.0, std::abs(t0)))
    throw ContractError("picard_apply: t0 is not the central grid node");

  Matrix integrand(z0.size(), n);
  for (Index j = 0; j < n; ++j)
    integrand.col(j) = f(phi.grid(j), phi.values.col(j));
  if (!integrand.allFinite())
    throw NumericError("picard_apply: non-finite field values on the grid");

  const Matrix p = prefix_trapezoid(phi.grid, integrand);
  const Vector p0 = p.col(center);

  const double delta = b == 0.0 ? 0.0 : rng.uniform(-b, b);
  const double reach = b + 1e-12;

  PicardIterate next;
  next.grid = phi.grid;
  next.values.resize(z0.size(), n);
  for (Index j = 0; j < n; ++j)
    next.values.col(j) =
        z0 + prefix_at(phi.grid, integrand, p, phi.grid(j) + delta, reach) - p0;
  next.index = phi.index + 1;
  return next;
}

double delta_metric(const PicardIterate& pa, const PicardIterate& pb) {
  if (pa.grid.size() != pb.grid.size() || pa.grid != pb.grid)
    throw ContractError("delta_metric: iterates live on different grids");
  if (pa.values.rows() != pb.values.rows())
    throw ContractError("delta_metric: state dimensions differ");
  return (pa.values - pb.values).cwiseAbs().maxCoeff();
}

namespace {

// Max |f| and max directional |df/dx| over the working box, by seeded
// dense sampling.
std::pair<double, double> estimate_constants(const FieldFn& f,
                                             const Vector& z0, double t0,
                                             double a, double b, double c,
                                             int probes, RngStream& rng) {
  const Index dim = z0.size();
  double bound = 0.0, lipschitz = 0.0;
  const double fd = 1e-5 * c;
  for (int i = 0; i < probes; ++i) {
    const double t = rng.uniform(t0 - a - b, t0 + a + b);
    Vector x(dim);
    for (Index r = 0; r < dim; ++r)
      x(r) = z0(r) + rng.uniform(-c, c);
    bound = std::max(bound, f(t, x).cwiseAbs().maxCoeff());
    for (Index r = 0; r < dim; ++r) {
      Vector hi = x, lo = x;
      hi(r) += fd;
      lo(r) -= fd;
      lipschitz = std::max(
          lipschitz,
          (f(t, hi) - f(t, lo)).cwiseAbs().maxCoeff() / (2.0 * fd));
    }
  }
  return {bound, lipschitz};
}

// Random polynomial perturbation of the constant iterate, kept inside
// |phi - z0| <= c by bounding each coefficient to c / (degree + 1).
PicardIterate perturbed_iterate(const PicardIterate& base, const Vector& z0,
                                double t0, double c, int degree,
                                RngStream& rng) {
  PicardIterate phi = base;
  const double a = base.a();
  const double coeff_bound = c / static_cast<double>(degree + 1);
  for (Index r = 0; r < z0.size(); ++r) {
    Vector coeffs(degree + 1);
    for (int k = 0; k <= degree; ++k)
      coeffs(k) = rng.uniform(-coeff_bound, coeff_bound);
    for (Index j = 0; j < base.grid.size(); ++j) {
      const double tau = (base.grid(j) - t0) / a;
      double poly = 0.0;
      for (int k = degree; k >= 0; --k) poly = poly * tau + coeffs(k);
      phi.values(r, j) = z0(r) + poly;
    }
  }
  phi.index = 0;
  return phi;
}

}  // namespace

ContractionReport empirical_contraction(const FieldFn& f, const Vector& z0,
                                        double t0, double b, int n_trials,
                                        RngStream& rng,
                                        const ContractionLabConfig& lab) {
  if (n_trials < 100)
    throw ConfigError("empirical_contraction: need at least 100 trials");
  if (!(lab.a > 0.0) || !(lab.c > 0.0))
    throw ConfigError("empirical_contraction: a and c must be positive");
  const Index points =
      lab.grid_points > 0 ? lab.grid_points : default_grid_points();

  ContractionReport report;
  report.b = b;
  report.a = lab.a;
  report.c = lab.c;

  RngStream probe_rng = rng.split(0);
  const auto [bound, lipschitz] = estimate_constants(
      f, z0, t0, lab.a, b, lab.c, lab.probe_points, probe_rng);
  report.est_bound = bound;
  report.est_lipschitz = lipschitz;

  const PicardIterate base = make_initial_iterate(z0, t0, lab.a, points);
  for (int trial = 0; trial < n_trials; ++trial) {
    RngStream trial_rng = rng.split(static_cast<std::uint64_t>(trial) + 1);
    const PicardIterate phi1 =
        perturbed_iterate(base, z0, t0, lab.c, lab.poly_degree, trial_rng);
    const PicardIterate phi2 =
        perturbed_iterate(base, z0, t0, lab.c, lab.poly_degree, trial_rng);
    const double before = delta_metric(phi1, phi2);
    if (before == 0.0) {
      ++report.skipped;
      continue;
    }
    const PicardIterate t1 = picard_apply(f, z0, t0, phi1, b, trial_rng);
    const PicardIterate t2 = picard_apply(f, z0, t0, phi2, b, trial_rng);
    const double after = delta_metric(t1, t2);
    report.delta_before.push_back(before);
    report.delta_after.push_back(after);
    report.ratios.push_back(after / before);
  }
  report.trials = static_cast<int>(report.ratios.size());
  if (report.trials > 0) {
    double sum = 0.0;
    for (const double r : report.ratios) sum += r;
    report.mean_ratio = sum / report.trials;
    double ss = 0.0;
    for (const double r : report.ratios)
      ss += (r - report.mean_ratio) * (r - report.mean_ratio);
    report.std_ratio =
        report.trials > 1 ? std::sqrt(ss / (report.trials - 1)) : 0.0;
  }
  return report;
}

TriangularStats triangular_diff_stats(double b, long n, RngStream& rng) {
  if (n < 10000)
    throw ConfigError("triangular_diff_stats: need at least 10^4 draws");
  if (b < 0.0) throw ConfigError("triangular_diff_stats: b must be non-negative");

  TriangularStats stats;
  stats.b = b;
  stats.n = n;
  const int bins = 41;
  const double lo = -b, hi = b;
  stats.bin_edges.resize(bins + 1);
  for (int k = 0; k <= bins; ++k)
    stats.bin_edges[k] = b == 0.0 ? 0.0 : lo + (hi - lo) * k / bins;
  std::vector<long> counts(bins, 0);

  double sum = 0.0, sumsq = 0.0;
  for (long i = 0; i < n; ++i) {
    const double d1 = b == 0.0 ? 0.0 : rng.uniform(-b, b);
    const double d2 = b == 0.0 ? 0.0 : rng.uniform(-b, b);
    const double y = std::abs(d2) - std::abs(d1);
    sum += y;
    sumsq += y * y;
    if (b > 0.0) {
      int k = static_cast<int>((y - lo) / (hi - lo) * bins);
      k = std::max(0, std::min(bins - 1, k));
      ++counts[k];
    }
  }
  stats.mean = sum / static_cast<double>(n);
  const double var =
      (sumsq - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1);
  stats.stddev = std::sqrt(std::max(0.0, var));
  stats.density.resize(bins, 0.0);
  if (b > 0.0) {
    const double width = (hi - lo) / bins;
    for (int k = 0; k < bins; ++k)
      stats.density[k] =
          static_cast<double>(counts[k]) / (static_cast<double>(n) * width);
  }
  return stats;
}

}  // namespace steerode
