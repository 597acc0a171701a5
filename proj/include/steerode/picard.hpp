#pragma once

#include <functional>
#include <vector>

#include "steerode/rng.hpp"
#include "steerode/types.hpp"

namespace steerode {

// Time-dependent field in f(t, x) argument order.
using FieldFn = std::function<Vector(double, const Vector&)>;

// One iterate of the fixed-point construction: state values tabulated on
// a fixed grid spanning [t0 - a, t0 + a], with t0 a grid node.
struct PicardIterate {
  Vector grid;    // ascending times
  Matrix values;  // state_dim x grid points
  int index = 0;  // how many applications produced it

  double a() const { return 0.5 * (grid(grid.size() - 1) - grid(0)); }
};

// Constant iterate phi_0 == z0. points must be odd and >= 3 so t0 sits
// on the grid.
PicardIterate make_initial_iterate(const Vector& z0, double t0, double a,
                                   Index points);

// Grid point count implied by the lab's resolution rule: spacing 1e-3 * a.
Index default_grid_points();

// One application of the perturbed fixed-point map: new values
// z0 + integral of f(s, phi(s)) over [t0, t + delta], with one fresh
// delta ~ Uniform(-b, b) drawn per application. The integral is composite
// trapezoid on the grid, linearly extended beyond the end nodes for the
// overhang the perturbation can reach. Requires b <= a/2.
PicardIterate picard_apply(const FieldFn& f, const Vector& z0, double t0,
                           const PicardIterate& phi, double b, RngStream& rng);

// Sup over the grid of the componentwise max absolute difference.
double delta_metric(const PicardIterate& pa, const PicardIterate& pb);

struct ContractionLabConfig {
  double a = 0.4;
  double c = 0.5;          // state box half-width around z0
  Index grid_points = 0;   // 0: use default_grid_points()
  int poly_degree = 3;     // perturbation polynomial degree
  int probe_points = 4000; // box samples for the L and M estimates
};

struct ContractionReport {
  std::vector<double> delta_before;
  std::vector<double> delta_after;
  std::vector<double> ratios;
  double mean_ratio = 0.0;
  double std_ratio = 0.0;  // sample std of the ratios
  int trials = 0;          // completed (non-degenerate) trials
  int skipped = 0;
  double b = 0.0;
  double a = 0.0;
  double c = 0.0;
  double est_lipschitz = 0.0;
  double est_bound = 0.0;
  double lemma_bound = 0.5;
};

// Monte-Carlo estimate of the contraction factor of one application:
// random smooth iterate pairs inside the state box, fresh perturbations,
// ratio of sup-distances after and before. Lipschitz and bound constants
// of f are estimated by dense sampling of the working box and reported.
// Requires n_trials >= 100.
ContractionReport empirical_contraction(const FieldFn& f, const Vector& z0,
                                        double t0, double b, int n_trials,
                                        RngStream& rng,
                                        const ContractionLabConfig& lab = {});

struct TriangularStats {
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> bin_edges;  // bins + 1 entries
  std::vector<double> density;    // normalized so the histogram integrates to 1
  long n = 0;
  double b = 0.0;
};

// Sample statistics of Y = |delta_2| - |delta_1| for independent
// delta_i ~ Uniform(-b, b), whose density is (b - |y|) / b^2 on [-b, b].
// Requires n >= 10^4.
TriangularStats triangular_diff_stats(double b, long n, RngStream& rng);

}  // namespace steerode
