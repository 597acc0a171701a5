#pragma once

#include <optional>
#include <string>
#include <vector>

#include "steerode/rng.hpp"

namespace steerode {

enum class EndTimeKind { kFixed, kUniform, kGaussian };

std::string to_string(EndTimeKind kind);
EndTimeKind end_time_kind_from_string(const std::string& s);

// Randomized integration end time over [t0, t1]. The uniform rule draws
// T ~ U(t1 - b, t1 + b) and requires b < t1 - t0 so T stays past the
// start; the gaussian rule draws T ~ N(t1, std) clipped to a window,
// by default t1 +- 3 std.
struct EndTimeSampler {
  EndTimeKind kind = EndTimeKind::kFixed;
  double t0 = 0.0;
  double t1 = 1.0;
  double b = 0.0;        // uniform half-width
  double std_dev = 0.0;  // gaussian spread
  std::optional<std::pair<double, double>> clip;  // gaussian window override

  std::pair<double, double> effective_clip() const;
};

EndTimeSampler fixed_end_time(double t0, double t1);
EndTimeSampler uniform_end_time(double t0, double t1, double b);
EndTimeSampler gaussian_end_time(
    double t0, double t1, double std_dev,
    std::optional<std::pair<double, double>> clip = std::nullopt);

// Throws ConfigError on violated parameter constraints. Returns a
// human-readable warning when parameters are legal but degenerate in
// practice (near-saturated uniform width), empty string otherwise.
std::string validate(const EndTimeSampler& s);

// One draw. Throws SamplerDegenerateError if the draw lands at or below
// t0, which only a clipped-too-wide gaussian can do once validated.
double sample_end_time(const EndTimeSampler& s, RngStream& rng);

// Shifted nominal end time t1 - b, so draws of U(t1_train - b,
// t1_train + b) never exceed the original t1.
double constrained_t1(double t1_original, double b, double t0 = 0.0);

// Per-interval end times for a strictly increasing grid: for each
// consecutive pair, T_i ~ U(t_i+1 - b_i, t_i+1 + b_i) with
// b_i = (t_i+1 - t_i) - eps. Requires 0 < eps <= every gap; eps equal
// to a gap makes that interval's end time exactly t_i+1.
std::vector<double> adaptive_grid_end_times(const std::vector<double>& times,
                                            double eps, RngStream& rng);

}  // namespace steerode
