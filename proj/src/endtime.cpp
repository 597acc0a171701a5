#include "steerode/endtime.hpp"

#include <algorithm>
#include <cmath>

#include "steerode/errors.hpp"

namespace steerode {

std::string to_string(EndTimeKind kind) {
  switch (kind) {
    case EndTimeKind::kFixed: return "fixed";
    case EndTimeKind::kUniform: return "uniform";
    case EndTimeKind::kGaussian: return "gaussian";
  }
  throw ContractError("to_string: unknown end time kind");
}

EndTimeKind end_time_kind_from_string(const std::string& s) {
  if (s == "fixed") return EndTimeKind::kFixed;
  if (s == "uniform") return EndTimeKind::kUniform;
  if (s == "gaussian") return EndTimeKind::kGaussian;
  throw ConfigError("unknown sampler kind '" + s +
                    "' (expected fixed, uniform or gaussian)");
}

std::pair<double, double> EndTimeSampler::effective_clip() const {
  if (clip) return *clip;
  return {t1 - 3.0 * std_dev, t1 + 3.0 * std_dev};
}

EndTimeSampler fixed_end_time(double t0, double t1) {
  EndTimeSampler s;
  s.kind = EndTimeKind::kFixed;
  s.t0 = t0;
  s.t1 = t1;
  validate(s);
  return s;
}

EndTimeSampler uniform_end_time(double t0, double t1, double b) {
  EndTimeSampler s;
  s.kind = b == 0.0 ? EndTimeKind::kFixed : EndTimeKind::kUniform;
  s.t0 = t0;
  s.t1 = t1;
  s.b = b;
  validate(s);
  return s;
}

EndTimeSampler gaussian_end_time(double t0, double t1, double std_dev,
                                 std::optional<std::pair<double, double>> clip) {
  EndTimeSampler s;
  s.kind = EndTimeKind::kGaussian;
  s.t0 = t0;
  s.t1 = t1;
  s.std_dev = std_dev;
  s.clip = clip;
  validate(s);
  return s;
}

std::string validate(const EndTimeSampler& s) {
  if (!(s.t1 > s.t0))
    throw ConfigError("end time sampler: t1 must exceed t0");
  switch (s.kind) {
    case EndTimeKind::kFixed:
      return {};
    case EndTimeKind::kUniform: {
      if (s.b < 0.0)
        throw ConfigError("end time sampler: b must be non-negative");
      if (!(s.b < s.t1 - s.t0))
        throw ConfigError(
            "end time sampler: b must be less than the interval length "
            "t1 - t0, otherwise the sampled end time can reach the start "
            "time");
      if (s.b >= 0.99 * (s.t1 - s.t0))
        return "end time sampler: b is within 1% of the interval length; "
               "draws can land arbitrarily close to the start time";
      return {};
    }
    case EndTimeKind::kGaussian: {
      if (s.std_dev < 0.0)
        throw ConfigError("end time sampler: std must be non-negative");
      const auto [lo, hi] = s.effective_clip();
      if (!(lo <= hi))
        throw ConfigError("end time sampler: clip window is empty");
      if (s.std_dev > 0.0 && lo <= s.t0)
        return "end time sampler: clip window reaches the start time; "
               "degenerate draws will be rejected at sample time";
      return {};
    }
  }
  throw ContractError("validate: unknown end time kind");
}

double sample_end_time(const EndTimeSampler& s, RngStream& rng) {
  double t = s.t1;
  switch (s.kind) {
    case EndTimeKind::kFixed:
      t = s.t1;
      break;
    case EndTimeKind::kUniform:
      t = s.b == 0.0 ? s.t1 : rng.uniform(s.t1 - s.b, s.t1 + s.b);
      break;
    case EndTimeKind::kGaussian: {
      const auto [lo, hi] = s.effective_clip();
      t = std::clamp(s.t1 + s.std_dev * rng.normal(), lo, hi);
      break;
    }
  }
  if (t <= s.t0)
    throw SamplerDegenerateError(
        "sampled end time does not lie past the start time");
  return t;
}

double constrained_t1(double t1_original, double b, double t0) {
  if (b < 0.0) throw ConfigError("constrained_t1: b must be non-negative");
  if (!(b < t1_original - t0))
    throw ConfigError(
        "constrained_t1: b must be less than the interval length t1 - t0");
  return t1_original - b;
}

std::vector<double> adaptive_grid_end_times(const std::vector<double>& times,
                                            double eps, RngStream& rng) {
  if (times.size() < 2)
    throw ConfigError("adaptive_grid_end_times: need at least two times");
  if (!(eps > 0.0))
    throw ConfigError("adaptive_grid_end_times: eps must be positive");
  std::vector<double> ends;
  ends.reserve(times.size() - 1);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double gap = times[i + 1] - times[i];
    if (!(gap > 0.0))
      throw ConfigError(
          "adaptive_grid_end_times: times must be strictly increasing");
    if (eps > gap)
      throw ConfigError(
          "adaptive_grid_end_times: eps exceeds the gap between grid "
          "times " +
          std::to_string(times[i]) + " and " + std::to_string(times[i + 1]));
    const double b = gap - eps;
    ends.push_back(b == 0.0 ? times[i + 1]
                            : rng.uniform(times[i + 1] - b, times[i + 1] + b));
  }
  return ends;
}

}  // namespace steerode
