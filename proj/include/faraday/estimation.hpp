#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "faraday/core_model.hpp"
#include "faraday/error.hpp"
#include "faraday/sample_stream.hpp"
#include "faraday/stats.hpp"

namespace faraday {

struct NormalizationConfig {
  double moving_average_window = 1e-2;  // s, centered
  double dark_segment_begin = 0.0;      // s
  double dark_segment_end = 0.05;       // s
  // Invert S2 = (phi/2) sin(2 theta) exactly instead of the small-angle
  // S2 = phi theta.
  bool exact_inversion = true;

  static constexpr double min_window_samples = 10.0;

  void validate() const {
    detail::require<ConfigError>(moving_average_window > 0.0, "normalization.moving_average_window must be > 0 s (got " +
                                                                  std::to_string(moving_average_window) + ")");
    detail::require<ConfigError>(dark_segment_end > dark_segment_begin && dark_segment_begin >= 0.0,
                                 "normalization.dark_segment must be a non-empty interval [begin, end) with begin >= 0 (got [" +
                                     std::to_string(dark_segment_begin) + ", " + std::to_string(dark_segment_end) + "))");
  }

  void validate_for(double sample_rate, double dark_time) const {
    validate();
    detail::require<ConfigError>(moving_average_window * sample_rate >= min_window_samples,
                                 "normalization.moving_average_window must span >= 10 samples (got " +
                                     std::to_string(moving_average_window * sample_rate) + ")");
    detail::require<ConfigError>(dark_segment_end <= dark_time + 1e-12,
                                 "normalization.dark_segment_end (" + std::to_string(dark_segment_end) +
                                     " s) must lie within run.pre_probe_dark_time (" + std::to_string(dark_time) + " s)");
  }

  bool operator==(const NormalizationConfig&) const = default;
};

// Subtracts the mean of the dark segment from every sample. The subtracted
// value is kept in metadata["offset_removed"].
inline SampleStream remove_offset(const SampleStream& stream, const NormalizationConfig& cfg) {
  const SampleStream dark = slice(stream, cfg.dark_segment_begin, cfg.dark_segment_end);
  if (dark.empty())
    throw ContractError("remove_offset: dark segment [" + std::to_string(cfg.dark_segment_begin) + ", " +
                        std::to_string(cfg.dark_segment_end) + ") contains no samples");
  const double offset = stats::mean(dark.values);
  SampleStream out = stream;
  for (double& v : out.values) v -= offset;
  out.metadata["offset_removed"] = offset;
  out.metadata["offset_dark_samples"] = static_cast<double>(dark.size());
  return out;
}

// Centered moving average over `window` samples, truncated at the edges.
inline std::vector<double> centered_moving_average(std::span<const double> x, std::size_t window) {
  const std::size_t half = window / 2;
  std::vector<long double> prefix(x.size() + 1, 0.0L);
  for (std::size_t k = 0; k < x.size(); ++k) prefix[k + 1] = prefix[k] + x[k];
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t lo = k >= half ? k - half : 0;
    const std::size_t hi = std::min(x.size(), k + half + 1);
    out[k] = static_cast<double>((prefix[hi] - prefix[lo]) / static_cast<long double>(hi - lo));
  }
  return out;
}

// asin with the branch chosen per sample so that the result stays smooth;
// the inverse of sin(phase) for a phase that may exceed pi/2. Assumes the
// phase moves by well under pi/2 between samples. Tracking starts at the
// sample closest to a zero of sin, where the branches are pi apart, and runs
// both ways with quadratic extrapolation, which tells a path turning at
// +-pi/2 from one passing through it. Among the equally smooth solutions
// (p and pi - p, shifted by 2 pi) the one closest to zero mean is returned.
inline std::vector<double> unwrapped_asin(std::span<const double> s) {
  constexpr double pi = std::numbers::pi;
  std::vector<double> p(s.size());
  if (s.empty()) return p;
  std::size_t origin = 0;
  for (std::size_t k = 1; k < s.size(); ++k)
    if (std::abs(s[k]) < std::abs(s[origin])) origin = k;

  auto branch = [&](std::size_t k, double predicted) {
    const double u = std::asin(std::clamp(s[k], -1.0, 1.0));
    const double a = u + 2.0 * pi * std::round((predicted - u) / (2.0 * pi));
    const double b = (pi - u) + 2.0 * pi * std::round((predicted - (pi - u)) / (2.0 * pi));
    return std::abs(a - predicted) <= std::abs(b - predicted) ? a : b;
  };
  // Walks away from the origin; step is +1 or -1 in index.
  auto track = [&](std::ptrdiff_t step) {
    std::vector<double> h{p[origin]};  // most recent last
    for (auto k = static_cast<std::ptrdiff_t>(origin) + step; k >= 0 && k < static_cast<std::ptrdiff_t>(s.size()); k += step) {
      const std::size_t m = h.size();
      double predicted = h[m - 1];
      if (m >= 3) predicted = 3.0 * h[m - 1] - 3.0 * h[m - 2] + h[m - 3];
      else if (m == 2) predicted = 2.0 * h[1] - h[0];
      const double v = branch(static_cast<std::size_t>(k), predicted);
      p[static_cast<std::size_t>(k)] = v;
      if (m == 3) h.erase(h.begin());
      h.push_back(v);
    }
  };
  p[origin] = std::asin(std::clamp(s[origin], -1.0, 1.0));
  track(+1);
  track(-1);

  const double m = stats::mean(p);
  const double shift_direct = 2.0 * pi * std::round(m / (2.0 * pi));
  const double shift_mirror = 2.0 * pi * std::round((pi - m) / (2.0 * pi));
  if (std::abs(pi - m - shift_mirror) < std::abs(m - shift_direct)) {
    for (double& v : p) v = pi - v - shift_mirror;
  } else if (shift_direct != 0.0) {
    for (double& v : p) v -= shift_direct;
  }
  return p;
}

// Probe rotation angle from offset-free difference and monitor streams.
// The monitor's moving average, rescaled from the tap fraction to the
// polarimeter arm, gives the detected polarimeter flux.
inline SampleStream normalize_power(const SampleStream& diff, const SampleStream& monitor, const NormalizationConfig& cfg,
                                    const ProbeDetectorConfig& probe) {
  diff.validate();
  require_aligned(diff, monitor, "normalize_power");
  cfg.validate();
  const auto window = static_cast<std::size_t>(std::llround(cfg.moving_average_window * diff.sample_rate));
  if (static_cast<double>(window) < NormalizationConfig::min_window_samples)
    throw ConfigError("normalization.moving_average_window must span >= 10 samples (got " + std::to_string(window) + ")");

  const std::vector<double> monitor_avg = centered_moving_average(monitor.values, window);
  const double arm_ratio = (1.0 - probe.monitor_tap) / probe.monitor_tap;

  SampleStream out{diff.sample_rate, diff.start_time, Channel::rotation_angle, std::vector<double>(diff.size()), diff.metadata};
  for (std::size_t k = 0; k < diff.size(); ++k) {
    if (!(monitor_avg[k] > 0.0))
      throw EstimationError("normalize_power: monitor moving average is " + std::to_string(monitor_avg[k]) +
                            " at t = " + std::to_string(diff.time_at(k)) + " s; the probe flux must be positive");
    // monitor = eta * tap * phi, so eta * phi_pol = monitor * (1 - tap) / tap.
    out.values[k] = diff.values[k] / (monitor_avg[k] * arm_ratio);
  }
  if (cfg.exact_inversion) {
    // theta = asin(2 S2 / (eta phi_pol)) / 2
    std::vector<double> twice(out.values.size());
    for (std::size_t k = 0; k < twice.size(); ++k) twice[k] = 2.0 * out.values[k];
    const std::vector<double> phase = unwrapped_asin(twice);
    for (std::size_t k = 0; k < phase.size(); ++k) out.values[k] = 0.5 * phase[k];
  }
  out.metadata["moving_average_samples"] = static_cast<double>(window);
  return out;
}

// N = R / coupling, with R the demodulated carrier amplitude of the rotation
// angle (lock-in magnitude, in radians).
inline SampleStream atoms_from_angle(const SampleStream& amplitude, const CouplingModel& coupling) {
  coupling.validate();
  SampleStream out = amplitude;
  out.channel = Channel::atom_number_estimate;
  for (double& v : out.values) v /= coupling.coupling_strength;
  return out;
}

}  // namespace faraday
