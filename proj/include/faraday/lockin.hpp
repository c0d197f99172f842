#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "faraday/error.hpp"
#include "faraday/sample_stream.hpp"

namespace faraday {

struct LockInConfig {
  double reference_frequency = 5e3;  // Hz
  double reference_phase = 0.0;      // rad
  double time_constant = 1e-3;       // s
  int stages = 2;                    // cascaded first-order sections
  int decimation = 10;               // keep every k-th output sample

  static constexpr double min_samples_per_time_constant = 5.0;
  static constexpr double min_samples_per_reference_period = 10.0;

  void validate() const {
    detail::require<ConfigError>(reference_frequency > 0.0, "lockin.reference_frequency must be > 0 Hz (got " +
                                                                std::to_string(reference_frequency) + ")");
    detail::require<ConfigError>(time_constant > 0.0,
                                 "lockin.time_constant must be > 0 s (got " + std::to_string(time_constant) + ")");
    detail::require<ConfigError>(stages >= 1, "lockin.stages must be >= 1 (got " + std::to_string(stages) + ")");
    detail::require<ConfigError>(decimation >= 1, "lockin.decimation must be >= 1 (got " + std::to_string(decimation) + ")");
  }

  void validate_for(double sample_rate) const {
    validate();
    detail::require<ConfigError>(time_constant * sample_rate >= min_samples_per_time_constant,
                                 "lockin.time_constant x sample_rate must be >= 5 (got " +
                                     std::to_string(time_constant * sample_rate) + ")");
    detail::require<ConfigError>(sample_rate >= min_samples_per_reference_period * reference_frequency,
                                 "input sample_rate (" + std::to_string(sample_rate) +
                                     " Hz) must be >= 10 x lockin.reference_frequency (" +
                                     std::to_string(reference_frequency) + " Hz)");
  }

  bool operator==(const LockInConfig&) const = default;
};

// Cascade of identical RC sections, y[n] = y[n-1] + a (x[n] - y[n-1]) with
// a = 1 - exp(-dt / tau). State starts at zero.
class LowPassCascade {
 public:
  LowPassCascade(double time_constant, int stages, double sample_rate)
      : alpha_(-std::expm1(-1.0 / (time_constant * sample_rate))), state_(static_cast<std::size_t>(stages), 0.0) {}

  double operator()(double x) {
    for (double& y : state_) {
      y += alpha_ * (x - y);
      x = y;
    }
    return x;
  }

  double alpha() const { return alpha_; }
  void reset() { std::fill(state_.begin(), state_.end(), 0.0); }

 private:
  double alpha_;
  std::vector<double> state_;
};

struct DemodOutput {
  SampleStream i;
  SampleStream q;
};

// Dual-phase lock-in. I = LP[2 x cos(w t + phi)], Q = LP[-2 x sin(w t + phi)],
// so an in-phase unit carrier reads I = 1. Time t is absolute stream time.
inline DemodOutput demodulate(const SampleStream& input, const LockInConfig& config) {
  input.validate();
  config.validate_for(input.sample_rate);

  const double w = 2.0 * std::numbers::pi * config.reference_frequency;
  LowPassCascade lp_i(config.time_constant, config.stages, input.sample_rate);
  LowPassCascade lp_q(config.time_constant, config.stages, input.sample_rate);

  const auto dec = static_cast<std::size_t>(config.decimation);
  const std::size_t n_out = (input.size() + dec - 1) / dec;
  const double out_rate = input.sample_rate / static_cast<double>(dec);
  DemodOutput out{{out_rate, input.start_time, Channel::demod_i, {}, input.metadata},
                  {out_rate, input.start_time, Channel::demod_q, {}, input.metadata}};
  out.i.values.reserve(n_out);
  out.q.values.reserve(n_out);

  for (std::size_t k = 0; k < input.size(); ++k) {
    const double phase = w * input.time_at(k) + config.reference_phase;
    const double x = 2.0 * input.values[k];
    const double yi = lp_i(x * std::cos(phase));
    const double yq = lp_q(-x * std::sin(phase));
    if (k % dec == 0) {
      out.i.values.push_back(yi);
      out.q.values.push_back(yq);
    }
  }
  return out;
}

struct PolarOutput {
  SampleStream magnitude;
  SampleStream phase;
};

inline PolarOutput magnitude_phase(const SampleStream& i, const SampleStream& q) {
  require_aligned(i, q, "magnitude_phase");
  PolarOutput out{{i.sample_rate, i.start_time, Channel::demod_magnitude, std::vector<double>(i.size()), i.metadata},
                  {i.sample_rate, i.start_time, Channel::demod_phase, std::vector<double>(i.size()), i.metadata}};
  for (std::size_t k = 0; k < i.size(); ++k) {
    out.magnitude.values[k] = std::hypot(i.values[k], q.values[k]);
    // atan2(0, 0) is 0 by convention.
    out.phase.values[k] = std::atan2(q.values[k], i.values[k]);
  }
  return out;
}

// Continuous-time step response of `stages` identical RC sections at
// x = t / tau: 1 - exp(-x) sum_{k<stages} x^k / k!.
inline double cascade_step_response(int stages, double x) {
  if (x <= 0.0) return 0.0;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < stages; ++k) {
    term *= x / k;
    sum += term;
  }
  return 1.0 - std::exp(-x) * sum;
}

// Time for the cascade's step response to reach `fraction` of its final
// value. Bisection on the closed form; accurate well below 1e-6 s.
inline double step_response_settling_time(const LockInConfig& config, double fraction) {
  config.validate();
  if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("settling fraction must be in (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  while (cascade_step_response(config.stages, hi) < fraction) hi *= 2.0;
  for (int it = 0; it < 200 && (hi - lo) * config.time_constant > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (cascade_step_response(config.stages, mid) < fraction ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi) * config.time_constant;
}

// Normalized autocorrelation of the discrete cascade's output for white
// input, at lags 0..max_lag (in input samples).
inline std::vector<double> cascade_noise_autocorrelation(const LockInConfig& config, double sample_rate,
                                                         std::size_t max_lag) {
  LowPassCascade lp(config.time_constant, config.stages, sample_rate);
  // Impulse response, long enough for its tail to be negligible.
  const auto len = static_cast<std::size_t>(std::ceil((40.0 + 10.0 * config.stages) * config.time_constant * sample_rate)) + max_lag;
  std::vector<double> h(len);
  for (std::size_t k = 0; k < len; ++k) h[k] = lp(k == 0 ? 1.0 : 0.0);
  std::vector<double> rho(max_lag + 1, 0.0);
  for (std::size_t lag = 0; lag <= max_lag; ++lag)
    for (std::size_t k = 0; k + lag < len; ++k) rho[lag] += h[k] * h[k + lag];
  const double r0 = rho[0];
  for (double& r : rho) r /= r0;
  return rho;
}

// Sum of the squared impulse response: output variance per unit white input
// variance.
inline double cascade_noise_gain(const LockInConfig& config, double sample_rate) {
  LowPassCascade lp(config.time_constant, config.stages, sample_rate);
  const auto len = static_cast<std::size_t>(std::ceil((40.0 + 10.0 * config.stages) * config.time_constant * sample_rate));
  double sum = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    const double h = lp(k == 0 ? 1.0 : 0.0);
    sum += h * h;
  }
  return sum;
}

}  // namespace faraday
