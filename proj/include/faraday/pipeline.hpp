#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "faraday/decay_fit.hpp"
#include "faraday/estimation.hpp"
#include "faraday/lockin.hpp"
#include "faraday/signal_synthesis.hpp"
#include "faraday/stats.hpp"

namespace faraday {

// Everything downstream of the detectors.
struct EstimationConfig {
  LockInConfig lockin{};
  NormalizationConfig normalization{};
  FitOptions fit{};
  // Step-response level the lock-in must reach before samples are fitted or
  // averaged; the skip is never shorter than min_settle_time_constants * tau.
  double settle_fraction = 1.0 - 1e-4;
  double min_settle_time_constants = 5.0;
  bool compensate_group_delay = true;

  void validate() const {
    lockin.validate();
    normalization.validate();
    detail::require<ConfigError>(settle_fraction > 0.0 && settle_fraction < 1.0,
                                 "estimation.settle_fraction must be in (0, 1) (got " + std::to_string(settle_fraction) + ")");
  }

  double settle_time() const {
    return std::max(min_settle_time_constants * lockin.time_constant, step_response_settling_time(lockin, settle_fraction));
  }
  // Low-frequency group delay of the cascade.
  double group_delay() const { return compensate_group_delay ? lockin.stages * lockin.time_constant : 0.0; }

  bool operator==(const EstimationConfig&) const = default;
};

// Lock-in aligned to the TOP drive, with the usual defaults otherwise.
inline EstimationConfig default_estimation_for(const RunConfig& run) {
  EstimationConfig est;
  est.lockin.reference_frequency = run.top.rotation_frequency;
  est.normalization.dark_segment_end = run.pre_probe_dark_time;
  return est;
}

struct PipelineResult {
  SampleStream rotation_angle;  // full rate, probe-on part only
  SampleStream demod_i;
  SampleStream demod_q;
  SampleStream magnitude;
  SampleStream phase;
  SampleStream atom_number_estimate;  // delay-compensated time axis
  double probe_on_time = 0.0;
  double settle_until = 0.0;          // s, first settled sample time on the estimate's axis
};

// Offset removal, power normalization, lock-in and conversion to atoms. The
// returned estimate starts at probe turn-on; its time axis is shifted back by
// the cascade's group delay.
inline PipelineResult extract_estimate(const SampleStream& diff, const SampleStream& monitor, const RunConfig& run,
                                       const EstimationConfig& est) {
  est.validate();
  est.normalization.validate_for(diff.sample_rate, run.pre_probe_dark_time);
  require_aligned(diff, monitor, "extract_estimate");

  const SampleStream diff0 = remove_offset(diff, est.normalization);
  const SampleStream monitor0 = remove_offset(monitor, est.normalization);
  const double t_on = diff.start_time + run.probe_on_time();
  const SampleStream diff_on = slice(diff0, t_on, diff0.end_time());
  const SampleStream monitor_on = slice(monitor0, t_on, monitor0.end_time());
  if (diff_on.empty()) throw EstimationError("extract_estimate: no probe-on samples");

  PipelineResult out;
  out.probe_on_time = diff_on.start_time;
  out.rotation_angle = normalize_power(diff_on, monitor_on, est.normalization, run.probe);
  DemodOutput iq = demodulate(out.rotation_angle, est.lockin);
  out.demod_i = std::move(iq.i);
  out.demod_q = std::move(iq.q);
  PolarOutput polar = magnitude_phase(out.demod_i, out.demod_q);
  out.magnitude = std::move(polar.magnitude);
  out.phase = std::move(polar.phase);
  out.atom_number_estimate = atoms_from_angle(out.magnitude, run.effective_coupling());
  const double delay = est.group_delay();
  out.atom_number_estimate.start_time -= delay;
  out.atom_number_estimate.metadata["group_delay_s"] = delay;
  out.settle_until = out.probe_on_time + est.settle_time() - delay;
  return out;
}

namespace detail {

// Mean over one carrier period of 4 cos^2(phi) / cos^2(2 theta0 cos phi): the
// factor mapping per-sample angle variance onto the in-phase lock-in output,
// including the slope of the exact asin inversion.
inline double inversion_noise_factor(double theta0, bool exact) {
  constexpr int points = 256;
  double acc = 0.0;
  for (int k = 0; k < points; ++k) {
    const double phi = 2.0 * std::numbers::pi * (k + 0.5) / points;
    const double c = std::cos(phi);
    const double slope = exact ? 1.0 / std::cos(2.0 * theta0 * c) : 1.0;
    acc += 4.0 * c * c * slope * slope;
  }
  return acc / points;
}

}  // namespace detail

// Attributes the estimate's residual variance about the fitted decay to its
// sources: photon shot noise on both detectors, random atom loss and
// electronic noise; whatever is left is reported as remainder.
inline NoiseReport noise_diagnostics(const SampleStream& estimate, const MeasurementRecord& record, const RunConfig& run,
                                     const EstimationConfig& est) {
  const std::size_t first = estimate.index_at_or_after(record.fit_begin);
  std::vector<double> residual;
  residual.reserve(estimate.size() - first);
  double model_mean = 0.0;
  for (std::size_t k = first; k < estimate.size(); ++k) {
    const double m = record.model(estimate.time_at(k));
    residual.push_back(estimate.values[k] - m);
    model_mean += m;
  }
  if (residual.size() < 2) throw ContractError("noise_diagnostics: fewer than two fitted samples");
  model_mean /= static_cast<double>(residual.size());

  const CouplingModel coupling = run.effective_coupling();
  const double g2 = coupling.coupling_strength * coupling.coupling_strength;
  const auto& probe = run.probe;
  const double fs = run.sample_rate;
  const double eta = probe.detection_efficiency;
  const double detected_pol = eta * probe.polarimeter_flux();
  const double detected_mon = eta * probe.monitor_flux();
  const double noise_gain = cascade_noise_gain(est.lockin, fs);
  const double theta0 = model_mean * coupling.coupling_strength;
  const double factor = detail::inversion_noise_factor(theta0, est.normalization.exact_inversion);
  const bool shot = probe.shot_noise != ShotNoiseModel::off;
  const double electronic_var = probe.electronic_noise_density * probe.electronic_noise_density * 0.5 * fs;

  NoiseReport rep;
  rep.measured_variance = stats::variance(residual);
  rep.measured_angle_variance = rep.measured_variance * g2;
  rep.equivalent_noise_bandwidth = 0.5 * noise_gain * fs;

  // Polarimeter: per-sample angle variance = diff variance / (eta phi_pol)^2.
  const double pol_angle_var = shot ? fs / detected_pol : 0.0;
  rep.predicted_polarimeter_shot_variance = pol_angle_var * factor * noise_gain / g2;
  // Monitor: the window average sets a slowly varying relative error on the
  // flux, which multiplies the whole signal.
  const double window = std::max(1.0, std::round(est.normalization.moving_average_window * fs));
  const double mon_shot_rel = shot ? fs / detected_mon / window : 0.0;
  const double mon_electronic_rel = electronic_var / (detected_mon * detected_mon) / window;
  const double signal2 = model_mean * model_mean;
  rep.predicted_monitor_shot_variance = mon_shot_rel * signal2;
  rep.predicted_shot_variance = rep.predicted_polarimeter_shot_variance + rep.predicted_monitor_shot_variance;
  rep.predicted_electronic_variance =
      electronic_var / (detected_pol * detected_pol) * factor * noise_gain / g2 + mon_electronic_rel * signal2;

  // Expected residual variance of a binomial death process about its own
  // best-fit exponential: (tr C - tr P C) / n with P the fit's hat matrix.
  if (run.loss.stochastic && record.fitted_gamma > 0.0 && record.fitted_n0 > 0.0) {
    const std::size_t n = residual.size();
    std::vector<double> p(n), j0(n), j1(n);
    std::array<double, 3> normal{};
    long double trace_c = 0.0L;
    for (std::size_t k = 0; k < n; ++k) {
      const double t = estimate.time_at(first + k) - record.time_origin;
      p[k] = std::exp(-record.fitted_gamma * t);
      j0[k] = p[k];
      j1[k] = -record.fitted_n0 * t * p[k];
      normal[0] += j0[k] * j0[k];
      normal[1] += j0[k] * j1[k];
      normal[2] += j1[k] * j1[k];
      trace_c += record.fitted_n0 * p[k] * (1.0 - p[k]);
    }
    const std::array<double, 3> inv = detail::invert_sym2(normal);
    const double q00 = detail::death_process_form(j0, j0, p, record.fitted_n0);
    const double q01 = detail::death_process_form(j0, j1, p, record.fitted_n0);
    const double q11 = detail::death_process_form(j1, j1, p, record.fitted_n0);
    const double trace_pc = inv[0] * q00 + 2.0 * inv[1] * q01 + inv[2] * q11;
    rep.predicted_loss_variance = std::max(0.0, (static_cast<double>(trace_c) - trace_pc) / static_cast<double>(n));
  }
  rep.remainder_variance = rep.measured_variance - rep.predicted_shot_variance - rep.predicted_loss_variance -
                           rep.predicted_electronic_variance;

  const double dt_out = estimate.dt();
  const auto max_lag = static_cast<std::size_t>(std::ceil(20.0 * est.lockin.time_constant * estimate.sample_rate));
  const std::vector<double> rho = stats::autocorrelation(residual, std::min(max_lag, residual.size() - 1));
  rep.residual_correlation_time = stats::crossing_lag(rho, std::exp(-1.0)) * dt_out;
  const auto dec = static_cast<std::size_t>(est.lockin.decimation);
  const std::vector<double> rho_lp = cascade_noise_autocorrelation(est.lockin, fs, max_lag * dec);
  std::vector<double> rho_lp_dec;
  for (std::size_t k = 0; k < rho_lp.size(); k += dec) rho_lp_dec.push_back(rho_lp[k]);
  rep.lockin_correlation_time = stats::crossing_lag(rho_lp_dec, std::exp(-1.0)) * dt_out;
  rep.integrated_correlation_time = stats::integrated_autocorrelation_time(residual) * dt_out;
  return rep;
}

struct RunEstimate {
  PipelineResult streams;
  MeasurementRecord record;
};

// Full chain for one run's detector streams: estimate, decay fit and noise
// attribution.
inline RunEstimate estimate_run(const SampleStream& diff, const SampleStream& monitor, const RunConfig& run,
                                const EstimationConfig& est) {
  RunEstimate out;
  out.streams = extract_estimate(diff, monitor, run, est);
  FitOptions fit = est.fit;
  if (!fit.time_origin) fit.time_origin = out.streams.probe_on_time;
  const SampleStream& n_hat = out.streams.atom_number_estimate;
  out.record = fit_decay(n_hat, out.streams.settle_until - n_hat.start_time, fit);
  out.record.noise_report = noise_diagnostics(n_hat, out.record, run, est);
  return out;
}

inline RunEstimate simulate_and_estimate(const RunConfig& run, const EstimationConfig& est) {
  const RunStreams raw = synthesize_run(run);
  return estimate_run(raw.polarimeter_diff, raw.power_monitor, run, est);
}

}  // namespace faraday
