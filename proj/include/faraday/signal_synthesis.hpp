#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "faraday/core_model.hpp"
#include "faraday/error.hpp"
#include "faraday/rng.hpp"
#include "faraday/sample_stream.hpp"

namespace faraday {

// Atom loss. The probe-induced part scales with the configured photon flux
// (absorption of the far-detuned light), the background part does not.
struct LossModel {
  double absorption_loss_coefficient = 3.6e-10;  // 1/s per (photons/s)
  double background_loss_rate = 0.1;             // 1/s
  bool stochastic = true;                        // binomial thinning vs expectation

  double total_rate(double photon_flux) const { return absorption_loss_coefficient * photon_flux + background_loss_rate; }

  void validate() const {
    detail::require<ConfigError>(absorption_loss_coefficient >= 0.0,
                                 "loss.absorption_loss_coefficient must be >= 0 (got " +
                                     std::to_string(absorption_loss_coefficient) + ")");
    detail::require<ConfigError>(background_loss_rate >= 0.0, "loss.background_loss_rate must be >= 0 1/s (got " +
                                                                  std::to_string(background_loss_rate) + ")");
  }

  bool operator==(const LossModel&) const = default;
};

struct RunConfig {
  double duration = 1.0;              // s, includes the dark segment
  double sample_rate = 250e3;         // Hz
  std::uint64_t seed = 1;
  double pre_probe_dark_time = 0.05;  // s, probe off
  EnsembleState ensemble{};
  TopFieldConfig top{};
  CouplingModel coupling{};
  ProbeDetectorConfig probe{};
  LossModel loss{};

  static constexpr double min_samples_per_rotation = 20.0;

  std::size_t sample_count() const { return static_cast<std::size_t>(std::llround(duration * sample_rate)); }
  // First sample with the probe on.
  std::size_t probe_on_index() const {
    return static_cast<std::size_t>(std::max(0.0, std::ceil(pre_probe_dark_time * sample_rate - 1e-9)));
  }
  double probe_on_time() const { return static_cast<double>(probe_on_index()) / sample_rate; }
  // Coupling at the configured probe detuning.
  CouplingModel effective_coupling() const { return coupling.at_detuning(probe.detuning); }
  double loss_rate() const { return loss.total_rate(probe.photon_flux); }

  // Integrated loss exponent from t = 0 to t, including the drift of the
  // probe power and the probe-off dark segment.
  double loss_exponent(double t) const {
    double lambda = loss.background_loss_rate * t;
    const double t_on = probe_on_time();
    if (t > t_on) lambda += loss.absorption_loss_coefficient * probe.photon_flux * probe.drift_integral(t_on, t);
    return lambda;
  }

  void validate() const {
    ensemble.validate();
    top.validate();
    coupling.validate();
    probe.validate();
    loss.validate();
    detail::require<ConfigError>(duration > 0.0, "run.duration must be > 0 s (got " + std::to_string(duration) + ")");
    detail::require<ConfigError>(pre_probe_dark_time >= 0.0,
                                 "run.pre_probe_dark_time must be >= 0 s (got " + std::to_string(pre_probe_dark_time) + ")");
    detail::require<ConfigError>(duration > pre_probe_dark_time,
                                 "run.duration (" + std::to_string(duration) + " s) must exceed run.pre_probe_dark_time (" +
                                     std::to_string(pre_probe_dark_time) + " s)");
    detail::require<ConfigError>(sample_rate >= min_samples_per_rotation * top.rotation_frequency,
                                 "run.sample_rate (" + std::to_string(sample_rate) +
                                     " Hz) must be >= 20 x top.rotation_frequency (" +
                                     std::to_string(top.rotation_frequency) + " Hz)");
    detail::require<ConfigError>(sample_count() >= 2, "run must contain at least two samples");
  }

  bool operator==(const RunConfig&) const = default;
};

struct RunStreams {
  SampleStream polarimeter_diff;
  SampleStream power_monitor;
  SampleStream atom_number_truth;
  double final_atom_number = 0.0;  // atoms at t = duration
};

namespace detail {

inline std::int64_t binomial_survivors(std::int64_t n, double loss_exponent, Rng& rng) {
  if (n <= 0 || loss_exponent <= 0.0) return std::max<std::int64_t>(n, 0);
  // Draw the number lost; it is usually the smaller parameter.
  const double p_loss = -std::expm1(-loss_exponent);
  if (p_loss >= 1.0) return 0;
  std::binomial_distribution<std::int64_t> lost(n, p_loss);
  return n - lost(rng);
}

}  // namespace detail

// One binomial thinning step: every atom survives dt with probability
// exp(-gamma dt).
inline std::int64_t evolve_atom_number(std::int64_t n_current, double gamma, double dt, Rng& rng) {
  if (gamma < 0.0) throw ContractError("evolve_atom_number: gamma must be >= 0");
  if (!(dt > 0.0)) throw ContractError("evolve_atom_number: dt must be > 0");
  return detail::binomial_survivors(n_current, gamma * dt, rng);
}

namespace detail {

enum Substream : std::uint64_t { atoms = 0, pol_shot = 1, pol_electronic = 2, mon_shot = 3, mon_electronic = 4 };

class ShotNoise {
 public:
  ShotNoise(ShotNoiseModel model, double sample_rate, Rng rng) : model_(model), fs_(sample_rate), rng_(rng) {}

  // Zero-mean fluctuation, in photons/s, of a detected flux; variance is the
  // detected photon count per sample scaled to a rate.
  double operator()(double detected_flux) {
    if (model_ == ShotNoiseModel::off || detected_flux <= 0.0) return 0.0;
    if (model_ == ShotNoiseModel::poisson) {
      const double mean_counts = detected_flux / fs_;
      std::poisson_distribution<std::int64_t> counts(mean_counts);
      return (static_cast<double>(counts(rng_)) - mean_counts) * fs_;
    }
    return std::sqrt(detected_flux * fs_) * normal_(rng_);
  }

 private:
  ShotNoiseModel model_;
  double fs_;
  Rng rng_;
  std::normal_distribution<double> normal_{};
};

class WhiteNoise {
 public:
  // density is one-sided, per sqrt(Hz); the band is [0, fs/2].
  WhiteNoise(double density, double sample_rate, Rng rng)
      : sigma_(density * std::sqrt(0.5 * sample_rate)), rng_(rng) {}
  double operator()() { return sigma_ > 0.0 ? sigma_ * normal_(rng_) : 0.0; }

 private:
  double sigma_;
  Rng rng_;
  std::normal_distribution<double> normal_{};
};

}  // namespace detail

// Raw detector streams of one run: balanced-polarimeter difference, power
// monitor and the true atom number at every sample. Identical configs give
// bit-identical output.
inline RunStreams synthesize_run(const RunConfig& config) {
  config.validate();
  const std::size_t n = config.sample_count();
  const double fs = config.sample_rate;
  const std::size_t k_on = config.probe_on_index();
  const auto& probe = config.probe;
  const double eta = probe.detection_efficiency;
  const double tap = probe.monitor_tap;
  const CouplingModel coupling = config.effective_coupling();

  RunStreams out;
  out.polarimeter_diff = {fs, 0.0, Channel::polarimeter_diff, std::vector<double>(n), {}};
  out.power_monitor = {fs, 0.0, Channel::power_monitor, std::vector<double>(n), {}};
  out.atom_number_truth = {fs, 0.0, Channel::atom_number_truth, std::vector<double>(n), {}};

  Rng atom_rng = substream(config.seed, detail::atoms);
  detail::ShotNoise pol_shot(probe.shot_noise, fs, substream(config.seed, detail::pol_shot));
  detail::ShotNoise mon_shot(probe.shot_noise, fs, substream(config.seed, detail::mon_shot));
  detail::WhiteNoise pol_el(probe.electronic_noise_density, fs, substream(config.seed, detail::pol_electronic));
  detail::WhiteNoise mon_el(probe.electronic_noise_density, fs, substream(config.seed, detail::mon_electronic));

  const double n0 = config.ensemble.atom_number;
  std::int64_t atoms = std::llround(n0);
  double prev_exponent = 0.0;
  EnsembleState state = config.ensemble;

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fs;
    const double exponent = config.loss_exponent(t);
    if (config.loss.stochastic) {
      atoms = detail::binomial_survivors(atoms, exponent - prev_exponent, atom_rng);
      state.atom_number = static_cast<double>(atoms);
    } else {
      state.atom_number = n0 * std::exp(-exponent);
    }
    prev_exponent = exponent;
    out.atom_number_truth.values[k] = state.atom_number;

    double diff = probe.polarimeter_offset;
    double monitor = probe.monitor_offset;
    if (k >= k_on) {
      const double flux = probe.photon_flux * probe.drift_factor(t);
      const double pol_flux = (1.0 - tap) * flux;
      const double theta = faraday_angle(coupling, spin_projection(state, config.top, t));
      diff += eta * stokes_s2(pol_flux, theta, true) + pol_shot(eta * pol_flux);
      monitor += eta * tap * flux + mon_shot(eta * tap * flux);
    }
    out.polarimeter_diff.values[k] = diff + pol_el();
    out.power_monitor.values[k] = monitor + mon_el();
  }

  const double final_exponent = config.loss_exponent(config.duration);
  out.final_atom_number = config.loss.stochastic
                              ? static_cast<double>(detail::binomial_survivors(atoms, final_exponent - prev_exponent, atom_rng))
                              : n0 * std::exp(-final_exponent);
  return out;
}

// Expected atom number N0 exp(-integrated loss) on the run's sample grid.
inline SampleStream mean_decay_envelope(const RunConfig& config) {
  config.validate();
  const std::size_t n = config.sample_count();
  SampleStream out{config.sample_rate, 0.0, Channel::atom_number_envelope, std::vector<double>(n), {}};
  for (std::size_t k = 0; k < n; ++k)
    out.values[k] = config.ensemble.atom_number * std::exp(-config.loss_exponent(static_cast<double>(k) / config.sample_rate));
  return out;
}

}  // namespace faraday
