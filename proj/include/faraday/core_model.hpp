#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "faraday/error.hpp"

namespace faraday {

// Atom-number state of the trapped ensemble. atom_number is real-valued so
// that deterministic runs can carry expectation values.
struct EnsembleState {
  double atom_number = 1e6;          // atoms
  int spin_sign = +1;                // +1 or -1, orientation along the rotating field
  double initial_atom_number = 1e6;  // atoms, run metadata

  void validate() const {
    detail::require<ConfigError>(atom_number >= 0.0 && std::isfinite(atom_number),
                                 "ensemble.atom_number must be >= 0 (got " + std::to_string(atom_number) + ")");
    detail::require<ConfigError>(spin_sign == 1 || spin_sign == -1,
                                 "ensemble.spin_sign must be +1 or -1 (got " + std::to_string(spin_sign) + ")");
    detail::require<ConfigError>(initial_atom_number >= 0.0,
                                 "ensemble.initial_atom_number must be >= 0 (got " +
                                     std::to_string(initial_atom_number) + ")");
  }

  bool operator==(const EnsembleState&) const = default;
};

// Rotating bias field of the TOP trap.
struct TopFieldConfig {
  double rotation_frequency = 5e3;  // Hz
  double initial_phase = 0.0;       // rad

  double angular_frequency() const { return 2.0 * std::numbers::pi * rotation_frequency; }

  void validate() const {
    detail::require<ConfigError>(rotation_frequency > 0.0 && std::isfinite(rotation_frequency),
                                 "top.rotation_frequency must be > 0 Hz (got " +
                                     std::to_string(rotation_frequency) + ")");
  }

  bool operator==(const TopFieldConfig&) const = default;
};

// Light-atom coupling. coupling_strength already contains the per-atom spin
// projection of the trapped Zeeman state, so theta_F = coupling_strength * N.
struct CouplingModel {
  double coupling_strength = 1e-7;   // rad per atom, quoted at reference_detuning
  double reference_detuning = 5e9;   // Hz

  // Only a 1/detuning scaling is modeled.
  double effective_strength(double detuning) const { return coupling_strength * reference_detuning / detuning; }

  // Same model requoted at another probe detuning.
  CouplingModel at_detuning(double detuning) const { return {effective_strength(detuning), detuning}; }

  void validate() const {
    detail::require<ConfigError>(coupling_strength > 0.0 && std::isfinite(coupling_strength),
                                 "coupling.coupling_strength must be > 0 rad/atom (got " +
                                     std::to_string(coupling_strength) + ")");
    detail::require<ConfigError>(reference_detuning > 0.0,
                                 "coupling.reference_detuning must be > 0 Hz (got " +
                                     std::to_string(reference_detuning) + ")");
  }

  bool operator==(const CouplingModel&) const = default;
};

enum class ShotNoiseModel { gaussian, poisson, off };

// Probe beam and detection chain. photon_flux is the flux before the monitor
// tap; the atoms and the polarimeter see (1 - monitor_tap) of it.
struct ProbeDetectorConfig {
  double photon_flux = 2.5e9;              // photons/s
  double detection_efficiency = 0.87;
  double monitor_tap = 0.20;               // power fraction sent to the monitor photodiode
  double detuning = 5e9;                   // Hz
  double polarimeter_offset = 5e6;         // photons/s equivalent
  double monitor_offset = 2e6;             // photons/s equivalent
  double electronic_noise_density = 1e4;   // photons/s RMS per sqrt(Hz)
  ShotNoiseModel shot_noise = ShotNoiseModel::gaussian;
  // Optional slow power drift: phi(t) = phi * (1 + a sin(2 pi f t) + r t)
  double drift_amplitude = 0.0;            // relative
  double drift_frequency = 0.0;            // Hz
  double drift_ramp = 0.0;                 // relative per second

  double polarimeter_flux() const { return (1.0 - monitor_tap) * photon_flux; }
  double monitor_flux() const { return monitor_tap * photon_flux; }

  // Relative power factor at time t (probe on).
  double drift_factor(double t) const {
    double f = 1.0 + drift_ramp * t;
    if (drift_amplitude != 0.0 && drift_frequency > 0.0)
      f += drift_amplitude * std::sin(2.0 * std::numbers::pi * drift_frequency * t);
    return f;
  }

  // Integral of drift_factor over [t0, t1].
  double drift_integral(double t0, double t1) const {
    double v = (t1 - t0) + 0.5 * drift_ramp * (t1 * t1 - t0 * t0);
    if (drift_amplitude != 0.0 && drift_frequency > 0.0) {
      const double w = 2.0 * std::numbers::pi * drift_frequency;
      v += drift_amplitude * (std::cos(w * t0) - std::cos(w * t1)) / w;
    }
    return v;
  }

  void validate() const {
    detail::require<ConfigError>(photon_flux > 0.0 && std::isfinite(photon_flux),
                                 "probe.photon_flux must be > 0 photons/s (got " + std::to_string(photon_flux) + ")");
    detail::require<ConfigError>(detection_efficiency > 0.0 && detection_efficiency <= 1.0,
                                 "probe.detection_efficiency must be in (0, 1] (got " +
                                     std::to_string(detection_efficiency) + ")");
    detail::require<ConfigError>(monitor_tap > 0.0 && monitor_tap < 1.0,
                                 "probe.monitor_tap must be in (0, 1) (got " + std::to_string(monitor_tap) + ")");
    detail::require<ConfigError>(detuning > 0.0, "probe.detuning must be > 0 Hz (got " + std::to_string(detuning) + ")");
    detail::require<ConfigError>(electronic_noise_density >= 0.0,
                                 "probe.electronic_noise_density must be >= 0 (got " +
                                     std::to_string(electronic_noise_density) + ")");
    detail::require<ConfigError>(std::abs(drift_amplitude) < 1.0,
                                 "probe.drift_amplitude must be in (-1, 1) (got " + std::to_string(drift_amplitude) + ")");
    detail::require<ConfigError>(drift_frequency >= 0.0,
                                 "probe.drift_frequency must be >= 0 Hz (got " + std::to_string(drift_frequency) + ")");
  }

  bool operator==(const ProbeDetectorConfig&) const = default;
};

// Ensemble spin component along the probe, F_x(t). The spin follows the
// rotating field, so the projection oscillates at the rotation frequency.
inline double spin_projection(const EnsembleState& ensemble, const TopFieldConfig& top, double t) {
  return ensemble.spin_sign * ensemble.atom_number * std::cos(top.angular_frequency() * t + top.initial_phase);
}

inline double faraday_angle(const CouplingModel& coupling, double f_x) { return coupling.coupling_strength * f_x; }

// S2 = (flux / 2) sin(2 theta) in exact mode, flux * theta in the small-angle
// approximation.
inline double stokes_s2(double flux, double theta_f, bool exact) {
  return exact ? 0.5 * flux * std::sin(2.0 * theta_f) : flux * theta_f;
}

}  // namespace faraday
