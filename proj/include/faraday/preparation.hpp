#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "faraday/pipeline.hpp"

namespace faraday {

struct PreparationPolicy {
  double target_atom_number = 5e5;      // atoms
  double tolerance = 0.01;              // relative
  int max_iterations = 6;
  double probe_window = 0.1;            // s of probe light per measurement
  double cut_undershoot_factor = 0.8;   // fraction of the excess removed per cut
  double actuation_relative_error = 0.02;
  double initial_relative_spread = 0.1; // shot-to-shot spread of the loaded atom number
  // Account for the atoms the next measurement itself removes.
  bool compensate_measurement_loss = true;

  void validate() const {
    detail::require<ConfigError>(target_atom_number > 0.0, "policy.target_atom_number must be > 0 (got " +
                                                               std::to_string(target_atom_number) + ")");
    detail::require<ConfigError>(tolerance > 0.0, "policy.tolerance must be > 0 (got " + std::to_string(tolerance) + ")");
    detail::require<ConfigError>(max_iterations >= 1,
                                 "policy.max_iterations must be >= 1 (got " + std::to_string(max_iterations) + ")");
    detail::require<ConfigError>(probe_window > 0.0, "policy.probe_window must be > 0 s (got " + std::to_string(probe_window) + ")");
    detail::require<ConfigError>(cut_undershoot_factor > 0.0 && cut_undershoot_factor <= 1.0,
                                 "policy.cut_undershoot_factor must be in (0, 1] (got " +
                                     std::to_string(cut_undershoot_factor) + ")");
    detail::require<ConfigError>(actuation_relative_error >= 0.0, "policy.actuation_relative_error must be >= 0 (got " +
                                                                      std::to_string(actuation_relative_error) + ")");
    detail::require<ConfigError>(initial_relative_spread >= 0.0, "policy.initial_relative_spread must be >= 0 (got " +
                                                                     std::to_string(initial_relative_spread) + ")");
  }

  bool operator==(const PreparationPolicy&) const = default;
};

// Everything a measurement needs besides the ensemble itself.
struct Apparatus {
  RunConfig run{};
  EstimationConfig estimation{};

  bool operator==(const Apparatus&) const = default;
};

struct Measurement {
  double mean_estimate = 0.0;      // atoms, average over the settled window
  double mean_uncertainty = 0.0;   // atoms, standard error
  double end_estimate = 0.0;       // atoms, extrapolated to the end of the measurement
  double end_uncertainty = 0.0;
  double truth_before = 0.0;       // atoms
  EnsembleState state_after{};
  double survival = 1.0;           // expected fraction of atoms surviving one measurement
};

// Configuration of one measurement of `window` seconds of probe light.
inline RunConfig measurement_run(const Apparatus& apparatus, const EnsembleState& state, double window) {
  RunConfig run = apparatus.run;
  run.ensemble = state;
  run.duration = run.pre_probe_dark_time + window;
  return run;
}

inline double measurement_survival(const Apparatus& apparatus, double window) {
  const RunConfig run = measurement_run(apparatus, apparatus.run.ensemble, window);
  return std::exp(-run.loss_exponent(run.duration));
}

// One minimally destructive measurement: synthesize, demodulate, normalize and
// average the settled part of the trace. The average is coherent (mean I and
// Q first, then the magnitude), so an empty trap reads zero on average.
inline Measurement measure_once(const EnsembleState& state, const Apparatus& apparatus, double window, Rng& rng) {
  const EstimationConfig& est = apparatus.estimation;
  const double settle = est.settle_time();
  detail::require<ConfigError>(window >= 10.0 * est.lockin.time_constant,
                               "measurement window (" + std::to_string(window) + " s) must be >= 10 lock-in time constants (" +
                                   std::to_string(10.0 * est.lockin.time_constant) + " s)");
  RunConfig run = measurement_run(apparatus, state, window);
  run.seed = rng();
  const RunStreams raw = synthesize_run(run);
  const PipelineResult p = extract_estimate(raw.polarimeter_diff, raw.power_monitor, run, est);

  const SampleStream& n_hat = p.atom_number_estimate;
  const std::size_t first = n_hat.index_at_or_after(p.settle_until);
  const std::size_t n = n_hat.size() - first;
  if (n < 10)
    throw ConfigError("measurement window (" + std::to_string(window) + " s) leaves " + std::to_string(n) +
                      " settled samples after the " + std::to_string(settle) + " s lock-in settling time; need >= 10");

  const double g = run.effective_coupling().coupling_strength;
  const double gamma = run.loss_rate();
  // Expected shape of N(t) relative to its value at the end of the run.
  std::vector<double> shape(n);
  double shape_mean = 0.0, i_mean = 0.0, q_mean = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    shape[k] = std::exp(-gamma * (n_hat.time_at(first + k) - run.duration));
    shape_mean += shape[k];
    i_mean += p.demod_i.values[first + k];
    q_mean += p.demod_q.values[first + k];
  }
  shape_mean /= static_cast<double>(n);
  i_mean /= static_cast<double>(n);
  q_mean /= static_cast<double>(n);
  const double amplitude = std::hypot(i_mean, q_mean);

  // Standard error from the in-phase projection about the expected shape.
  const double ci = amplitude > 0.0 ? i_mean / amplitude : 1.0;
  const double cq = amplitude > 0.0 ? q_mean / amplitude : 0.0;
  std::vector<double> proj(n);
  long double sxy = 0.0L, sxx = 0.0L;
  for (std::size_t k = 0; k < n; ++k) {
    proj[k] = ci * p.demod_i.values[first + k] + cq * p.demod_q.values[first + k];
    sxy += shape[k] * proj[k];
    sxx += shape[k] * shape[k];
  }
  const double scale = static_cast<double>(sxy / sxx);
  std::vector<double> resid(n);
  for (std::size_t k = 0; k < n; ++k) resid[k] = proj[k] - scale * shape[k];
  const double tau_int = stats::integrated_autocorrelation_time(resid);
  const double se = std::sqrt(stats::sample_variance(resid) * tau_int / static_cast<double>(n));

  Measurement m;
  m.mean_estimate = amplitude / g;
  m.mean_uncertainty = se / g;
  m.end_estimate = m.mean_estimate / shape_mean;
  m.end_uncertainty = m.mean_uncertainty / shape_mean;
  m.truth_before = state.atom_number;
  m.state_after = state;
  m.state_after.atom_number = raw.final_atom_number;
  m.survival = std::exp(-run.loss_exponent(run.duration));
  return m;
}

// Removes a fraction f (1 + e) of the atoms, e ~ Normal(0, actuation error),
// clamped to [0, 1). Stochastic mode thins the integer atom number
// binomially; otherwise the result is N (1 - f) rounded.
inline EnsembleState apply_cut(const EnsembleState& state, double fraction, const PreparationPolicy& policy, bool stochastic,
                               Rng& rng) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ContractError("apply_cut: fraction must be in [0, 1) (got " + std::to_string(fraction) + ")");
  if (fraction == 0.0) return state;
  double f = fraction;
  if (policy.actuation_relative_error > 0.0) {
    std::normal_distribution<double> err(0.0, policy.actuation_relative_error);
    f *= 1.0 + err(rng);
  }
  f = std::clamp(f, 0.0, std::nextafter(1.0, 0.0));
  EnsembleState out = state;
  const auto atoms = static_cast<std::int64_t>(std::llround(state.atom_number));
  if (stochastic) {
    std::binomial_distribution<std::int64_t> removed(atoms, f);
    out.atom_number = static_cast<double>(atoms - removed(rng));
  } else {
    out.atom_number = std::round(state.atom_number * (1.0 - f));
  }
  return out;
}

enum class CutStage { none, staging, final_approach };

struct CutDecision {
  double fraction = 0.0;
  CutStage stage = CutStage::none;
  bool feasible = true;  // false: no cut can bring a later reading into tolerance
};

// Cut after a reading `estimate` taken at the end of a measurement that
// keeps `survival` of the atoms. The next reading sees survival x (state
// after the cut), so the cut aims at target / survival. Near that aim the cut
// removes cut_undershoot_factor of the excess, leaving at most a quarter of
// the tolerance. Far from it, where the actuation error of a large cut would
// exceed the tolerance, a staging cut first brings the ensemble to a point
// from which one more measurement lands near the aim.
inline CutDecision plan_cut(double estimate, const PreparationPolicy& policy, double survival) {
  const double s = policy.compensate_measurement_loss ? survival : 1.0;
  const double target = policy.target_atom_number;
  const double aim = target / s;
  const double u = policy.cut_undershoot_factor;
  CutDecision d;
  if (estimate < aim) {
    // No cut; only a plain re-measurement can still land in tolerance.
    d.feasible = s * estimate >= target * (1.0 - policy.tolerance);
    return d;
  }
  // Largest relative excess whose cut error (actuation_relative_error of
  // the removed part) stays within a sixth of the tolerance.
  const double final_span = policy.actuation_relative_error > 0.0
                                ? policy.tolerance / (6.0 * policy.actuation_relative_error)
                                : std::numeric_limits<double>::infinity();
  const double staging_aim = aim * (1.0 + 0.5 * final_span) / s;
  if (estimate > staging_aim && s < 1.0) {
    // The staging aim carries its own margin above the final aim.
    d.fraction = (estimate - staging_aim) / estimate;
    d.stage = CutStage::staging;
  } else {
    const double residual = std::min((1.0 - u) * (estimate - aim), 0.25 * policy.tolerance * aim);
    d.fraction = (estimate - aim - residual) / estimate;
    d.stage = CutStage::final_approach;
  }
  d.fraction = std::clamp(d.fraction, 0.0, std::nextafter(1.0, 0.0));
  return d;
}

struct TrajectoryStep {
  double truth_before = 0.0;        // atoms before the measurement
  double estimate = 0.0;            // atoms, reading at the end of the measurement
  double estimate_uncertainty = 0.0;
  double truth_after_measurement = 0.0;
  double cut_fraction = 0.0;        // nominal fraction requested
  double post_cut_truth = 0.0;      // atoms after the cut
  CutStage stage = CutStage::none;
};

struct PreparationResult {
  double final_atom_number = 0.0;   // ground truth
  double final_estimate = 0.0;
  double final_uncertainty = 0.0;
  int iterations_used = 0;
  std::vector<TrajectoryStep> trajectory;
  bool success = false;
  std::string diagnosis;
  double probe_loss_total = 0.0;    // atoms lost during measurements
  double cut_loss_total = 0.0;      // atoms removed by cuts
};

// Measure, decide, cut; repeat until the reading is within tolerance of the
// target or the iteration budget runs out. There is no gain mechanism, so a
// reading below target is terminal.
inline PreparationResult prepare(const EnsembleState& initial, const PreparationPolicy& policy, const Apparatus& apparatus,
                                 std::uint64_t seed) {
  policy.validate();
  apparatus.run.validate();
  apparatus.estimation.validate();
  const double plausible = initial.atom_number * (1.0 + 3.0 * policy.initial_relative_spread);
  if (policy.target_atom_number > plausible)
    throw PreparationError("infeasible target: " + std::to_string(policy.target_atom_number) + " atoms exceeds the plausible initial " +
                           std::to_string(plausible) + " atoms and atoms cannot be added");

  Rng rng(mix_seed(seed));
  const double survival = measurement_survival(apparatus, policy.probe_window);
  const double target = policy.target_atom_number;
  PreparationResult result;
  EnsembleState state = initial;

  for (int it = 0; it < policy.max_iterations; ++it) {
    const Measurement m = measure_once(state, apparatus, policy.probe_window, rng);
    TrajectoryStep step;
    step.truth_before = state.atom_number;
    step.estimate = policy.compensate_measurement_loss ? m.end_estimate : m.mean_estimate;
    step.estimate_uncertainty = policy.compensate_measurement_loss ? m.end_uncertainty : m.mean_uncertainty;
    step.truth_after_measurement = m.state_after.atom_number;
    result.probe_loss_total += state.atom_number - m.state_after.atom_number;
    state = m.state_after;

    result.final_estimate = step.estimate;
    result.final_uncertainty = step.estimate_uncertainty;
    result.iterations_used = it + 1;

    if (std::abs(step.estimate - target) / target <= policy.tolerance) {
      step.post_cut_truth = state.atom_number;
      result.trajectory.push_back(step);
      result.success = true;
      result.diagnosis = "within tolerance";
      break;
    }
    if (step.estimate < target) {
      step.post_cut_truth = state.atom_number;
      result.trajectory.push_back(step);
      result.diagnosis = "undershoot: reading below target and atoms cannot be added";
      break;
    }
    const CutDecision cut = plan_cut(step.estimate, policy, survival);
    if (!cut.feasible) {
      step.post_cut_truth = state.atom_number;
      result.trajectory.push_back(step);
      result.diagnosis = "undershoot: the next measurement's own loss would take the ensemble below tolerance";
      break;
    }
    const double before_cut = state.atom_number;
    state = apply_cut(state, cut.fraction, policy, apparatus.run.loss.stochastic, rng);
    result.cut_loss_total += before_cut - state.atom_number;
    step.cut_fraction = cut.fraction;
    step.stage = cut.stage;
    step.post_cut_truth = state.atom_number;
    result.trajectory.push_back(step);
    if (it + 1 == policy.max_iterations) result.diagnosis = "iteration budget exhausted";
  }
  result.final_atom_number = state.atom_number;
  return result;
}

}  // namespace faraday
