#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "faraday/pipeline.hpp"

using namespace faraday;

namespace {

RunConfig noiseless_run() {
  RunConfig run;
  run.probe.shot_noise = ShotNoiseModel::off;
  run.probe.electronic_noise_density = 0.0;
  run.loss.stochastic = false;
  return run;
}

SampleStream constant(double value, std::size_t n, double rate = 1e4) {
  return {rate, 0.0, Channel::polarimeter_diff, std::vector<double>(n, value), {}};
}

// Relative peak-to-peak of a stream over [t0, t1).
double relative_modulation(const SampleStream& s, double t0, double t1) {
  double lo = 1e300, hi = -1e300, sum = 0.0;
  std::size_t n = 0;
  for (std::size_t k = s.index_at_or_after(t0); k < s.index_at_or_after(t1); ++k) {
    lo = std::min(lo, s.values[k]);
    hi = std::max(hi, s.values[k]);
    sum += s.values[k];
    ++n;
  }
  return (hi - lo) / 2 / (sum / static_cast<double>(n));
}

}  // namespace

TEST(RemoveOffset, ConstantStreamBecomesZero) {
  NormalizationConfig cfg;
  cfg.dark_segment_end = 0.01;
  const SampleStream out = remove_offset(constant(3.25, 500), cfg);
  for (double v : out.values) ASSERT_EQ(v, 0.0);
  EXPECT_EQ(out.metadata.at("offset_removed"), 3.25);
}

TEST(RemoveOffset, RecoversInjectedOffset) {
  NormalizationConfig cfg;
  cfg.dark_segment_end = 0.5;
  SampleStream s = constant(0.0, 20000);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 2.0);
  const double b = 17.5;
  for (double& v : s.values) v = b + noise(rng);
  const SampleStream out = remove_offset(s, cfg);
  const double n_dark = out.metadata.at("offset_dark_samples");
  EXPECT_EQ(n_dark, 5000.0);
  EXPECT_NEAR(out.metadata.at("offset_removed"), b, 3 * 2.0 / std::sqrt(n_dark));
}

TEST(RemoveOffset, IdempotentOnCenteredDarkSegment) {
  NormalizationConfig cfg;
  cfg.dark_segment_end = 0.5;
  SampleStream s = constant(0.0, 20000);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (double& v : s.values) v = 4.0 + noise(rng);
  const SampleStream once = remove_offset(s, cfg);
  const SampleStream twice = remove_offset(once, cfg);
  for (std::size_t k = 0; k < s.size(); k += 101) EXPECT_LT(std::abs(twice.values[k] - once.values[k]), 1.0 / std::sqrt(5000.0));
}

TEST(RemoveOffset, EmptyDarkSegmentIsContractError) {
  NormalizationConfig cfg;
  cfg.dark_segment_begin = 2.0;
  cfg.dark_segment_end = 3.0;
  EXPECT_THROW(remove_offset(constant(1.0, 100), cfg), ContractError);
}

TEST(CenteredMovingAverage, MatchesDirectSum) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> x(300);
  for (double& v : x) v = u(rng);
  for (std::size_t window : {1u, 4u, 11u, 50u}) {
    const std::vector<double> m = centered_moving_average(x, window);
    const std::size_t half = window / 2;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const std::size_t lo = k >= half ? k - half : 0, hi = std::min(x.size(), k + half + 1);
      double s = 0.0;
      for (std::size_t j = lo; j < hi; ++j) s += x[j];
      ASSERT_NEAR(m[k], s / static_cast<double>(hi - lo), 1e-14);
    }
  }
}

TEST(UnwrappedAsin, FollowsPhaseBeyondQuarterTurn) {
  std::vector<double> phase(4000), s(4000);
  for (std::size_t k = 0; k < phase.size(); ++k) {
    phase[k] = 2.2 * std::cos(2 * std::numbers::pi * k / 200.0) * std::exp(-static_cast<double>(k) / 3000.0);
    s[k] = std::sin(phase[k]);
  }
  const std::vector<double> p = unwrapped_asin(s);
  for (std::size_t k = 0; k < p.size(); ++k) {
    // Right at a turning point on +-pi/2 both branches fit the data; the
    // error is then bounded by their separation.
    const double gap = 2.0 * std::abs(std::numbers::pi / 2 - std::abs(phase[k]));
    ASSERT_NEAR(p[k], phase[k], std::abs(std::cos(phase[k])) < 0.05 ? gap + 1e-9 : 1e-9) << k;
  }
}

TEST(UnwrappedAsin, DecayingCarrierThroughQuarterTurn) {
  // Carrier amplitude decaying through pi/2 at 50 samples per period.
  std::vector<double> phase(50000), s(50000);
  for (std::size_t k = 0; k < phase.size(); ++k) {
    const double t = 0.05 + static_cast<double>(k) / 250e3;
    phase[k] = 2.0 * std::exp(-t) * std::cos(2 * std::numbers::pi * 5e3 * t);
    s[k] = std::sin(phase[k]);
  }
  const std::vector<double> p = unwrapped_asin(s);
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) worst = std::max(worst, std::abs(p[k] - phase[k]));
  EXPECT_LT(worst, 5e-3);
}

TEST(UnwrappedAsin, SmallArgumentsArePlainAsin) {
  const std::vector<double> s = {0.0, 0.1, -0.2, 0.05, 0.3};
  const std::vector<double> p = unwrapped_asin(s);
  for (std::size_t k = 0; k < s.size(); ++k) EXPECT_DOUBLE_EQ(p[k], std::asin(s[k]));
}

TEST(NormalizePower, ZeroDifferenceGivesZeroAngle) {
  NormalizationConfig cfg;
  const SampleStream out = normalize_power(constant(0.0, 2000), constant(1e8, 2000), cfg, ProbeDetectorConfig{});
  for (double v : out.values) ASSERT_EQ(v, 0.0);
  EXPECT_EQ(out.channel, Channel::rotation_angle);
}

TEST(NormalizePower, NonPositiveMonitorIsEstimationError) {
  NormalizationConfig cfg;
  SampleStream monitor = constant(1e8, 2000);
  for (std::size_t k = 1000; k < 1500; ++k) monitor.values[k] = -1e9;
  EXPECT_THROW(normalize_power(constant(0.0, 2000), monitor, cfg, ProbeDetectorConfig{}), EstimationError);
  EXPECT_THROW(normalize_power(constant(0.0, 2000), constant(0.0, 2000), cfg, ProbeDetectorConfig{}), EstimationError);
}

TEST(NormalizePower, RejectsMisalignedStreams) {
  NormalizationConfig cfg;
  EXPECT_THROW(normalize_power(constant(0.0, 2000), constant(1.0, 1999), cfg, ProbeDetectorConfig{}), ContractError);
}

TEST(NormalizePower, NoiselessCarrierMatchesCouplingTimesAtoms) {
  RunConfig run = noiseless_run();
  run.duration = 0.3;
  const RunStreams raw = synthesize_run(run);
  const NormalizationConfig cfg = default_estimation_for(run).normalization;
  const SampleStream d = remove_offset(raw.polarimeter_diff, cfg);
  const SampleStream m = remove_offset(raw.power_monitor, cfg);
  const double t_on = run.probe_on_time();
  const SampleStream theta = normalize_power(slice(d, t_on, 1.0), slice(m, t_on, 1.0), cfg, run.probe);
  const double g = run.coupling.coupling_strength;
  const double w = run.top.angular_frequency();
  for (std::size_t k = 0; k < theta.size(); k += 13) {
    const double t = theta.time_at(k);
    const double n = raw.atom_number_truth.values[raw.atom_number_truth.index_at_or_after(t)];
    ASSERT_NEAR(theta.values[k], g * n * std::cos(w * t), 1e-3 * g * n) << t;
  }
}

TEST(NormalizePower, SmallAngleModeDividesByFlux) {
  NormalizationConfig cfg;
  cfg.exact_inversion = false;
  ProbeDetectorConfig probe;
  SampleStream diff = constant(0.0, 1000);
  const double monitor = 2e8;
  const double pol = monitor * (1 - probe.monitor_tap) / probe.monitor_tap;
  for (std::size_t k = 0; k < diff.size(); ++k) diff.values[k] = pol * 0.01 * std::sin(0.1 * k);
  const SampleStream out = normalize_power(diff, constant(monitor, 1000), cfg, probe);
  for (std::size_t k = 0; k < diff.size(); ++k) ASSERT_NEAR(out.values[k], 0.01 * std::sin(0.1 * k), 1e-15);
}

TEST(NormalizePower, SlowPowerDriftDividesOut) {
  RunConfig run = noiseless_run();
  run.loss.absorption_loss_coefficient = 0.0;
  run.loss.background_loss_rate = 0.0;
  run.probe.drift_amplitude = 0.01;
  run.probe.drift_frequency = 3.0;
  const RunEstimate r = simulate_and_estimate(run, default_estimation_for(run));
  const SampleStream& n_hat = r.streams.atom_number_estimate;
  EXPECT_LT(relative_modulation(n_hat, r.streams.settle_until, n_hat.end_time() - 0.01), 1e-3);
}

TEST(AtomsFromAngle, ZeroAndInverseProportional) {
  SampleStream r{1e3, 0.0, Channel::demod_magnitude, {0.0, 0.1, 0.05}, {}};
  CouplingModel c;
  const SampleStream a = atoms_from_angle(r, c);
  EXPECT_EQ(a.values[0], 0.0);
  EXPECT_EQ(a.channel, Channel::atom_number_estimate);
  CouplingModel c2 = c;
  c2.coupling_strength *= 2.0;
  const SampleStream b = atoms_from_angle(r, c2);
  for (std::size_t k = 0; k < r.size(); ++k) EXPECT_EQ(b.values[k], a.values[k] / 2.0);
}

TEST(Pipeline, NoiselessEstimateUnbiasedAcrossAtomNumbers) {
  for (double n0 : {1e3, 1e4, 1e5, 1e6, 1e7}) {
    RunConfig run = noiseless_run();
    run.ensemble.atom_number = n0;
    run.duration = 0.25;
    const RunStreams raw = synthesize_run(run);
    const PipelineResult p = extract_estimate(raw.polarimeter_diff, raw.power_monitor, run, default_estimation_for(run));
    const SampleStream& n_hat = p.atom_number_estimate;
    double worst = 0.0;
    for (std::size_t k = n_hat.index_at_or_after(p.settle_until); k < n_hat.size(); ++k) {
      const double truth = raw.atom_number_truth.values[raw.atom_number_truth.index_at_or_after(n_hat.time_at(k))];
      worst = std::max(worst, std::abs(n_hat.values[k] - truth) / truth);
    }
    EXPECT_LE(worst, 2e-3) << n0;
  }
}

TEST(Pipeline, EstimateInvariantUnderFluxScaling) {
  RunConfig run = noiseless_run();
  run.loss.absorption_loss_coefficient = 0.0;
  run.duration = 0.3;
  const EstimationConfig est = default_estimation_for(run);
  const RunStreams a = synthesize_run(run);
  run.probe.photon_flux *= 7.0;
  const RunStreams b = synthesize_run(run);
  const PipelineResult pa = extract_estimate(a.polarimeter_diff, a.power_monitor, run, est);
  const PipelineResult pb = extract_estimate(b.polarimeter_diff, b.power_monitor, run, est);
  for (std::size_t k = pa.atom_number_estimate.index_at_or_after(pa.settle_until); k < pa.atom_number_estimate.size(); ++k)
    ASSERT_NEAR(pb.atom_number_estimate.values[k] / pa.atom_number_estimate.values[k], 1.0, 1e-3);
}

TEST(Pipeline, GroupDelayShiftsTimeAxis) {
  RunConfig run = noiseless_run();
  run.duration = 0.2;
  EstimationConfig est = default_estimation_for(run);
  const RunStreams raw = synthesize_run(run);
  const PipelineResult with = extract_estimate(raw.polarimeter_diff, raw.power_monitor, run, est);
  est.compensate_group_delay = false;
  const PipelineResult without = extract_estimate(raw.polarimeter_diff, raw.power_monitor, run, est);
  EXPECT_NEAR(without.atom_number_estimate.start_time - with.atom_number_estimate.start_time, 2e-3, 1e-15);
  EXPECT_EQ(with.atom_number_estimate.values, without.atom_number_estimate.values);
}

TEST(NormalizationConfig, DarkSegmentMustLieInDarkTime) {
  NormalizationConfig cfg;
  cfg.dark_segment_end = 0.06;
  EXPECT_THROW(cfg.validate_for(250e3, 0.05), ConfigError);
  cfg.dark_segment_end = 0.05;
  EXPECT_NO_THROW(cfg.validate_for(250e3, 0.05));
  cfg.moving_average_window = 1e-5;
  EXPECT_THROW(cfg.validate_for(250e3, 0.05), ConfigError);
}
