#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "faraday/signal_synthesis.hpp"
#include "faraday/stats.hpp"

using namespace faraday;

namespace {

RunConfig quiet_run() {
  RunConfig run;
  run.probe.shot_noise = ShotNoiseModel::off;
  run.probe.electronic_noise_density = 0.0;
  run.loss.stochastic = false;
  return run;
}

}  // namespace

TEST(EvolveAtomNumber, LosslessAndEmpty) {
  Rng rng(1);
  EXPECT_EQ(evolve_atom_number(12345, 0.0, 10.0, rng), 12345);
  EXPECT_EQ(evolve_atom_number(0, 3.0, 0.1, rng), 0);
}

TEST(EvolveAtomNumber, RejectsBadArguments) {
  Rng rng(1);
  EXPECT_THROW(evolve_atom_number(10, -1.0, 0.1, rng), ContractError);
  EXPECT_THROW(evolve_atom_number(10, 1.0, 0.0, rng), ContractError);
}

TEST(EvolveAtomNumber, HalfLifeMonteCarlo) {
  Rng rng(mix_seed(42));
  const int draws = 10000;
  double sum = 0.0, sum2 = 0.0;
  for (int k = 0; k < draws; ++k) {
    const auto n = static_cast<double>(evolve_atom_number(1000000, std::log(2.0), 1.0, rng));
    EXPECT_LE(n, 1e6);
    sum += n;
    sum2 += n * n;
  }
  const double mean = sum / draws;
  const double sigma_mean = std::sqrt(1e6 * 0.25) / std::sqrt(draws);  // 5 atoms
  EXPECT_NEAR(mean, 5e5, 5 * sigma_mean);
  const double var = sum2 / draws - mean * mean;
  EXPECT_NEAR(var, 2.5e5, 0.1 * 2.5e5);
}

TEST(EvolveAtomNumber, LargeStepIsExactExponential) {
  Rng rng(mix_seed(5));
  double sum = 0.0;
  for (int k = 0; k < 4000; ++k) sum += static_cast<double>(evolve_atom_number(100000, 2.0, 1.5, rng));
  const double p = std::exp(-3.0);
  EXPECT_NEAR(sum / 4000, 1e5 * p, 5 * std::sqrt(1e5 * p * (1 - p) / 4000));
}

TEST(RunConfigValidation, SampleRateBoundNamesBothValues) {
  RunConfig run;
  run.sample_rate = 50e3;
  try {
    run.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("50000"), std::string::npos) << msg;
    EXPECT_NE(msg.find("5000"), std::string::npos) << msg;
  }
  run.sample_rate = 100e3;
  EXPECT_NO_THROW(run.validate());
}

TEST(RunConfigValidation, DurationMustExceedDarkTime) {
  RunConfig run;
  run.duration = 0.04;
  EXPECT_THROW(run.validate(), ConfigError);
  EXPECT_THROW(synthesize_run(run), ConfigError);
}

TEST(SynthesizeRun, NoiselessLimitReproducesPolarimeterSignal) {
  RunConfig run = quiet_run();
  run.loss.absorption_loss_coefficient = 0.0;
  run.loss.background_loss_rate = 0.0;
  run.probe.photon_flux = 1e13;
  run.top.initial_phase = 0.4;
  run.duration = 0.1;
  const RunStreams s = synthesize_run(run);
  const double eta = run.probe.detection_efficiency;
  const double pol = run.probe.polarimeter_flux();
  const double g = run.coupling.coupling_strength;
  const double w = run.top.angular_frequency();
  for (std::size_t k = run.probe_on_index(); k < s.polarimeter_diff.size(); k += 7) {
    const double t = s.polarimeter_diff.time_at(k);
    const double expected = eta * 0.5 * pol * std::sin(2 * g * 1e6 * std::cos(w * t + 0.4)) + run.probe.polarimeter_offset;
    EXPECT_NEAR(s.polarimeter_diff.values[k], expected, 1e-9 * std::abs(eta * 0.5 * pol)) << k;
  }
  for (std::size_t k = 0; k < run.probe_on_index(); ++k) {
    EXPECT_EQ(s.polarimeter_diff.values[k], run.probe.polarimeter_offset);
    EXPECT_EQ(s.power_monitor.values[k], run.probe.monitor_offset);
  }
}

TEST(SynthesizeRun, EmptyTrapHasZeroMeanSignal) {
  RunConfig run;
  run.ensemble.atom_number = 0.0;
  run.duration = 0.45;  // 1e5 probe-on samples
  const RunStreams s = synthesize_run(run);
  std::vector<double> on(s.polarimeter_diff.values.begin() + static_cast<std::ptrdiff_t>(run.probe_on_index()),
                         s.polarimeter_diff.values.end());
  for (double& v : on) v -= run.probe.polarimeter_offset;
  ASSERT_GE(on.size(), 100000u);
  const double se = std::sqrt(stats::sample_variance(on) / static_cast<double>(on.size()));
  EXPECT_NEAR(stats::mean(on), 0.0, 5 * se);
}

TEST(SynthesizeRun, ShotNoiseVarianceMatchesClosedForm) {
  RunConfig run;
  run.ensemble.atom_number = 0.0;
  run.probe.electronic_noise_density = 0.0;
  run.duration = 4.05;
  run.seed = 11;
  const RunStreams s = synthesize_run(run);
  std::vector<double> on(s.polarimeter_diff.values.begin() + static_cast<std::ptrdiff_t>(run.probe_on_index()),
                         s.polarimeter_diff.values.end());
  ASSERT_GE(on.size(), 1000000u);
  // Per-sample count variance eta * Phi_pol * dt, expressed as a rate.
  const double expected = run.probe.detection_efficiency * run.probe.polarimeter_flux() * run.sample_rate;
  EXPECT_NEAR(stats::variance(on) / expected, 1.0, 0.03);
}

TEST(SynthesizeRun, PoissonOptionMatchesGaussianVariance) {
  RunConfig run;
  run.ensemble.atom_number = 0.0;
  run.probe.electronic_noise_density = 0.0;
  run.probe.photon_flux = 1e7;  // ~30 photons per sample
  run.probe.shot_noise = ShotNoiseModel::poisson;
  run.duration = 0.45;
  const RunStreams s = synthesize_run(run);
  std::vector<double> on(s.polarimeter_diff.values.begin() + static_cast<std::ptrdiff_t>(run.probe_on_index()),
                         s.polarimeter_diff.values.end());
  const double expected = run.probe.detection_efficiency * run.probe.polarimeter_flux() * run.sample_rate;
  EXPECT_NEAR(stats::variance(on) / expected, 1.0, 0.03);
}

TEST(SynthesizeRun, ElectronicNoiseVarianceInDarkSegment) {
  RunConfig run;
  run.duration = 2.0;
  run.pre_probe_dark_time = 1.9;
  const RunStreams s = synthesize_run(run);
  std::vector<double> dark(s.polarimeter_diff.values.begin(),
                           s.polarimeter_diff.values.begin() + static_cast<std::ptrdiff_t>(run.probe_on_index()));
  const double d = run.probe.electronic_noise_density;
  EXPECT_NEAR(stats::variance(dark) / (d * d * run.sample_rate / 2), 1.0, 0.02);
}

TEST(SynthesizeRun, Deterministic) {
  RunConfig run;
  run.duration = 0.2;
  run.seed = 77;
  const RunStreams a = synthesize_run(run);
  const RunStreams b = synthesize_run(run);
  EXPECT_EQ(a.polarimeter_diff.values, b.polarimeter_diff.values);
  EXPECT_EQ(a.power_monitor.values, b.power_monitor.values);
  EXPECT_EQ(a.atom_number_truth.values, b.atom_number_truth.values);
  run.seed = 78;
  EXPECT_NE(synthesize_run(run).polarimeter_diff.values, a.polarimeter_diff.values);
}

TEST(SynthesizeRun, TruthIsNonIncreasingIntegers) {
  RunConfig run;
  run.ensemble.atom_number = 5000.0;
  run.loss.background_loss_rate = 3.0;
  const RunStreams s = synthesize_run(run);
  const auto& v = s.atom_number_truth.values;
  for (std::size_t k = 1; k < v.size(); ++k) {
    ASSERT_LE(v[k], v[k - 1]);
    ASSERT_EQ(v[k], std::round(v[k]));
  }
  EXPECT_LE(s.final_atom_number, v.back());
}

TEST(SynthesizeRun, DeterministicLossIsExactExponential) {
  RunConfig run = quiet_run();
  const RunStreams s = synthesize_run(run);
  const double t_on = run.probe_on_time();
  const double gamma = run.loss_rate();
  for (std::size_t k = 0; k < s.atom_number_truth.size(); k += 997) {
    const double t = s.atom_number_truth.time_at(k);
    const double lambda = run.loss.background_loss_rate * t +
                          (t > t_on ? run.loss.absorption_loss_coefficient * run.probe.photon_flux * (t - t_on) : 0.0);
    EXPECT_NEAR(s.atom_number_truth.values[k], 1e6 * std::exp(-lambda), 1e-6);
  }
  // Log-linear fit of the probe-on truth recovers the composed rate.
  std::vector<double> t, y;
  for (std::size_t k = run.probe_on_index() + 1; k < s.atom_number_truth.size(); k += 50) {
    t.push_back(s.atom_number_truth.time_at(k));
    y.push_back(std::log(s.atom_number_truth.values[k]));
  }
  const stats::LineFit f = stats::fit_line(t, y);
  EXPECT_NEAR(-f.slope / gamma, 1.0, 1e-6);
}

TEST(SynthesizeRun, MonitorAndPolarimeterPowerSplit) {
  RunConfig run;
  run.ensemble.atom_number = 0.0;
  run.duration = 4.05;
  const RunStreams s = synthesize_run(run);
  const auto on = static_cast<std::ptrdiff_t>(run.probe_on_index());
  std::vector<double> mon(s.power_monitor.values.begin() + on, s.power_monitor.values.end());
  const double eta = run.probe.detection_efficiency;
  EXPECT_NEAR((stats::mean(mon) - run.probe.monitor_offset) / eta / run.probe.monitor_flux(), 1.0, 1e-3);
}

TEST(SynthesizeRun, ShotNoiseScalesLinearlyWithFlux) {
  std::vector<double> lx, ly;
  for (double scale : {1.0, 2.0, 4.0, 10.0}) {
    RunConfig run;
    run.ensemble.atom_number = 0.0;
    run.probe.electronic_noise_density = 0.0;
    run.probe.photon_flux = 2.5e8 * scale;
    run.duration = 0.45;
    const RunStreams s = synthesize_run(run);
    // Variance about a 1 ms windowed mean.
    const auto& v = s.polarimeter_diff.values;
    const std::size_t w = 250;
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t b = run.probe_on_index(); b + w <= v.size(); b += w) {
      const double m = std::accumulate(v.begin() + b, v.begin() + b + w, 0.0) / w;
      for (std::size_t k = b; k < b + w; ++k) acc += (v[k] - m) * (v[k] - m);
      count += w;
    }
    lx.push_back(std::log(run.probe.photon_flux));
    ly.push_back(std::log(acc / count));
  }
  EXPECT_NEAR(stats::fit_line(lx, ly).slope, 1.0, 0.05);
}

TEST(MeanDecayEnvelope, LosslessIsConstant) {
  RunConfig run;
  run.loss.absorption_loss_coefficient = 0.0;
  run.loss.background_loss_rate = 0.0;
  const SampleStream env = mean_decay_envelope(run);
  for (double v : env.values) ASSERT_EQ(v, 1e6);
}

TEST(MeanDecayEnvelope, EFoldingTime) {
  RunConfig run;
  run.pre_probe_dark_time = 0.0;
  run.loss.background_loss_rate = 0.0;
  run.loss.absorption_loss_coefficient = 2.0 / run.probe.photon_flux;  // gamma = 2 /s
  run.sample_rate = 200e3;
  const SampleStream env = mean_decay_envelope(run);
  const std::size_t k = 100000;  // t = 0.5 s = 1/gamma
  EXPECT_NEAR(env.values[k] / (1e6 / std::numbers::e), 1.0, 1e-12);
}

TEST(MeanDecayEnvelope, BracketsStochasticTrajectories) {
  RunConfig run;
  run.ensemble.atom_number = 2000.0;
  run.loss.background_loss_rate = 1.0;
  run.duration = 0.5;
  run.sample_rate = 100e3;
  const SampleStream env = mean_decay_envelope(run);
  const std::vector<std::size_t> probes = {0, 4999, 15000, 30000, 49999};
  std::vector<double> sum(probes.size()), sum2(probes.size());
  const int trajectories = 1000;
  for (int r = 0; r < trajectories; ++r) {
    // Same thinning as synthesize_run, without the detector streams.
    Rng rng = substream(static_cast<std::uint64_t>(r), 0);
    std::int64_t n = 2000;
    double prev = 0.0;
    std::size_t next = 0;
    for (std::size_t k = 0; k <= probes.back(); ++k) {
      const double e = run.loss_exponent(static_cast<double>(k) / run.sample_rate);
      n = detail::binomial_survivors(n, e - prev, rng);
      prev = e;
      if (k == probes[next]) {
        sum[next] += static_cast<double>(n);
        sum2[next] += static_cast<double>(n) * static_cast<double>(n);
        ++next;
      }
    }
  }
  for (std::size_t j = 0; j < probes.size(); ++j) {
    const double mean = sum[j] / trajectories;
    const double se = std::sqrt(std::max(sum2[j] / trajectories - mean * mean, 1e-12) / trajectories);
    EXPECT_NEAR(env.values[probes[j]], mean, 5 * se + 1e-9) << probes[j];
  }
}
