#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "faraday/core_model.hpp"

using namespace faraday;

TEST(SpinProjection, EmptyEnsembleGivesZero) {
  EnsembleState e;
  e.atom_number = 0.0;
  for (double t : {0.0, 1e-4, 0.37}) EXPECT_EQ(spin_projection(e, TopFieldConfig{}, t), 0.0);
}

TEST(SpinProjection, ExtremalProjection) {
  EnsembleState e;
  TopFieldConfig top;
  EXPECT_DOUBLE_EQ(spin_projection(e, top, 0.0), 1e6);
  e.spin_sign = -1;
  EXPECT_DOUBLE_EQ(spin_projection(e, top, 0.0), -1e6);
}

TEST(SpinProjection, QuarterPeriodZeroCrossing) {
  EnsembleState e;
  TopFieldConfig top;
  top.rotation_frequency = 3.7e3;
  EXPECT_LE(std::abs(spin_projection(e, top, 1.0 / (4.0 * top.rotation_frequency))), 1e-9 * e.atom_number);
}

TEST(SpinProjection, PeriodicAndBounded) {
  EnsembleState e;
  e.atom_number = 2.5e5;
  TopFieldConfig top;
  top.initial_phase = 0.3;
  const double period = 1.0 / top.rotation_frequency;
  for (int k = 0; k < 200; ++k) {
    const double t = 1.3e-5 * k;
    const double a = spin_projection(e, top, t);
    EXPECT_LE(std::abs(a), e.atom_number);
    EXPECT_NEAR(spin_projection(e, top, t + period), a, 1e-12 * e.atom_number * 10);
  }
}

TEST(FaradayAngle, DirectEvaluationAndSymmetry) {
  CouplingModel c;
  EXPECT_EQ(faraday_angle(c, 0.0), 0.0);
  EXPECT_NEAR(faraday_angle(c, 1e6), 0.1, 1e-15);
  for (double x : {1.0, 12.5, 3e5, 7e7}) EXPECT_EQ(faraday_angle(c, -x), -faraday_angle(c, x));
}

TEST(FaradayAngle, DoublingAtomsDoublesAngle) {
  CouplingModel c;
  EnsembleState e;
  const TopFieldConfig top;
  const double a = faraday_angle(c, spin_projection(e, top, 0.0));
  e.atom_number *= 2.0;
  EXPECT_EQ(faraday_angle(c, spin_projection(e, top, 0.0)), 2.0 * a);
}

TEST(CouplingModel, DetuningRescalesInversely) {
  CouplingModel c;
  EXPECT_DOUBLE_EQ(c.effective_strength(c.reference_detuning), c.coupling_strength);
  EXPECT_DOUBLE_EQ(c.effective_strength(3.0 * c.reference_detuning), c.coupling_strength / 3.0);
  const CouplingModel moved = c.at_detuning(2.0 * c.reference_detuning);
  EXPECT_DOUBLE_EQ(moved.coupling_strength, c.coupling_strength / 2.0);
  EXPECT_DOUBLE_EQ(moved.effective_strength(c.reference_detuning), c.coupling_strength);
}

TEST(StokesS2, ZeroRotation) {
  EXPECT_EQ(stokes_s2(1e9, 0.0, true), 0.0);
  EXPECT_EQ(stokes_s2(1e9, 0.0, false), 0.0);
}

TEST(StokesS2, ExactVersusSmallAngleAtTenthRadian) {
  const double exact = stokes_s2(1.0, 0.1, true);
  EXPECT_NEAR(exact, 0.0993347, 5e-8);
  EXPECT_DOUBLE_EQ(stokes_s2(1.0, 0.1, false), 0.1);
  EXPECT_NEAR((0.1 - exact) / exact, 0.0067, 1e-4);
}

TEST(StokesS2, ExactModeBounded) {
  for (double th = -4.0; th <= 4.0; th += 0.01) EXPECT_LE(std::abs(stokes_s2(2e9, th, true)), 1e9);
}

TEST(StokesS2, ApproximateModeLinear) {
  EXPECT_DOUBLE_EQ(stokes_s2(3e9, 0.02, false), 3.0 * stokes_s2(1e9, 0.02, false));
  EXPECT_DOUBLE_EQ(stokes_s2(1e9, 0.04, false), 2.0 * stokes_s2(1e9, 0.02, false));
}

TEST(StokesS2, SmallAngleTaylorBound) {
  // |x - sin x| <= x^3 / 6 with x = 2 theta. Relative to the exact value the
  // gap is (x^2 / 6) / (1 - x^2 / 6), slightly above x^2 / 6.
  for (double th = 1e-4; th <= 0.05; th += 1e-4) {
    for (double sign : {1.0, -1.0}) {
      const double t = sign * th;
      const double exact = stokes_s2(1.0, t, true);
      const double approx = stokes_s2(1.0, t, false);
      const double x2 = (2 * t) * (2 * t);
      EXPECT_LE(std::abs(exact - approx) / std::abs(approx), x2 / 6.0 + 1e-12) << t;
      EXPECT_LE(std::abs(exact - approx) / std::abs(exact), (x2 / 6.0) / (1 - x2 / 6.0) + 1e-12) << t;
    }
  }
}

TEST(StokesS2, AgreesToFirstOrder) {
  for (double t : {1e-6, 1e-5, 1e-4}) EXPECT_NEAR(stokes_s2(1.0, t, true) / stokes_s2(1.0, t, false), 1.0, 4 * t * t);
}

TEST(ConfigValidation, EnsembleRejectsNegativeAtoms) {
  EnsembleState e;
  e.atom_number = -1.0;
  EXPECT_THROW(e.validate(), ConfigError);
  e.atom_number = 1.0;
  e.spin_sign = 0;
  EXPECT_THROW(e.validate(), ConfigError);
}

TEST(ConfigValidation, ProbeBoundsNamed) {
  ProbeDetectorConfig p;
  EXPECT_NO_THROW(p.validate());
  p.detection_efficiency = 1.2;
  try {
    p.validate();
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("detection_efficiency"), std::string::npos);
  }
  p = {};
  p.monitor_tap = 1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.photon_flux = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(ConfigValidation, TopAndCouplingPositive) {
  TopFieldConfig top;
  top.rotation_frequency = 0.0;
  EXPECT_THROW(top.validate(), ConfigError);
  CouplingModel c;
  c.coupling_strength = -1e-7;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ProbeDrift, IntegralMatchesQuadrature) {
  ProbeDetectorConfig p;
  p.drift_amplitude = 0.01;
  p.drift_frequency = 3.0;
  p.drift_ramp = 0.02;
  const double t0 = 0.05, t1 = 0.83;
  const int n = 200000;
  double sum = 0.0;
  for (int k = 0; k < n; ++k) sum += p.drift_factor(t0 + (k + 0.5) * (t1 - t0) / n);
  EXPECT_NEAR(p.drift_integral(t0, t1), sum * (t1 - t0) / n, 1e-9);
}
