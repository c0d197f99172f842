#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "faraday/error.hpp"
#include "faraday/sample_stream.hpp"
#include "faraday/stats.hpp"

namespace faraday {

enum class FitWeighting { uniform, amplitude };

struct FitOptions {
  FitWeighting weighting = FitWeighting::uniform;
  // Time origin of N(t) = N0 exp(-gamma (t - origin)); defaults to the
  // stream's start time.
  std::optional<double> time_origin;
  // Inflate the residual-based covariance by the residuals' integrated
  // autocorrelation time.
  bool correlated_residuals = true;
  // Add the covariance of a binomial pure-death process (data in atoms).
  bool atom_loss_variance = true;
  int max_iterations = 100;
  double step_tolerance = 1e-9;
  std::size_t min_samples = 50;

  bool operator==(const FitOptions&) const = default;
};

// Per-source variance attribution of the estimate residuals. Variances are in
// atoms^2 unless the key says rad^2.
struct NoiseReport {
  double measured_variance = 0.0;
  double measured_angle_variance = 0.0;        // rad^2
  double equivalent_noise_bandwidth = 0.0;     // Hz
  double predicted_shot_variance = 0.0;        // polarimeter + monitor photon shot noise
  double predicted_polarimeter_shot_variance = 0.0;
  double predicted_monitor_shot_variance = 0.0;
  double predicted_loss_variance = 0.0;
  double predicted_electronic_variance = 0.0;
  double remainder_variance = 0.0;             // measured minus all predicted terms
  double residual_correlation_time = 0.0;      // s, 1/e lag of the residual autocorrelation
  double lockin_correlation_time = 0.0;        // s, same quantity predicted from the filter cascade
  double integrated_correlation_time = 0.0;    // s
};

struct MeasurementRecord {
  SampleStream atom_number_estimate;
  double fitted_n0 = 0.0;            // atoms at the time origin
  double n0_uncertainty = 0.0;       // atoms
  double fitted_gamma = 0.0;         // 1/s
  double gamma_uncertainty = 0.0;    // 1/s
  double residual_rms = 0.0;         // atoms
  double time_origin = 0.0;          // s
  double fit_begin = 0.0;            // s, first sample used
  std::size_t fit_samples = 0;
  int iterations = 0;
  double residual_correlation_samples = 1.0;
  // Covariance split: residual-based and atom-loss-process parts.
  std::array<double, 3> residual_covariance{};  // (n0 n0, n0 gamma, gamma gamma)
  std::array<double, 3> loss_covariance{};
  std::optional<NoiseReport> noise_report;

  double model(double t) const { return fitted_n0 * std::exp(-fitted_gamma * (t - time_origin)); }
};

// Fit failure; carries the last iterate.
class FitError : public EstimationError {
 public:
  FitError(const std::string& what, double n0, double gamma, double residual_rms)
      : EstimationError(what), last_n0(n0), last_gamma(gamma), last_residual_rms(residual_rms) {}
  double last_n0;
  double last_gamma;
  double last_residual_rms;
};

namespace detail {

// sum_ij x_i y_j C_ij for the binomial death-process covariance
// C_ij = n0 (1 - p_min(i,j)) p_max(i,j), p_i = exp(-gamma t_i), t ascending.
inline double death_process_form(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& p,
                                 double n0) {
  long double acc = 0.0L;
  long double sum_xu = 0.0L;  // sum_{i<=j} x_i u_i
  long double sum_yu = 0.0L;  // sum_{j<i} y_j u_j
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double u = 1.0 - p[k];
    sum_xu += x[k] * u;
    acc += y[k] * p[k] * sum_xu;  // pairs i <= k = j
    acc += x[k] * p[k] * sum_yu;  // pairs j < k = i
    sum_yu += y[k] * u;
  }
  return static_cast<double>(n0 * acc);
}

inline std::array<double, 3> invert_sym2(const std::array<double, 3>& m) {
  const double det = m[0] * m[2] - m[1] * m[1];
  return {m[2] / det, -m[1] / det, m[0] / det};
}

inline std::array<double, 3> sandwich(const std::array<double, 3>& a, const std::array<double, 3>& q) {
  // a q a for symmetric 2x2 matrices stored as (00, 01, 11).
  const double aq00 = a[0] * q[0] + a[1] * q[1], aq01 = a[0] * q[1] + a[1] * q[2];
  const double aq10 = a[1] * q[0] + a[2] * q[1], aq11 = a[1] * q[1] + a[2] * q[2];
  return {aq00 * a[0] + aq01 * a[1], aq00 * a[1] + aq01 * a[2], aq10 * a[1] + aq11 * a[2]};
}

}  // namespace detail

// Weighted least squares of N(t) = N0 exp(-gamma t) by damped Gauss-Newton
// (Levenberg-Marquardt), started from a log-linear regression. gamma is held
// at >= 0.
inline MeasurementRecord fit_decay(const SampleStream& estimate, double settle_skip, const FitOptions& options = {}) {
  estimate.validate();
  const double origin = options.time_origin.value_or(estimate.start_time);
  const std::size_t first = estimate.index_at_or_after(estimate.start_time + settle_skip);
  const std::size_t n = estimate.size() - first;
  if (n < options.min_samples)
    throw ContractError("fit_decay: " + std::to_string(n) + " samples after skipping " + std::to_string(settle_skip) +
                        " s; at least " + std::to_string(options.min_samples) + " required");

  std::vector<double> t(n), y(n), w(n, 1.0);
  double y_max = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    t[k] = estimate.time_at(first + k) - origin;
    y[k] = estimate.values[first + k];
    y_max = std::max(y_max, std::abs(y[k]));
  }
  if (options.weighting == FitWeighting::amplitude && y_max > 0.0)
    for (std::size_t k = 0; k < n; ++k) w[k] = std::abs(y[k]) / y_max;

  // Log-linear start on positive samples only; the data themselves are not
  // clamped.
  std::vector<double> tp, ly;
  for (std::size_t k = 0; k < n; ++k)
    if (y[k] > 0.0) {
      tp.push_back(t[k]);
      ly.push_back(std::log(y[k]));
    }
  if (tp.size() < 2)
    throw EstimationError("fit_decay: degenerate input, fewer than two positive samples (all-zero or negative data)");
  const stats::LineFit start = stats::fit_line(tp, ly);
  double n0 = std::exp(start.intercept);
  double gamma = std::max(0.0, -start.slope);
  const double span = std::max(t.back() - t.front(), 1e-300);

  auto cost_at = [&](double a, double g) {
    long double c = 0.0L;
    for (std::size_t k = 0; k < n; ++k) {
      const double r = y[k] - a * std::exp(-g * t[k]);
      c += w[k] * r * r;
    }
    return static_cast<double>(c);
  };

  double cost = cost_at(n0, gamma);
  double lambda = 1e-3;
  int iterations = 0;
  bool converged = cost == 0.0;
  while (!converged) {
    if (iterations >= options.max_iterations)
      throw FitError("fit_decay: no convergence after " + std::to_string(options.max_iterations) + " iterations",
                     n0, gamma, std::sqrt(cost / static_cast<double>(n)));
    ++iterations;
    std::array<double, 3> a{};  // J^T W J
    double g0 = 0.0, g1 = 0.0;  // J^T W r
    for (std::size_t k = 0; k < n; ++k) {
      const double e = std::exp(-gamma * t[k]);
      const double j0 = e;
      const double j1 = -n0 * t[k] * e;
      const double r = y[k] - n0 * e;
      a[0] += w[k] * j0 * j0;
      a[1] += w[k] * j0 * j1;
      a[2] += w[k] * j1 * j1;
      g0 += w[k] * j0 * r;
      g1 += w[k] * j1 * r;
    }
    bool accepted = false;
    while (!accepted) {
      const double d0 = a[0] * (1.0 + lambda), d2 = a[2] * (1.0 + lambda);
      const double det = d0 * d2 - a[1] * a[1];
      double step0 = (d2 * g0 - a[1] * g1) / det;
      double step1 = (d0 * g1 - a[1] * g0) / det;
      const double trial_gamma = std::max(0.0, gamma + step1);
      step1 = trial_gamma - gamma;
      const double trial_n0 = n0 + step0;
      const double trial_cost = cost_at(trial_n0, trial_gamma);
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        accepted = true;
        n0 = trial_n0;
        gamma = trial_gamma;
        const bool small_step = std::abs(step0) <= options.step_tolerance * std::abs(n0) &&
                                std::abs(step1) * span <= options.step_tolerance;
        converged = small_step || trial_cost == 0.0;
        cost = trial_cost;
        lambda = std::max(lambda / 10.0, 1e-12);
      } else {
        lambda *= 10.0;
        // No descent direction left at machine precision.
        if (lambda > 1e16) {
          accepted = true;
          converged = true;
        }
      }
    }
  }

  MeasurementRecord rec;
  rec.atom_number_estimate = estimate;
  rec.fitted_n0 = n0;
  rec.fitted_gamma = gamma;
  rec.time_origin = origin;
  rec.fit_begin = estimate.time_at(first);
  rec.fit_samples = n;
  rec.iterations = iterations;

  std::vector<double> residual(n), p(n), x0(n), x1(n);
  std::array<double, 3> normal{};
  long double rss = 0.0L, wrss = 0.0L;
  for (std::size_t k = 0; k < n; ++k) {
    p[k] = std::exp(-gamma * t[k]);
    residual[k] = y[k] - n0 * p[k];
    rss += residual[k] * residual[k];
    wrss += w[k] * residual[k] * residual[k];
    x0[k] = w[k] * p[k];
    x1[k] = -w[k] * n0 * t[k] * p[k];
    normal[0] += w[k] * p[k] * p[k];
    normal[1] += x0[k] * (-n0 * t[k] * p[k]);
    normal[2] += x1[k] * (-n0 * t[k] * p[k]);
  }
  rec.residual_rms = std::sqrt(static_cast<double>(rss / static_cast<long double>(n)));

  const std::array<double, 3> inv = detail::invert_sym2(normal);
  const double s2 = static_cast<double>(wrss) / static_cast<double>(n - 2);
  rec.residual_correlation_samples = options.correlated_residuals ? stats::integrated_autocorrelation_time(residual) : 1.0;
  for (int k = 0; k < 3; ++k) rec.residual_covariance[k] = inv[k] * s2 * rec.residual_correlation_samples;
  if (options.atom_loss_variance && n0 > 0.0) {
    const std::array<double, 3> q{detail::death_process_form(x0, x0, p, n0), detail::death_process_form(x0, x1, p, n0),
                                  detail::death_process_form(x1, x1, p, n0)};
    rec.loss_covariance = detail::sandwich(inv, q);
  }
  // A perfect fit still gets a resolution-limited, nonzero uncertainty.
  constexpr double eps = std::numeric_limits<double>::epsilon();
  rec.n0_uncertainty = std::max(std::sqrt(std::max(0.0, rec.residual_covariance[0] + rec.loss_covariance[0])),
                                eps * std::max(std::abs(n0), 1.0));
  rec.gamma_uncertainty = std::max(std::sqrt(std::max(0.0, rec.residual_covariance[2] + rec.loss_covariance[2])),
                                   eps / span);
  return rec;
}

}  // namespace faraday
