#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace faraday::stats {

inline double mean(std::span<const double> v) {
  long double s = 0.0L;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : static_cast<double>(s / static_cast<long double>(v.size()));
}

// Population variance about the sample mean.
inline double variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  long double s = 0.0L;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(s / static_cast<long double>(v.size()));
}

inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  return variance(v) * static_cast<double>(v.size()) / static_cast<double>(v.size() - 1);
}

// Normalized autocorrelation of the mean-removed series at lags 0..max_lag.
inline std::vector<double> autocorrelation(std::span<const double> v, std::size_t max_lag) {
  const std::size_t n = v.size();
  std::vector<double> rho(max_lag + 1, 0.0);
  if (n < 2) return rho;
  const double m = mean(v);
  std::vector<double> c(n);
  for (std::size_t k = 0; k < n; ++k) c[k] = v[k] - m;
  long double c0 = 0.0L;
  for (double x : c) c0 += x * x;
  if (c0 == 0.0L) return rho;
  for (std::size_t lag = 0; lag <= max_lag && lag < n; ++lag) {
    long double s = 0.0L;
    for (std::size_t k = 0; k + lag < n; ++k) s += c[k] * c[k + lag];
    rho[lag] = static_cast<double>(s / c0);
  }
  return rho;
}

// Integrated autocorrelation time 1 + 2 sum rho_k (in samples) with Sokal's
// automatic window: stop at the first M with M >= c * tau(M).
inline double integrated_autocorrelation_time(std::span<const double> v, double c = 5.0) {
  const std::size_t n = v.size();
  if (n < 4) return 1.0;
  const double m = mean(v);
  std::vector<double> centered(n);
  for (std::size_t k = 0; k < n; ++k) centered[k] = v[k] - m;
  long double c0 = 0.0L;
  for (double x : centered) c0 += x * x;
  if (c0 == 0.0L) return 1.0;
  double tau = 1.0;
  for (std::size_t lag = 1; lag <= n / 4; ++lag) {
    long double s = 0.0L;
    for (std::size_t k = 0; k + lag < n; ++k) s += centered[k] * centered[k + lag];
    tau += 2.0 * static_cast<double>(s / c0);
    if (static_cast<double>(lag) >= c * tau) break;
  }
  return std::max(tau, 1.0);
}

// First lag (interpolated, in samples) where rho drops to `level`; negative
// if it never does.
inline double crossing_lag(std::span<const double> rho, double level) {
  for (std::size_t k = 1; k < rho.size(); ++k) {
    if (rho[k] <= level) {
      const double f = (rho[k - 1] - level) / (rho[k - 1] - rho[k]);
      return static_cast<double>(k - 1) + f;
    }
  }
  return -1.0;
}

// Least-squares slope and intercept of y against x.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  long double sxy = 0.0L, sxx = 0.0L;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  LineFit f;
  f.slope = sxx > 0.0L ? static_cast<double>(sxy / sxx) : 0.0;
  f.intercept = my - f.slope * mx;
  return f;
}

}  // namespace faraday::stats
