#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "spinconc/model.hpp"

namespace spinconc {

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Unbiased sample variance; 0 for fewer than two values.
inline double variance_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

/// Mean and standard error for independent values.
inline Estimate independent_estimate(std::span<const double> xs) {
  if (xs.empty()) return {};
  return {mean_of(xs), std::sqrt(variance_of(xs) / static_cast<double>(xs.size()))};
}

struct AutocorrelationEstimate {
  double mean = 0.0;
  double error = 0.0;
  double tau_int = 0.5;
  std::size_t window = 0;
};

/// Mean of a Markov-chain series with an error bar from the integrated
/// autocorrelation time, using Sokal's automatic window: the smallest W with
/// W >= c * tau_int(W). tau_int is floored at 1/2 (the independent value) so
/// anticorrelated chains never report less than the naive error.
inline AutocorrelationEstimate autocorrelation_estimate(std::span<const double> xs, double c = 6.0) {
  AutocorrelationEstimate out;
  const std::size_t n = xs.size();
  if (n == 0) return out;
  out.mean = mean_of(xs);
  if (n < 2) return out;
  double c0 = 0.0;
  for (double x : xs) c0 += (x - out.mean) * (x - out.mean);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return out;

  double tau = 0.5;
  std::size_t window = 0;
  for (std::size_t t = 1; t < n / 2; ++t) {
    double ct = 0.0;
    for (std::size_t i = 0; i + t < n; ++i) ct += (xs[i] - out.mean) * (xs[i + t] - out.mean);
    ct /= static_cast<double>(n);
    tau += ct / c0;
    window = t;
    if (static_cast<double>(t) >= c * tau) break;
  }
  out.tau_int = std::max(tau, 0.5);
  out.window = window;
  out.error = std::sqrt(2.0 * out.tau_int * c0 / static_cast<double>(n));
  return out;
}

/// Kendall rank correlation (tau-a) of ys against their index order.
/// Returns 0 for fewer than two points.
inline double kendall_tau(std::span<const double> ys) {
  const std::size_t n = ys.size();
  if (n < 2) return 0.0;
  long long score = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (ys[j] > ys[i]) ++score;
      if (ys[j] < ys[i]) --score;
    }
  }
  return static_cast<double>(score) / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace spinconc
