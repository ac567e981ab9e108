// Log-domain probability arithmetic.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace plhmm {

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.141592653589793238462643383279502884;

// log(e^a + e^b) without leaving the log domain.
inline double log_sum_exp(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

inline double log_sum_exp(std::span<const double> xs) {
  double m = kLogZero;
  for (double x : xs) m = std::max(m, x);
  if (m == kLogZero) return kLogZero;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_of(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

}  // namespace plhmm
