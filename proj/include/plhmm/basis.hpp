// Regression basis evaluated on segment-local time: orthonormal Hermite
// functions (with the constant offset term) or plain monomials.
#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "plhmm/errors.hpp"
#include "plhmm/logprob.hpp"

namespace plhmm {

enum class BasisFamily { kHermiteOrthonormal, kMonomial };
enum class TimeConvention { kSegmentNormalized, kSegmentOffset };

struct BasisConfig {
  BasisFamily family = BasisFamily::kHermiteOrthonormal;
  int max_order = 0;      // largest per-state order the model uses
  double scale = 3.0;     // half-width c of the basis argument
  TimeConvention time_convention = TimeConvention::kSegmentNormalized;
};

namespace detail {

inline constexpr double kQuarterRootPiInv = 0.75112554446494248285870300477623;  // pi^(-1/4)

// Orthonormal Hermite functions psi_j(x) = (2^j j! sqrt(pi))^(-1/2) H_j(x) e^(-x^2/2)
// through the normalized three-term recurrence, which stays stable for any order.
inline void hermite_functions_into(int order, double x, std::span<double> out) {
  const double psi0 = kQuarterRootPiInv * std::exp(-0.5 * x * x);
  out[0] = psi0;
  if (order >= 1) out[1] = std::sqrt(2.0) * x * psi0;
  for (int j = 2; j <= order; ++j) {
    out[j] = x * std::sqrt(2.0 / j) * out[j - 1] - std::sqrt((j - 1.0) / j) * out[j - 2];
  }
}

}  // namespace detail

// Basis argument for sample offset k inside a segment of duration d.
// Segment-normalized time maps k onto [-1, 1] (0 for a one-sample segment);
// segment-offset time uses k as-is. Both are scaled by the configured c.
inline double basis_argument(const BasisConfig& basis, int k, int d) {
  if (d < 1 || k < 0 || k >= d)
    throw DomainError("basis_argument: requires 0 <= k < d with d >= 1");
  const double u = basis.time_convention == TimeConvention::kSegmentNormalized
                       ? (d == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(k) / (d - 1.0))
                       : static_cast<double>(k);
  return basis.scale * u;
}

// Fills out[0..order] with (phi_0, ..., phi_order) at offset k of a duration-d
// segment. phi_0 is the constant 1 for both families.
inline void basis_eval_into(const BasisConfig& basis, int order, int k, int d,
                            std::span<double> out) {
  if (order < 0 || out.size() < static_cast<std::size_t>(order) + 1)
    throw DomainError("basis_eval_into: output span too small");
  const double x = basis_argument(basis, k, d);
  switch (basis.family) {
    case BasisFamily::kMonomial:
      out[0] = 1.0;
      for (int j = 1; j <= order; ++j) out[j] = out[j - 1] * x;
      break;
    case BasisFamily::kHermiteOrthonormal:
      detail::hermite_functions_into(order, x, out);
      out[0] = 1.0;
      break;
  }
}

inline std::vector<double> basis_eval(const BasisConfig& basis, int order, int k, int d) {
  std::vector<double> out(static_cast<std::size_t>(order) + 1);
  basis_eval_into(basis, order, k, d, out);
  return out;
}

}  // namespace plhmm
