// State-duration densities: a bounded discrete pmf and a Gamma density
// discretized onto integer durations, plus their reestimation updates.
#pragma once

#include <cmath>
#include <map>
#include <variant>
#include <vector>

#include "plhmm/errors.hpp"
#include "plhmm/logprob.hpp"
#include "plhmm/special.hpp"

namespace plhmm {

struct DiscreteDuration {
  int d_min = 1;
  int d_max = 1;
  std::vector<double> pmf;  // pmf[i] = P(d = d_min + i)

  double prob(int d) const {
    if (d < d_min || d > d_max) return 0.0;
    return pmf[static_cast<std::size_t>(d - d_min)];
  }
  double log_prob(int d) const { return log_of(prob(d)); }
};

// Gamma(shape nu, rate eta) duration: the pmf at d is the density mass on
// [d, d+1], renormalized so the support [1, horizon] sums to one exactly.
struct GammaDuration {
  double shape = 1.0;
  double rate = 1.0;
  int horizon = 1;

  double normalizer() const {
    const double z = gamma_mass_between(shape, rate, rate * (horizon + 1.0));
    if (!(z > 0.0))
      throw NumericError("GammaDuration: no density mass on [1, horizon]", z);
    return z;
  }
  double prob(int d) const {
    if (d < 1 || d > horizon) return 0.0;
    return gamma_mass_between(shape, rate * d, rate * (d + 1.0)) / normalizer();
  }
  double log_prob(int d) const { return log_of(prob(d)); }
  double mean() const {
    double m = 0.0;
    const double z = normalizer();
    for (int d = 1; d <= horizon; ++d)
      m += d * gamma_mass_between(shape, rate * d, rate * (d + 1.0)) / z;
    return m;
  }
};

using DurationModel = std::variant<DiscreteDuration, GammaDuration>;

inline int support_min(const DurationModel& dm) {
  return std::holds_alternative<DiscreteDuration>(dm) ? std::get<DiscreteDuration>(dm).d_min : 1;
}

inline int support_max(const DurationModel& dm) {
  return std::holds_alternative<DiscreteDuration>(dm) ? std::get<DiscreteDuration>(dm).d_max
                                                      : std::get<GammaDuration>(dm).horizon;
}

inline double duration_prob(const DurationModel& dm, int d) {
  return std::visit([d](const auto& m) { return m.prob(d); }, dm);
}

inline double duration_log_prob(const DurationModel& dm, int d) {
  return std::visit([d](const auto& m) { return m.log_prob(d); }, dm);
}

// pmf over d = 1..support_max (index d-1). The gamma branch shares one
// normalizer evaluation across the table.
inline std::vector<double> duration_pmf_table(const DurationModel& dm) {
  const int hi = support_max(dm);
  std::vector<double> table(static_cast<std::size_t>(hi), 0.0);
  if (const auto* disc = std::get_if<DiscreteDuration>(&dm)) {
    for (int d = disc->d_min; d <= disc->d_max; ++d)
      table[static_cast<std::size_t>(d - 1)] = disc->prob(d);
  } else {
    const auto& g = std::get<GammaDuration>(dm);
    const double z = g.normalizer();
    for (int d = 1; d <= hi; ++d)
      table[static_cast<std::size_t>(d - 1)] =
          gamma_mass_between(g.shape, g.rate * d, g.rate * (d + 1.0)) / z;
  }
  return table;
}

inline double duration_mean(const DurationModel& dm) {
  const auto table = duration_pmf_table(dm);
  double m = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) m += (static_cast<double>(i) + 1.0) * table[i];
  return m;
}

// Posterior accumulators for one state's duration reestimate.
struct DurationStats {
  double total_mass = 0.0;      // sum of span posteriors
  double expected_d = 0.0;      // sum of w * d
  double expected_log_d = 0.0;  // sum of w * ln d (the ln eta term is applied at update time)
  std::map<int, double> counts;

  void add(int d, double weight) {
    total_mass += weight;
    expected_d += weight * d;
    expected_log_d += weight * std::log(static_cast<double>(d));
    counts[d] += weight;
  }
};

// pbar(d) = counts(d) / sum counts, restricted and renormalized to [d_min, d_max].
inline DiscreteDuration reestimate_discrete(const DurationStats& stats, int d_min, int d_max) {
  if (d_min < 1 || d_max < d_min)
    throw DomainError("reestimate_discrete: invalid support bounds");
  DiscreteDuration out;
  out.d_min = d_min;
  out.d_max = d_max;
  out.pmf.assign(static_cast<std::size_t>(d_max - d_min) + 1, 0.0);
  double total = 0.0;
  for (const auto& [d, c] : stats.counts) {
    if (d < d_min || d > d_max) continue;
    out.pmf[static_cast<std::size_t>(d - d_min)] = c;
    total += c;
  }
  if (!(total > 0.0))
    throw EstimationError("reestimate_discrete: state unused (zero duration mass on support)");
  for (double& p : out.pmf) p /= total;
  return out;
}

// Rate from the old shape: etabar = nu_old * mass / E[d]. Shape from the old
// rate: psi(nubar) = E[ln(d * eta_old)], inverted by Newton-Raphson. Setting
// coupled solves the shape against etabar instead.
inline GammaDuration reestimate_gamma(const DurationStats& stats, const GammaDuration& old,
                                      bool coupled = false) {
  if (!(stats.total_mass > 0.0))
    throw EstimationError("reestimate_gamma: state unused (zero posterior mass)");
  if (!(stats.expected_d > 0.0))
    throw EstimationError("reestimate_gamma: zero expected duration");
  GammaDuration out;
  out.horizon = old.horizon;
  out.rate = old.shape * stats.total_mass / stats.expected_d;
  const double rate_for_shape = coupled ? out.rate : old.rate;
  const double target = stats.expected_log_d / stats.total_mass + std::log(rate_for_shape);
  out.shape = invert_digamma(target);
  return out;
}

}  // namespace plhmm
