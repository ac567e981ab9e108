// The PLHMM parameter bundle: topology, initial distribution, duration
// models, and per-state regression emissions, plus validated construction.
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "plhmm/basis.hpp"
#include "plhmm/duration.hpp"
#include "plhmm/errors.hpp"

namespace plhmm {

// theta_i = (w_i, beta_i^-1): regression weights plus Gaussian noise precision.
struct EmissionParams {
  std::vector<double> weights;  // length order + 1, signal units
  double precision = 1.0;       // beta, inverse noise variance
  int order = 0;
};

struct Series {
  std::vector<double> values;
  double sampling_period = 1.0 / 360.0;  // seconds, metadata only
};

struct Model {
  int n_states = 1;
  std::vector<double> pi;
  std::vector<std::vector<double>> trans;               // row-stochastic or absorbing (all zero)
  std::vector<std::vector<std::uint8_t>> topology_mask;  // allowed transitions
  std::vector<DurationModel> durations;
  std::vector<EmissionParams> emissions;
  BasisConfig basis;
  double sampling_period = 1.0 / 360.0;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Reports every violated model invariant with 1-based state/row indices.
inline ValidationReport validate(const Model& m) {
  ValidationReport report;
  auto flag = [&report](std::string msg) { report.violations.push_back(std::move(msg)); };
  const std::size_t n = static_cast<std::size_t>(m.n_states);

  if (m.n_states < 1) {
    flag("n_states must be >= 1");
    return report;
  }
  if (m.pi.size() != n || m.trans.size() != n || m.topology_mask.size() != n ||
      m.durations.size() != n || m.emissions.size() != n) {
    flag("parameter arrays do not all have n_states entries");
    return report;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (m.trans[i].size() != n || m.topology_mask[i].size() != n) {
      flag("transition matrix/mask is not n_states x n_states");
      return report;
    }
  }

  double pi_sum = 0.0;
  bool pi_nonneg = true;
  for (double p : m.pi) {
    if (!(p >= 0.0) || !std::isfinite(p)) pi_nonneg = false;
    pi_sum += p;
  }
  if (!pi_nonneg) flag("initial distribution has a negative or non-finite entry");
  if (std::fabs(pi_sum - 1.0) > 1e-12) flag("initial distribution does not sum to 1");

  for (std::size_t i = 0; i < n; ++i) {
    if (m.trans[i][i] != 0.0) flag("self-transition nonzero at state " + std::to_string(i + 1));
    double row_sum = 0.0;
    bool row_nonneg = true;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = m.trans[i][j];
      if (!(a >= 0.0) || !std::isfinite(a)) row_nonneg = false;
      if (!m.topology_mask[i][j] && a != 0.0)
        flag("transition " + std::to_string(i + 1) + "->" + std::to_string(j + 1) +
             " nonzero outside the topology mask");
      row_sum += a;
    }
    if (!row_nonneg) flag("transition row " + std::to_string(i + 1) + " has a negative or non-finite entry");
    if (row_sum != 0.0 && std::fabs(row_sum - 1.0) > 1e-12)
      flag("transition row " + std::to_string(i + 1) + " sums to neither 1 nor 0");
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (const auto* disc = std::get_if<DiscreteDuration>(&m.durations[i])) {
      if (disc->d_min < 1 || disc->d_max < disc->d_min)
        flag("duration support invalid at state " + std::to_string(i + 1));
      if (disc->pmf.size() != static_cast<std::size_t>(disc->d_max - disc->d_min) + 1)
        flag("duration pmf length mismatch at state " + std::to_string(i + 1));
      else {
        double s = 0.0;
        bool nonneg = true;
        for (double p : disc->pmf) {
          if (!(p >= 0.0) || !std::isfinite(p)) nonneg = false;
          s += p;
        }
        if (!nonneg) flag("duration pmf negative/non-finite at state " + std::to_string(i + 1));
        if (std::fabs(s - 1.0) > 1e-12)
          flag("duration pmf does not sum to 1 at state " + std::to_string(i + 1));
      }
    } else {
      const auto& g = std::get<GammaDuration>(m.durations[i]);
      if (!(g.shape > 0.0) || !std::isfinite(g.shape) || !(g.rate > 0.0) || !std::isfinite(g.rate))
        flag("gamma duration parameters not positive at state " + std::to_string(i + 1));
      if (g.horizon < 1) flag("gamma duration horizon < 1 at state " + std::to_string(i + 1));
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& em = m.emissions[i];
    if (em.order < 0) flag("negative emission order at state " + std::to_string(i + 1));
    if (em.weights.size() != static_cast<std::size_t>(em.order) + 1)
      flag("emission weight count != order + 1 at state " + std::to_string(i + 1));
    for (double w : em.weights)
      if (!std::isfinite(w)) {
        flag("non-finite emission weight at state " + std::to_string(i + 1));
        break;
      }
    if (!(em.precision > 0.0) || !std::isfinite(em.precision))
      flag("emission precision not positive/finite at state " + std::to_string(i + 1));
    if (em.order > m.basis.max_order)
      flag("emission order exceeds basis max_order at state " + std::to_string(i + 1));
  }

  if (m.basis.max_order < 0) flag("basis max_order must be >= 0");
  if (!(m.basis.scale > 0.0) || !std::isfinite(m.basis.scale)) flag("basis scale must be positive");
  if (!(m.sampling_period > 0.0)) flag("sampling period must be positive");
  return report;
}

inline void require_valid(const Model& m) {
  const auto report = validate(m);
  if (!report.ok()) {
    std::string msg = "invalid model:";
    for (const auto& v : report.violations) msg += " [" + v + "]";
    throw DomainError(msg);
  }
}

// ln N(v | w.phi, beta^-1) = 0.5 ln(beta/2pi) - (beta/2)(v - w.phi)^2.
inline double emission_log_density(const EmissionParams& em, std::span<const double> phi,
                                   double v) {
  if (phi.size() != em.weights.size())
    throw DomainError("emission_log_density: basis/weight length mismatch");
  if (!std::isfinite(v)) throw DomainError("emission_log_density: non-finite observation");
  double mean = 0.0;
  for (std::size_t j = 0; j < phi.size(); ++j) {
    if (!std::isfinite(phi[j])) throw DomainError("emission_log_density: non-finite basis value");
    mean += em.weights[j] * phi[j];
  }
  const double r = v - mean;
  return 0.5 * std::log(em.precision / (2.0 * kPi)) - 0.5 * em.precision * r * r;
}

// Sum of per-sample emission log densities for one hypothesized segment.
inline double segment_log_likelihood(const EmissionParams& em, const BasisConfig& basis,
                                     std::span<const double> samples, int d) {
  if (d < 1 || samples.size() != static_cast<std::size_t>(d))
    throw DomainError("segment_log_likelihood: sample count must equal duration d >= 1");
  std::vector<double> phi(static_cast<std::size_t>(em.order) + 1);
  double total = 0.0;
  for (int k = 0; k < d; ++k) {
    basis_eval_into(basis, em.order, k, d, phi);
    total += emission_log_density(em, phi, samples[static_cast<std::size_t>(k)]);
  }
  return total;
}

}  // namespace plhmm
