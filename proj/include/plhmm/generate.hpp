// Ancestral sampling: initial state from pi, a duration from the state's
// (discretized) pmf, regression-plus-noise emissions, next state from the
// transition row, until an absorbing state or the length budget.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "plhmm/lattice.hpp"
#include "plhmm/model.hpp"

namespace plhmm {

// Deterministic random source: std::mt19937_64 (its sequence is fixed by the
// standard) with explicit uniform and Box-Muller transforms, so the same seed
// reproduces the same draws everywhere. No platform distribution objects.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }  // [0, 1)

  double normal() {
    const double u1 = (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Inverse-CDF draw; the roundoff tail falls to the last positive entry.
  int categorical(std::span<const double> probs) {
    const double u = uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    for (std::size_t i = probs.size(); i-- > 0;)
      if (probs[i] > 0.0) return static_cast<int>(i);
    throw DomainError("categorical: distribution has no mass");
  }

 private:
  std::mt19937_64 gen_;
};

struct SamplePath {
  Series series;
  Segmentation segmentation;
  std::uint64_t seed = 0;
};

// Draws one series. Stops at an absorbing state or when the next full segment
// would overflow max_length; segments are never truncated, and the first
// segment is always emitted so the series is nonempty. max_length <= 0 uses
// 10x the summed mean durations.
inline SamplePath sample(const Model& model, std::uint64_t seed, int max_length = 0) {
  require_valid(model);
  if (max_length <= 0) {
    double mean_total = 0.0;
    for (const auto& dm : model.durations) mean_total += duration_mean(dm);
    max_length = std::max(1, static_cast<int>(std::lround(10.0 * mean_total)));
  }

  Rng rng(seed);
  SamplePath path;
  path.seed = seed;
  path.series.sampling_period = model.sampling_period;

  std::vector<std::vector<double>> pmf_tables(static_cast<std::size_t>(model.n_states));
  auto pmf_for = [&](int j) -> const std::vector<double>& {
    auto& table = pmf_tables[static_cast<std::size_t>(j)];
    if (table.empty()) table = duration_pmf_table(model.durations[static_cast<std::size_t>(j)]);
    return table;
  };

  std::vector<double> phi(static_cast<std::size_t>(model.basis.max_order) + 1);
  int state = rng.categorical(model.pi);
  double log_joint = log_of(model.pi[static_cast<std::size_t>(state)]);
  int total = 0;
  while (true) {
    const auto& table = pmf_for(state);
    const int d = 1 + rng.categorical(table);
    if (total > 0 && total + d > max_length) break;
    log_joint += log_of(table[static_cast<std::size_t>(d - 1)]);

    const auto& em = model.emissions[static_cast<std::size_t>(state)];
    const double sigma = 1.0 / std::sqrt(em.precision);
    for (int k = 0; k < d; ++k) {
      basis_eval_into(model.basis, em.order, k, d, std::span<double>(phi).first(em.weights.size()));
      double mean = 0.0;
      for (std::size_t q = 0; q < em.weights.size(); ++q) mean += em.weights[q] * phi[q];
      const double v = mean + sigma * rng.normal();
      path.series.values.push_back(v);
      log_joint += emission_log_density(em, std::span<const double>(phi).first(em.weights.size()), v);
    }
    path.segmentation.segments.push_back({state, total + 1, d});
    total += d;
    if (total >= max_length) break;

    const auto& row = model.trans[static_cast<std::size_t>(state)];
    double row_sum = 0.0;
    for (double a : row) row_sum += a;
    if (row_sum == 0.0) break;  // absorbing
    const int next = rng.categorical(row);
    log_joint += log_of(row[static_cast<std::size_t>(next)]);
    state = next;
  }
  path.segmentation.log_joint = log_joint;
  return path;
}

}  // namespace plhmm
