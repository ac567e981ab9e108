#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "plhmm/generate.hpp"
#include "plhmm/train.hpp"
#include "support/oracles.hpp"

using namespace plhmm;

namespace {

// Random left-to-right generator used by the synthetic harnesses.
Model random_ltr(std::uint64_t seed, int n_states, bool gamma_durations, double precision) {
  Rng rng(seed);
  std::vector<DiscreteDuration> durations;
  std::vector<std::vector<double>> weights;
  std::vector<int> orders;
  for (int j = 0; j < n_states; ++j) {
    const int mean = 8 + static_cast<int>(rng.uniform() * 10.0);
    DiscreteDuration d;
    d.d_min = std::max(1, mean - 3);
    d.d_max = mean + 3;
    d.pmf.assign(d.d_max - d.d_min + 1, 0.0);
    double sum = 0.0;
    for (auto& p : d.pmf) {
      p = 0.2 + rng.uniform();
      sum += p;
    }
    for (auto& p : d.pmf) p /= sum;
    durations.push_back(std::move(d));
    const int order = 1 + static_cast<int>(rng.uniform() * 2.0);
    orders.push_back(order);
    std::vector<double> w(order + 1);
    for (auto& x : w) x = 2.0 * rng.normal();
    weights.push_back(std::move(w));
  }
  Model m = testsupport::left_to_right_model(n_states, orders, durations, weights, precision);
  if (gamma_durations) {
    for (int j = 0; j < n_states; ++j) {
      const auto& d = std::get<DiscreteDuration>(m.durations[j]);
      const double mean = 0.5 * (d.d_min + d.d_max);
      GammaDuration g;
      g.shape = mean * mean / 4.0;  // sd ~ 2 samples
      g.rate = g.shape / mean;
      g.horizon = 400;
      m.durations[j] = g;
    }
  }
  return m;
}

TrainConfig matching_config(const Model& truth, const Series& series, DurationFamily family) {
  TrainConfig cfg;
  cfg.n_states = truth.n_states;
  cfg.orders.clear();
  for (const auto& em : truth.emissions) cfg.orders.push_back(em.order);
  cfg.family = family;
  const int T = static_cast<int>(series.values.size());
  cfg.bounds.clear();
  for (const auto& dm : truth.durations) {
    const double mean = duration_mean(dm);
    const int lo = std::max(1, static_cast<int>(std::lround(0.5 * mean)));
    const int hi = std::min(T, std::max(lo + 1, static_cast<int>(std::lround(1.8 * mean))));
    cfg.bounds.push_back({lo, hi});
  }
  return cfg;
}

}  // namespace

TEST_CASE("weighted least squares closed forms", "[train]") {
  BasisConfig basis{BasisFamily::kMonomial, 0, 1.0, TimeConvention::kSegmentNormalized};
  const std::vector<double> v{1.0, 2.0, 3.0};
  const WlsSpan span{v, 1.0};
  const auto em = weighted_least_squares({&span, 1}, basis, 0);
  REQUIRE(std::fabs(em.weights[0] - 2.0) < 1e-12);
  REQUIRE(std::fabs(1.0 / em.precision - 2.0 / 3.0) < 1e-12);
}

TEST_CASE("weighted least squares matches a QR oracle", "[train]") {
  Rng rng(3);
  BasisConfig basis{BasisFamily::kHermiteOrthonormal, 3, 3.0, TimeConvention::kSegmentNormalized};
  for (int rep = 0; rep < 8; ++rep) {
    const int order = 1 + rep % 3;
    std::vector<std::vector<double>> sample_store;
    std::vector<WlsSpan> spans;
    std::vector<std::vector<double>> rows;
    std::vector<double> rhs;
    for (int s = 0; s < 2 + rep % 2; ++s) {
      const int d = 4 + static_cast<int>(rng.uniform() * 5.0);
      const double w = 0.2 + rng.uniform();
      std::vector<double> samples(d);
      for (auto& v : samples) v = rng.normal();
      sample_store.push_back(samples);
      for (int k = 0; k < d; ++k) {
        auto phi = basis_eval(basis, order, k, d);
        for (auto& p : phi) p *= std::sqrt(w);
        rows.push_back(phi);
        rhs.push_back(std::sqrt(w) * samples[k]);
      }
    }
    for (std::size_t s = 0, r = 0; s < sample_store.size(); ++s) {
      const double w = rows[r][0] * rows[r][0];  // sqrt(w)^2 from the constant column
      spans.push_back({sample_store[s], w});
      r += sample_store[s].size();
    }
    const auto em = weighted_least_squares(spans, basis, order);
    const auto oracle = testsupport::qr_least_squares(rows, rhs);
    for (int q = 0; q <= order; ++q) REQUIRE(std::fabs(em.weights[q] - oracle[q]) < 1e-9);
  }
}

TEST_CASE("weighted least squares is invariant to splitting weight across spans", "[train]") {
  BasisConfig basis{BasisFamily::kHermiteOrthonormal, 2, 3.0, TimeConvention::kSegmentNormalized};
  Rng rng(5);
  std::vector<double> samples(7);
  for (auto& v : samples) v = rng.normal();
  const WlsSpan whole{samples, 1.0};
  const WlsSpan a{samples, 0.3};
  const WlsSpan b{samples, 0.7};
  const std::vector<WlsSpan> split{a, b};
  const auto one = weighted_least_squares({&whole, 1}, basis, 2);
  const auto two = weighted_least_squares(split, basis, 2);
  for (int q = 0; q <= 2; ++q) REQUIRE(std::fabs(one.weights[q] - two.weights[q]) < 1e-12);
  REQUIRE(std::fabs(one.precision - two.precision) < 1e-9 * one.precision);
}

TEST_CASE("weighted least squares satisfies its normal equations", "[train]") {
  Rng rng(9);
  BasisConfig basis{BasisFamily::kHermiteOrthonormal, 4, 3.0, TimeConvention::kSegmentNormalized};
  for (int rep = 0; rep < 6; ++rep) {
    const int order = 2 + rep % 3;
    std::vector<std::vector<double>> store;
    for (int s = 0; s < 3; ++s) {
      std::vector<double> samples(5 + static_cast<int>(rng.uniform() * 6.0));
      for (auto& v : samples) v = 3.0 * rng.normal();
      store.push_back(std::move(samples));
    }
    std::vector<WlsSpan> spans;
    std::vector<double> weights{0.9, 0.4, 1.6};
    for (int s = 0; s < 3; ++s) spans.push_back({store[s], weights[s]});
    const auto em = weighted_least_squares(spans, basis, order);
    std::vector<double> residual(order + 1, 0.0);
    double scale = 1.0;
    for (const auto& span : spans) {
      const int d = static_cast<int>(span.samples.size());
      for (int k = 0; k < d; ++k) {
        const auto phi = basis_eval(basis, order, k, d);
        double mu = 0.0;
        for (int q = 0; q <= order; ++q) mu += em.weights[q] * phi[q];
        for (int q = 0; q <= order; ++q) {
          residual[q] += span.weight * phi[q] * (span.samples[k] - mu);
          scale = std::max(scale, std::fabs(span.weight * phi[q] * span.samples[k]));
        }
      }
    }
    for (int q = 0; q <= order; ++q) REQUIRE(std::fabs(residual[q]) <= 1e-8 * scale);
  }
}

TEST_CASE("rank-deficient duration-1 spans survive via the ridge", "[train]") {
  BasisConfig basis{BasisFamily::kHermiteOrthonormal, 2, 3.0, TimeConvention::kSegmentNormalized};
  // five duration-1 spans: identical design rows, order 2 -> singular normal matrix
  std::vector<std::vector<double>> store{{0.4}, {0.5}, {0.6}, {0.55}, {0.45}};
  std::vector<WlsSpan> spans;
  for (const auto& s : store) spans.push_back({s, 1.0});
  const auto em = weighted_least_squares(spans, basis, 2);
  REQUIRE(std::isfinite(em.weights[0]));
  REQUIRE(em.precision > 0.0);
}

TEST_CASE("initialize: single state spans the whole series with point duration", "[train]") {
  Series s;
  Rng rng(13);
  s.values.resize(20);
  for (auto& v : s.values) v = rng.normal();
  TrainConfig cfg;
  cfg.n_states = 1;
  cfg.orders = {2};
  const Model m = initialize(s, cfg);
  REQUIRE(validate(m).ok());
  const auto& d = std::get<DiscreteDuration>(m.durations[0]);
  REQUIRE(d.d_min == 20);
  REQUIRE(d.d_max == 20);
  // whole-series OLS
  const WlsSpan span{s.values, 1.0};
  const auto em = weighted_least_squares({&span, 1}, m.basis, 2);
  for (int q = 0; q <= 2; ++q) REQUIRE(m.emissions[0].weights[q] == em.weights[q]);
}

TEST_CASE("initialize with bounds places midpoint boundaries and validates", "[train]") {
  Series s;
  Rng rng(17);
  s.values.resize(210);
  for (auto& v : s.values) v = rng.normal();
  TrainConfig cfg;
  cfg.n_states = 7;
  cfg.orders = {3, 5, 1, 6, 1, 5, 3};
  cfg.bounds.assign(7, DurationWindow{20, 40});
  const Model m = initialize(s, cfg);
  REQUIRE(validate(m).ok());
  for (int j = 0; j < 7; ++j) {
    const auto& d = std::get<DiscreteDuration>(m.durations[j]);
    REQUIRE(d.d_min == 20);
    REQUIRE(d.d_max == 40);
    for (double p : d.pmf) REQUIRE(std::fabs(p - 1.0 / 21.0) < 1e-15);
  }
}

TEST_CASE("initialize gamma moment matching from the window", "[train]") {
  Series s;
  Rng rng(19);
  s.values.resize(120);
  for (auto& v : s.values) v = rng.normal();
  TrainConfig cfg;
  cfg.n_states = 4;
  cfg.orders = {1, 1, 1, 1};
  cfg.family = DurationFamily::kGamma;
  cfg.bounds.assign(4, DurationWindow{20, 40});
  const Model m = initialize(s, cfg);
  for (int j = 0; j < 4; ++j) {
    const auto& g = std::get<GammaDuration>(m.durations[j]);
    REQUIRE(std::fabs(g.shape - 36.0) < 1e-12);  // (30/5)^2
    REQUIRE(std::fabs(g.rate - 1.2) < 1e-12);    // 36/30
    REQUIRE(g.horizon == 120);
  }
}

TEST_CASE("initialize rejects series shorter than the state count", "[train]") {
  Series s;
  s.values = {1.0, 2.0};
  TrainConfig cfg;
  cfg.n_states = 3;
  cfg.orders = {0, 0, 0};
  REQUIRE_THROWS_AS(initialize(s, cfg), InfeasibleSeriesError);
}

TEST_CASE("em_step leaves a critical point unchanged", "[train]") {
  // Forced single segmentation: two states with point-mass durations that tile
  // T exactly, emissions OLS-fit on those segments.
  Rng rng(23);
  Series s;
  s.values.resize(9);
  for (int t = 0; t < 9; ++t) s.values[t] = 0.3 * t + 0.4 * rng.normal();
  TrainConfig cfg;
  cfg.n_states = 2;
  cfg.orders = {1, 2};
  cfg.bounds = {{4, 4}, {5, 5}};
  Model m = initialize(s, cfg);
  REQUIRE(validate(m).ok());
  const auto [next, ll] = em_step(m, s, cfg);
  REQUIRE(std::isfinite(ll));
  for (int j = 0; j < 2; ++j) {
    for (std::size_t q = 0; q < m.emissions[j].weights.size(); ++q)
      REQUIRE(std::fabs(next.emissions[j].weights[q] - m.emissions[j].weights[q]) < 1e-9);
    REQUIRE(std::fabs(next.emissions[j].precision - m.emissions[j].precision) <=
            1e-9 * m.emissions[j].precision);
    const auto& da = std::get<DiscreteDuration>(m.durations[j]);
    const auto& db = std::get<DiscreteDuration>(next.durations[j]);
    REQUIRE(da.d_min == db.d_min);
    for (std::size_t q = 0; q < da.pmf.size(); ++q)
      REQUIRE(std::fabs(da.pmf[q] - db.pmf[q]) < 1e-9);
  }
  REQUIRE(next.pi[0] == 1.0);
  REQUIRE(std::fabs(next.trans[0][1] - 1.0) < 1e-12);
}

TEST_CASE("left-to-right pi stays on the first state after a step", "[train]") {
  const Model truth = random_ltr(31, 3, false, 150.0);
  const SamplePath path = sample(truth, 77);
  const TrainConfig cfg = matching_config(truth, path.series, DurationFamily::kDiscrete);
  Model m = initialize(path.series, cfg);
  const auto [next, ll] = em_step(m, path.series, cfg);
  (void)ll;
  REQUIRE(std::fabs(next.pi[0] - 1.0) < 1e-12);
  for (int j = 1; j < 3; ++j) REQUIRE(next.pi[j] == 0.0);
}

TEST_CASE("soft EM is monotone on synthetic series", "[train]") {
  for (auto family : {DurationFamily::kDiscrete, DurationFamily::kGamma}) {
    for (int seedrep = 0; seedrep < 5; ++seedrep) {
      const Model truth = random_ltr(400 + seedrep, 3, false, 120.0);
      const SamplePath path = sample(truth, 500 + seedrep);
      TrainConfig cfg = matching_config(truth, path.series, family);
      cfg.max_iters = 4;
      cfg.loglik_tol = 0.0;  // run all iterations
      const auto [model, trace] = fit(path.series, cfg);
      (void)model;
      for (std::size_t k = 1; k < trace.loglik.size(); ++k)
        REQUIRE(trace.loglik[k] >= trace.loglik[k - 1] - 1e-8);
    }
  }
}

TEST_CASE("constraints survive several EM steps", "[train]") {
  const Model truth = random_ltr(97, 3, false, 100.0);
  const SamplePath path = sample(truth, 98);
  TrainConfig cfg = matching_config(truth, path.series, DurationFamily::kDiscrete);
  cfg.max_iters = 3;
  cfg.loglik_tol = 0.0;
  const auto [m, trace] = fit(path.series, cfg);
  (void)trace;
  REQUIRE(validate(m).ok());
  double pi_sum = 0.0;
  for (double p : m.pi) pi_sum += p;
  REQUIRE(std::fabs(pi_sum - 1.0) < 1e-12);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(m.trans[i][i] == 0.0);
    double row = 0.0;
    for (int j = 0; j < 3; ++j) {
      if (!m.topology_mask[i][j]) REQUIRE(m.trans[i][j] == 0.0);
      row += m.trans[i][j];
    }
    REQUIRE((row == 0.0 || std::fabs(row - 1.0) < 1e-12));
    const auto& d = std::get<DiscreteDuration>(m.durations[i]);
    REQUIRE(d.d_min >= cfg.bounds[i].lo);
    REQUIRE(d.d_max <= cfg.bounds[i].hi);
  }
}

TEST_CASE("fit iteration contract", "[train]") {
  const Model truth = random_ltr(55, 2, false, 100.0);
  const SamplePath path = sample(truth, 56);
  TrainConfig cfg = matching_config(truth, path.series, DurationFamily::kDiscrete);
  cfg.max_iters = 0;
  REQUIRE_THROWS_AS(fit(path.series, cfg), DomainError);
  cfg.max_iters = 1;
  const auto [m, trace] = fit(path.series, cfg);
  (void)m;
  REQUIRE(trace.loglik.size() == 1);
  REQUIRE(trace.iter_millis.size() == 1);
}

TEST_CASE("viterbi-mode training increases the best-path score", "[train]") {
  const Model truth = random_ltr(71, 3, false, 140.0);
  const SamplePath path = sample(truth, 72);
  TrainConfig cfg = matching_config(truth, path.series, DurationFamily::kDiscrete);
  cfg.mode = AssignMode::kViterbi;
  cfg.max_iters = 4;
  cfg.loglik_tol = 0.0;
  const auto [m, trace] = fit(path.series, cfg);
  REQUIRE(validate(m).ok());
  for (std::size_t k = 1; k < trace.loglik.size(); ++k)
    REQUIRE(trace.loglik[k] >= trace.loglik[k - 1] - 1e-8);
}

TEST_CASE("a state with zero posterior mass is reported by index", "[train]") {
  // State 1 must take the whole series; state 2 can never appear.
  Series s;
  Rng rng(83);
  s.values.resize(6);
  for (auto& v : s.values) v = rng.normal();
  TrainConfig cfg;
  cfg.n_states = 2;
  cfg.orders = {0, 0};
  cfg.bounds = {{6, 6}, {2, 3}};
  const Model m = initialize(s, cfg);
  try {
    em_step(m, s, cfg);
    FAIL("expected EstimationError");
  } catch (const EstimationError& e) {
    REQUIRE(std::string(e.what()).find("state 2") != std::string::npos);
  }
}
