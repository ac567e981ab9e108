#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "plhmm/lattice.hpp"
#include "support/oracles.hpp"

using namespace plhmm;

namespace {

// Single state forced to cover the whole series in one segment.
std::pair<Model, Series> forced_single_segmentation() {
  Model m;
  m.n_states = 1;
  m.pi = {1.0};
  m.trans = {{0.0}};
  m.topology_mask = {{0}};
  m.durations.emplace_back(DiscreteDuration{3, 3, {1.0}});
  m.emissions.push_back(EmissionParams{{0.0}, 1.0, 0});
  m.basis = {BasisFamily::kMonomial, 0, 1.0, TimeConvention::kSegmentNormalized};
  Series s;
  s.values = {0.0, 0.0, 0.0};
  return {m, s};
}

testsupport::InstanceConfig mixed_instance_config(int rep) {
  testsupport::InstanceConfig cfg;
  cfg.seed = 1000 + static_cast<std::uint64_t>(rep);
  cfg.n_states = 1 + rep % 3;
  cfg.series_length = 4 + rep % 5;
  cfg.max_support = 4;
  cfg.gamma = rep % 2 == 1;
  cfg.hermite = rep % 3 != 0;
  return cfg;
}

}  // namespace

TEST_CASE("forward likelihood of a forced segmentation", "[lattice]") {
  const auto [m, s] = forced_single_segmentation();
  const Lattice lat = forward(m, s);
  REQUIRE(std::fabs(lat.log_likelihood - (-2.7568155996140182)) < 1e-12);
  REQUIRE(std::fabs(brute_force_loglik(m, s) - lat.log_likelihood) < 1e-12);
}

TEST_CASE("forward matches the enumeration oracle on random instances", "[lattice]") {
  for (int rep = 0; rep < 60; ++rep) {
    const auto [m, s] = testsupport::random_instance(mixed_instance_config(rep));
    const double reference = brute_force_loglik(m, s);
    const double lattice = forward(m, s).log_likelihood;
    REQUIRE(std::fabs(lattice - reference) <= 1e-9 * std::fabs(reference));
    // the library enumerator and the test-side enumerator are independent routes
    const auto oracle = testsupport::enumerate_paths(m, s);
    REQUIRE(std::fabs(oracle.loglik - reference) <= 1e-9 * std::fabs(reference));
  }
}

TEST_CASE("forward rejects a series with no feasible tiling", "[lattice]") {
  Model m;
  m.n_states = 2;
  m.pi = {1.0, 0.0};
  m.trans = {{0.0, 1.0}, {0.0, 0.0}};
  m.topology_mask = {{0, 1}, {0, 0}};
  m.durations.emplace_back(DiscreteDuration{9, 9, {1.0}});  // longer than the series
  m.durations.emplace_back(DiscreteDuration{1, 2, {0.5, 0.5}});
  m.emissions.push_back(EmissionParams{{0.0}, 1.0, 0});
  m.emissions.push_back(EmissionParams{{0.0}, 1.0, 0});
  m.basis = {BasisFamily::kMonomial, 0, 1.0, TimeConvention::kSegmentNormalized};
  Series s;
  s.values.assign(5, 0.0);
  REQUIRE_THROWS_AS(forward(m, s), InfeasibleSeriesError);
  REQUIRE_THROWS_AS(viterbi(m, s), InfeasibleSeriesError);
}

TEST_CASE("backward consistency on the forced model", "[lattice]") {
  const auto [m, s] = forced_single_segmentation();
  Lattice lat = forward_backward(m, s);
  REQUIRE(lat.log_beta[2][0] == 0.0);
  // the initial-term combination pi_1 p_1(3) prod b_1 beta_3(1) reproduces
  // the likelihood (single path)
  detail::SegmentScorer scorer(m, s);
  const double combined = std::log(m.pi[0]) + std::log(duration_prob(m.durations[0], 3)) +
                          scorer.segment_ll(0, 3, 3) + lat.log_beta[2][0];
  REQUIRE(std::fabs(combined - lat.log_likelihood) < 1e-12);
}

TEST_CASE("backward terminal condition and first-segment decomposition", "[lattice]") {
  for (int rep = 0; rep < 25; ++rep) {
    const auto [m, s] = testsupport::random_instance(mixed_instance_config(rep));
    const int T = static_cast<int>(s.values.size());
    Lattice lat = forward_backward(m, s);
    for (int i = 0; i < m.n_states; ++i) REQUIRE(lat.log_beta[T - 1][i] == 0.0);
    // P(v|lambda) = sum_j sum_t pi_j p_j(t) prod b_j beta_t(j): every path has
    // a unique first segment.
    double decomposed = kLogZero;
    detail::SegmentScorer scorer(m, s);
    for (int j = 0; j < m.n_states; ++j) {
      for (int t = 1; t <= T; ++t) {
        const double lp = log_of(duration_prob(m.durations[j], t));
        if (lp == kLogZero || m.pi[j] == 0.0) continue;
        decomposed = log_sum_exp(decomposed, std::log(m.pi[j]) + lp + scorer.segment_ll(j, t, t) +
                                                 lat.log_beta[t - 1][j]);
      }
    }
    REQUIRE(std::fabs(decomposed - lat.log_likelihood) <=
            1e-9 * std::fabs(lat.log_likelihood));
  }
}

TEST_CASE("posteriors of the forced segmentation are certain", "[lattice]") {
  const auto [m, s] = forced_single_segmentation();
  const Lattice lat = forward_backward(m, s);
  const PosteriorStats post = posteriors(m, s, lat);
  REQUIRE(post.spans.size() == 1);
  REQUIRE(post.spans[0].state == 0);
  REQUIRE(post.spans[0].end == 3);
  REQUIRE(post.spans[0].duration == 3);
  REQUIRE(std::fabs(post.spans[0].weight - 1.0) < 1e-12);
  for (int t = 0; t < 3; ++t) REQUIRE(std::fabs(post.occupancy[t][0] - 1.0) < 1e-12);
  REQUIRE(std::fabs(post.init[0] - 1.0) < 1e-12);
}

TEST_CASE("posterior statistics match the enumeration oracle", "[lattice]") {
  for (int rep = 0; rep < 40; ++rep) {
    const auto [m, s] = testsupport::random_instance(mixed_instance_config(rep));
    const int T = static_cast<int>(s.values.size());
    const int N = m.n_states;
    const Lattice lat = forward_backward(m, s);
    const PosteriorStats post = posteriors(m, s, lat);
    const auto oracle = testsupport::enumerate_paths(m, s);

    double init_sum = 0.0;
    for (int j = 0; j < N; ++j) {
      REQUIRE(std::fabs(post.init[j] - oracle.init[j]) < 1e-9);
      init_sum += post.init[j];
    }
    REQUIRE(std::fabs(init_sum - 1.0) < 1e-9);

    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j)
        REQUIRE(std::fabs(post.trans[i][j] - oracle.trans[i][j]) < 1e-9);

    for (int t = 0; t < T; ++t) {
      double row = 0.0;
      for (int j = 0; j < N; ++j) {
        REQUIRE(std::fabs(post.occupancy[t][j] - oracle.occupancy[t][j]) < 1e-9);
        row += post.occupancy[t][j];
      }
      REQUIRE(std::fabs(row - 1.0) < 1e-9);
    }

    for (int j = 0; j < N; ++j) {
      for (const auto& [key, count] : oracle.dur) {
        if (key.first != j) continue;
        const auto it = post.dur[j].counts.find(key.second);
        const double got = it == post.dur[j].counts.end() ? 0.0 : it->second;
        REQUIRE(std::fabs(got - count) < 1e-9);
      }
    }
  }
}

TEST_CASE("viterbi matches the enumerated argmax", "[lattice]") {
  for (int rep = 0; rep < 40; ++rep) {
    const auto [m, s] = testsupport::random_instance(mixed_instance_config(rep));
    const Segmentation got = viterbi(m, s);
    const auto oracle = testsupport::enumerate_paths(m, s);
    REQUIRE(std::fabs(got.log_joint - oracle.best.log_joint) <=
            1e-9 * std::fabs(oracle.best.log_joint));
    REQUIRE(got.segments.size() == oracle.best.segments.size());
    for (std::size_t k = 0; k < got.segments.size(); ++k) {
      REQUIRE(got.segments[k].state == oracle.best.segments[k].state);
      REQUIRE(got.segments[k].start == oracle.best.segments[k].start);
      REQUIRE(got.segments[k].duration == oracle.best.segments[k].duration);
    }
    // the best path never beats the total likelihood
    REQUIRE(got.log_joint <= forward(m, s).log_likelihood + 1e-12);
  }
}

TEST_CASE("viterbi breaks exact ties toward the earliest boundary", "[lattice]") {
  // Two identical states, durations uniform on {2, 3}, T = 5, constant series:
  // tilings (2,3) and (3,2) have exactly equal joints; (2,3) boundaries earlier.
  Model m;
  m.n_states = 2;
  m.pi = {1.0, 0.0};
  m.trans = {{0.0, 1.0}, {0.0, 0.0}};
  m.topology_mask = {{0, 1}, {0, 0}};
  for (int j = 0; j < 2; ++j) {
    m.durations.emplace_back(DiscreteDuration{2, 3, {0.5, 0.5}});
    m.emissions.push_back(EmissionParams{{0.0}, 1.0, 0});
  }
  m.basis = {BasisFamily::kMonomial, 0, 1.0, TimeConvention::kSegmentNormalized};
  Series s;
  s.values.assign(5, 0.0);
  const Segmentation seg = viterbi(m, s);
  REQUIRE(seg.segments.size() == 2);
  REQUIRE(seg.segments[0].duration == 2);
  REQUIRE(seg.segments[1].duration == 3);
  // two feasible tilings, so the max is strictly below the sum
  REQUIRE(seg.log_joint < forward(m, s).log_likelihood);
}

TEST_CASE("viterbi equals the likelihood when only one tiling exists", "[lattice]") {
  const auto [m, s] = forced_single_segmentation();
  const Segmentation seg = viterbi(m, s);
  REQUIRE(seg.segments.size() == 1);
  REQUIRE(std::fabs(seg.log_joint - forward(m, s).log_likelihood) < 1e-12);
}

TEST_CASE("widening the duration window beyond the support changes nothing", "[lattice]") {
  for (int rep = 0; rep < 10; ++rep) {
    auto cfg = mixed_instance_config(rep * 2);  // even reps: discrete supports
    cfg.gamma = false;
    const auto [m, s] = testsupport::random_instance(cfg);
    const int T = static_cast<int>(s.values.size());
    const double unbounded = forward(m, s).log_likelihood;
    LatticeOptions opt;
    for (int j = 0; j < m.n_states; ++j)
      opt.bounds.push_back({1, std::min(T, support_max(m.durations[j]) + 2)});
    const double widened = forward(m, s, opt).log_likelihood;
    REQUIRE(std::fabs(widened - unbounded) < 1e-12);
  }
}

TEST_CASE("brute force sums exactly the hand-countable tilings", "[lattice]") {
  // Left-to-right, both states with duration support {1,2,3}, T = 4: the only
  // feasible tilings are (1,3), (2,2), (3,1); no single-state completion since
  // 4 is off support.
  Model m;
  m.n_states = 2;
  m.pi = {1.0, 0.0};
  m.trans = {{0.0, 1.0}, {0.0, 0.0}};
  m.topology_mask = {{0, 1}, {0, 0}};
  for (int j = 0; j < 2; ++j) {
    m.durations.emplace_back(DiscreteDuration{1, 3, {1.0 / 3, 1.0 / 3, 1.0 / 3}});
    m.emissions.push_back(EmissionParams{{0.2 * (j + 1)}, 1.5, 0});
  }
  m.basis = {BasisFamily::kMonomial, 0, 1.0, TimeConvention::kSegmentNormalized};
  Series s;
  s.values = {0.3, -0.1, 0.4, 0.2};

  const std::span<const double> v(s.values);
  auto joint = [&](int d1) {
    const double lp = std::log(1.0 / 3) + std::log(1.0 / 3);  // p1(d1) p2(4 - d1)
    return lp + segment_log_likelihood(m.emissions[0], m.basis, v.subspan(0, d1), d1) +
           segment_log_likelihood(m.emissions[1], m.basis, v.subspan(d1, 4 - d1), 4 - d1);
  };
  const double by_hand = log_sum_exp(log_sum_exp(joint(1), joint(2)), joint(3));
  REQUIRE(std::fabs(brute_force_loglik(m, s) - by_hand) < 1e-12);
  REQUIRE(std::fabs(forward(m, s).log_likelihood - by_hand) < 1e-12);
}

TEST_CASE("brute force enumeration refuses large instances", "[lattice]") {
  testsupport::InstanceConfig cfg;
  cfg.n_states = 2;
  cfg.series_length = 13;
  const auto [m, s] = testsupport::random_instance(cfg);
  REQUIRE_THROWS_AS(brute_force_loglik(m, s), DomainError);
}
