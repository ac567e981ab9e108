// Log-domain forward-backward over the duration-explicit lattice:
// likelihood, segment posteriors, best segmentation, and the exponential
// enumeration of the raw likelihood sum kept as an independent reference.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "plhmm/errors.hpp"
#include "plhmm/logprob.hpp"
#include "plhmm/model.hpp"

namespace plhmm {

struct DurationWindow {
  int lo = 1;
  int hi = 1;
};

struct LatticeOptions {
  // Per-state duration search windows; empty means [1, T] for every state.
  std::vector<DurationWindow> bounds;
};

struct Lattice {
  std::vector<std::vector<double>> log_alpha;  // [T][N], -inf where unreachable
  std::vector<std::vector<double>> log_beta;   // [T][N], filled by backward()
  double log_likelihood = kLogZero;
  std::vector<DurationWindow> duration_bounds;  // windows actually searched
};

struct SegmentSpan {
  int state = 0;     // 0-based state index
  int start = 1;     // 1-based first sample of the segment
  int duration = 1;
};

struct Segmentation {
  std::vector<SegmentSpan> segments;
  double log_joint = kLogZero;
};

// Posterior weight that state `state` occupied exactly [end-duration+1, end].
struct SpanPosterior {
  int state = 0;
  int end = 1;  // 1-based
  int duration = 1;
  double weight = 0.0;
};

struct PosteriorStats {
  std::vector<double> init;                    // gamma_0, sums to 1
  std::vector<std::vector<double>> trans;      // expected transition counts gamma_ij
  std::vector<DurationStats> dur;              // per-state duration accumulators
  std::vector<SpanPosterior> spans;
  std::vector<std::vector<double>> occupancy;  // [T][N], rows sum to 1
};

namespace detail {

// Caches the per-state regression means mu[j][d][k] = w_j . phi(k, d) so the
// inner lattice loops reduce to residual sums. Under the segment-normalized
// convention phi depends on the hypothesized duration, so means are keyed by
// (state, duration) and filled lazily for the durations actually searched.
class SegmentScorer {
 public:
  SegmentScorer(const Model& m, const Series& s)
      : model_(&m), values_(s.values.data()) {
    const std::size_t n = static_cast<std::size_t>(m.n_states);
    half_log_prec_.resize(n);
    mu_.resize(n);
    for (std::size_t j = 0; j < n; ++j)
      half_log_prec_[j] = 0.5 * std::log(m.emissions[j].precision / (2.0 * kPi));
  }

  // log prod b_j(v_r) over the segment ending at 1-based time `end` with duration d.
  double segment_ll(int j, int end, int d) const {
    const std::vector<double>& mu = means(j, d);
    const double* v = values_ + (end - d);
    double ss = 0.0;
    for (int k = 0; k < d; ++k) {
      const double r = v[k] - mu[static_cast<std::size_t>(k)];
      ss += r * r;
    }
    return d * half_log_prec_[static_cast<std::size_t>(j)] -
           0.5 * model_->emissions[static_cast<std::size_t>(j)].precision * ss;
  }

  const std::vector<double>& means(int j, int d) const {
    auto& per_state = mu_[static_cast<std::size_t>(j)];
    if (per_state.size() <= static_cast<std::size_t>(d)) per_state.resize(d + 1);
    auto& row = per_state[static_cast<std::size_t>(d)];
    if (row.empty()) {
      const auto& em = model_->emissions[static_cast<std::size_t>(j)];
      std::vector<double> phi(static_cast<std::size_t>(em.order) + 1);
      row.resize(static_cast<std::size_t>(d));
      for (int k = 0; k < d; ++k) {
        basis_eval_into(model_->basis, em.order, k, d, phi);
        double dot = 0.0;
        for (std::size_t q = 0; q < phi.size(); ++q) dot += em.weights[q] * phi[q];
        row[static_cast<std::size_t>(k)] = dot;
      }
    }
    return row;
  }

 private:
  const Model* model_;
  const double* values_;
  std::vector<double> half_log_prec_;
  mutable std::vector<std::vector<std::vector<double>>> mu_;
};

// Log-domain parameter tables shared by the lattice passes.
struct LogTables {
  std::vector<double> pi;
  std::vector<std::vector<double>> trans;
  std::vector<std::vector<double>> pmf;  // pmf[j][d] for d in [1, hi_j]

  LogTables(const Model& m, const std::vector<DurationWindow>& bounds) {
    const std::size_t n = static_cast<std::size_t>(m.n_states);
    pi.resize(n);
    trans.assign(n, std::vector<double>(n, kLogZero));
    pmf.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      pi[j] = log_of(m.pi[j]);
      for (std::size_t i = 0; i < n; ++i) trans[i][j] = log_of(m.trans[i][j]);
      const auto table = duration_pmf_table(m.durations[j]);
      pmf[j].assign(static_cast<std::size_t>(std::max(bounds[j].hi, 0)) + 1, kLogZero);
      for (int d = 1; d <= bounds[j].hi; ++d) {
        if (static_cast<std::size_t>(d) <= table.size())
          pmf[j][static_cast<std::size_t>(d)] = log_of(table[static_cast<std::size_t>(d - 1)]);
      }
    }
  }
};

}  // namespace detail

// Effective search window per state: the caller-provided bounds (default
// [1, T]) clipped to [1, T] and to the duration model's support range.
inline std::vector<DurationWindow> resolve_duration_bounds(const Model& m, int series_length,
                                                           const LatticeOptions& opt) {
  const std::size_t n = static_cast<std::size_t>(m.n_states);
  if (!opt.bounds.empty() && opt.bounds.size() != n)
    throw DomainError("duration bounds must have one window per state");
  std::vector<DurationWindow> out(n);
  for (std::size_t j = 0; j < n; ++j) {
    int lo = std::max(1, support_min(m.durations[j]));
    int hi = std::min(series_length, support_max(m.durations[j]));
    if (!opt.bounds.empty()) {
      if (opt.bounds[j].lo < 1 || opt.bounds[j].hi < opt.bounds[j].lo)
        throw DomainError("duration window invalid at state " + std::to_string(j + 1));
      lo = std::max(lo, opt.bounds[j].lo);
      hi = std::min(hi, opt.bounds[j].hi);
    }
    out[j] = {lo, hi};
  }
  return out;
}

// Alpha recursion: alpha_t(j) combines the whole-prefix segment (the index t
// plays the role of duration for the first state) with transition terms
// alpha_{t-d}(i) a_ij p_j(d) prod b_j over the searched duration window.
inline Lattice forward(const Model& m, const Series& series, const LatticeOptions& opt = {}) {
  require_valid(m);
  const int T = static_cast<int>(series.values.size());
  if (T < 1) throw DomainError("forward: empty series");
  const int N = m.n_states;

  Lattice lat;
  lat.duration_bounds = resolve_duration_bounds(m, T, opt);
  const detail::LogTables tab(m, lat.duration_bounds);
  detail::SegmentScorer scorer(m, series);

  lat.log_alpha.assign(static_cast<std::size_t>(T), std::vector<double>(N, kLogZero));
  for (int t = 1; t <= T; ++t) {
    for (int j = 0; j < N; ++j) {
      const auto [lo, hi] = lat.duration_bounds[static_cast<std::size_t>(j)];
      double acc = kLogZero;
      const int d_top = std::min(hi, t);
      for (int d = lo; d <= d_top; ++d) {
        const double seg = scorer.segment_ll(j, t, d);
        const double lp = tab.pmf[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
        if (d == t) {
          acc = log_sum_exp(acc, tab.pi[static_cast<std::size_t>(j)] + lp + seg);
        } else {
          double inner = kLogZero;
          const auto& arow = lat.log_alpha[static_cast<std::size_t>(t - d - 1)];
          for (int i = 0; i < N; ++i) {
            if (i == j) continue;
            const double la = tab.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (la == kLogZero) continue;
            inner = log_sum_exp(inner, arow[static_cast<std::size_t>(i)] + la);
          }
          acc = log_sum_exp(acc, inner + lp + seg);
        }
      }
      lat.log_alpha[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j)] = acc;
    }
  }
  lat.log_likelihood = log_sum_exp(std::span<const double>(lat.log_alpha[static_cast<std::size_t>(T - 1)]));
  if (lat.log_likelihood == kLogZero)
    throw InfeasibleSeriesError(
        "forward: no state/duration tiling of the series has positive probability");
  return lat;
}

// Beta recursion: beta_T(i) = 1; earlier cells sum a_ij p_j(d) prod b_j
// beta_{t+d}(j) over successors and durations.
inline void backward(const Model& m, const Series& series, Lattice& lat) {
  require_valid(m);
  const int T = static_cast<int>(series.values.size());
  const int N = m.n_states;
  if (lat.log_alpha.size() != static_cast<std::size_t>(T) ||
      lat.duration_bounds.size() != static_cast<std::size_t>(N))
    throw DomainError("backward: lattice does not match this model/series");

  const detail::LogTables tab(m, lat.duration_bounds);
  detail::SegmentScorer scorer(m, series);

  lat.log_beta.assign(static_cast<std::size_t>(T), std::vector<double>(N, kLogZero));
  lat.log_beta[static_cast<std::size_t>(T - 1)].assign(static_cast<std::size_t>(N), 0.0);
  for (int t = T - 1; t >= 1; --t) {
    auto& brow = lat.log_beta[static_cast<std::size_t>(t - 1)];
    for (int j = 0; j < N; ++j) {
      const auto [lo, hi] = lat.duration_bounds[static_cast<std::size_t>(j)];
      const int d_top = std::min(hi, T - t);
      for (int d = lo; d <= d_top; ++d) {
        const double common = tab.pmf[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)] +
                              scorer.segment_ll(j, t + d, d) +
                              lat.log_beta[static_cast<std::size_t>(t + d - 1)][static_cast<std::size_t>(j)];
        for (int i = 0; i < N; ++i) {
          if (i == j) continue;
          const double la = tab.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
          if (la == kLogZero) continue;
          brow[static_cast<std::size_t>(i)] = log_sum_exp(brow[static_cast<std::size_t>(i)], la + common);
        }
      }
    }
  }
}

inline Lattice forward_backward(const Model& m, const Series& series,
                                const LatticeOptions& opt = {}) {
  Lattice lat = forward(m, series, opt);
  backward(m, series, lat);
  return lat;
}

// Span posteriors omega(j, t, d) = exp(log numerator - log likelihood) with
// the initial-state variant included, aggregated into every reestimation
// statistic.
inline PosteriorStats posteriors(const Model& m, const Series& series, const Lattice& lat) {
  require_valid(m);
  const int T = static_cast<int>(series.values.size());
  const int N = m.n_states;
  if (lat.log_alpha.size() != static_cast<std::size_t>(T) ||
      lat.log_beta.size() != static_cast<std::size_t>(T) ||
      lat.duration_bounds.size() != static_cast<std::size_t>(N) ||
      !std::isfinite(lat.log_likelihood))
    throw DomainError("posteriors: lattice missing passes or mismatched with model/series");

  const detail::LogTables tab(m, lat.duration_bounds);
  detail::SegmentScorer scorer(m, series);
  const double ll = lat.log_likelihood;

  PosteriorStats post;
  post.init.assign(static_cast<std::size_t>(N), 0.0);
  post.trans.assign(static_cast<std::size_t>(N), std::vector<double>(N, 0.0));
  post.dur.resize(static_cast<std::size_t>(N));
  post.occupancy.assign(static_cast<std::size_t>(T), std::vector<double>(N, 0.0));

  for (int t = 1; t <= T; ++t) {
    for (int j = 0; j < N; ++j) {
      const auto [lo, hi] = lat.duration_bounds[static_cast<std::size_t>(j)];
      const int d_top = std::min(hi, t);
      for (int d = lo; d <= d_top; ++d) {
        const double seg = scorer.segment_ll(j, t, d);
        const double lp = tab.pmf[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
        const double tail = lat.log_beta[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j)];
        double span_weight = 0.0;
        if (d == t) {
          const double num = tab.pi[static_cast<std::size_t>(j)] + lp + seg + tail;
          if (num != kLogZero) {
            const double w = std::exp(num - ll);
            span_weight += w;
            post.init[static_cast<std::size_t>(j)] += w;
          }
        } else {
          for (int i = 0; i < N; ++i) {
            if (i == j) continue;
            const double la = tab.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (la == kLogZero) continue;
            const double num = lat.log_alpha[static_cast<std::size_t>(t - d - 1)][static_cast<std::size_t>(i)] +
                               la + lp + seg + tail;
            if (num == kLogZero) continue;
            const double w = std::exp(num - ll);
            post.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += w;
            span_weight += w;
          }
        }
        if (span_weight > 0.0) {
          post.spans.push_back({j, t, d, span_weight});
          post.dur[static_cast<std::size_t>(j)].add(d, span_weight);
          for (int r = t - d; r < t; ++r)
            post.occupancy[static_cast<std::size_t>(r)][static_cast<std::size_t>(j)] += span_weight;
        }
      }
    }
  }
  return post;
}

// Max-product counterpart of the alpha recursion. Ties prefer the earlier
// segment boundary (larger duration), then the lower predecessor index.
inline Segmentation viterbi(const Model& m, const Series& series, const LatticeOptions& opt = {}) {
  require_valid(m);
  const int T = static_cast<int>(series.values.size());
  if (T < 1) throw DomainError("viterbi: empty series");
  const int N = m.n_states;

  const auto bounds = resolve_duration_bounds(m, T, opt);
  const detail::LogTables tab(m, bounds);
  detail::SegmentScorer scorer(m, series);

  struct Back {
    int pred = -2;  // -1 marks the initial segment
    int dur = 0;
  };
  std::vector<std::vector<double>> delta(static_cast<std::size_t>(T),
                                         std::vector<double>(N, kLogZero));
  std::vector<std::vector<Back>> back(static_cast<std::size_t>(T),
                                      std::vector<Back>(static_cast<std::size_t>(N)));

  for (int t = 1; t <= T; ++t) {
    for (int j = 0; j < N; ++j) {
      const auto [lo, hi] = bounds[static_cast<std::size_t>(j)];
      double best = kLogZero;
      Back best_back;
      const int d_top = std::min(hi, t);
      for (int d = d_top; d >= lo; --d) {
        const double lp = tab.pmf[static_cast<std::size_t>(j)][static_cast<std::size_t>(d)];
        if (lp == kLogZero) continue;
        const double seg = scorer.segment_ll(j, t, d);
        if (d == t) {
          const double cand = tab.pi[static_cast<std::size_t>(j)] + lp + seg;
          if (cand > best) {
            best = cand;
            best_back = {-1, d};
          }
        } else {
          for (int i = 0; i < N; ++i) {
            if (i == j) continue;
            const double la = tab.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            if (la == kLogZero) continue;
            const double cand =
                delta[static_cast<std::size_t>(t - d - 1)][static_cast<std::size_t>(i)] + la + lp + seg;
            if (cand > best) {
              best = cand;
              best_back = {i, d};
            }
          }
        }
      }
      delta[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j)] = best;
      back[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j)] = best_back;
    }
  }

  int best_state = 0;
  double best_score = kLogZero;
  for (int j = 0; j < N; ++j) {
    const double s = delta[static_cast<std::size_t>(T - 1)][static_cast<std::size_t>(j)];
    if (s > best_score) {
      best_score = s;
      best_state = j;
    }
  }
  if (best_score == kLogZero)
    throw InfeasibleSeriesError(
        "viterbi: no state/duration tiling of the series has positive probability");

  Segmentation seg;
  seg.log_joint = best_score;
  int t = T;
  int j = best_state;
  while (t > 0) {
    const Back& b = back[static_cast<std::size_t>(t - 1)][static_cast<std::size_t>(j)];
    seg.segments.push_back({j, t - b.dur + 1, b.dur});
    t -= b.dur;
    if (b.pred < 0) break;
    j = b.pred;
  }
  std::reverse(seg.segments.begin(), seg.segments.end());
  return seg;
}

// Exact logsumexp of Eq.-style raw likelihood terms over every state sequence
// and duration tiling with sum(d_s) = T. Exponential: guarded to tiny inputs;
// kept structurally independent of the lattice recursions so it can referee them.
inline double brute_force_loglik(const Model& m, const Series& series) {
  require_valid(m);
  const int T = static_cast<int>(series.values.size());
  const int N = m.n_states;
  if (N > 4 || T > 12)
    throw DomainError("brute_force_loglik: refused, enumeration guarded to N <= 4 and T <= 12");

  const std::span<const double> values(series.values);
  double total = kLogZero;
  auto extend = [&](auto&& self, int consumed, int last, double acc) -> void {
    if (consumed == T) {
      total = log_sum_exp(total, acc);
      return;
    }
    const int remaining = T - consumed;
    for (int j = 0; j < N; ++j) {
      double entry;
      if (last < 0) {
        entry = log_of(m.pi[static_cast<std::size_t>(j)]);
      } else {
        if (j == last) continue;
        entry = log_of(m.trans[static_cast<std::size_t>(last)][static_cast<std::size_t>(j)]);
      }
      if (entry == kLogZero) continue;
      for (int d = 1; d <= remaining; ++d) {
        const double lp = log_of(duration_prob(m.durations[static_cast<std::size_t>(j)], d));
        if (lp == kLogZero) continue;
        const double seg = segment_log_likelihood(m.emissions[static_cast<std::size_t>(j)], m.basis,
                                                  values.subspan(static_cast<std::size_t>(consumed),
                                                                 static_cast<std::size_t>(d)),
                                                  d);
        self(self, consumed + d, j, acc + entry + lp + seg);
      }
    }
  };
  extend(extend, 0, -1, 0.0);
  return total;
}

}  // namespace plhmm
