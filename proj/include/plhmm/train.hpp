// One-shot maximum-likelihood training: left-to-right initialization from a
// single exemplar and Baum-Welch-style iteration with soft (posterior-weighted)
// or hard (best-segmentation) assignment.
#pragma once

#include <chrono>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "plhmm/lattice.hpp"
#include "plhmm/model.hpp"

namespace plhmm {

enum class DurationFamily { kDiscrete, kGamma };
enum class AssignMode { kSoft, kViterbi };

struct TrainConfig {
  int n_states = 7;
  std::vector<int> orders = {3, 5, 1, 6, 1, 5, 3};
  DurationFamily family = DurationFamily::kDiscrete;
  std::vector<DurationWindow> bounds;  // empty = unsupervised, search [1, T]
  bool bounds_init_only = false;       // bounds seed the initializer but the lattice stays unbounded
  AssignMode mode = AssignMode::kSoft;
  std::optional<int> max_iters;        // defaults: 4 discrete, 10 gamma
  double loglik_tol = 1e-6;
  std::uint64_t seed = 0;
  // Solve the gamma shape against the freshly updated rate (one Gauss-Seidel
  // sweep, each step an exact coordinate argmax, so the likelihood cannot
  // drop). false reproduces the independent stationarity pair, which both
  // reference the pre-update parameters and can oscillate.
  bool coupled_gamma_update = true;
  BasisFamily basis_family = BasisFamily::kHermiteOrthonormal;
  double basis_scale = 3.0;
  TimeConvention time_convention = TimeConvention::kSegmentNormalized;
};

struct FitTrace {
  std::vector<double> loglik;       // pre-update log-likelihood per iteration
  std::vector<double> iter_millis;  // wall time per iteration
  bool converged = false;
};

// One weighted regression observation group: a candidate segment with its
// posterior weight. The design matrix rows follow from the span's duration.
struct WlsSpan {
  std::span<const double> samples;
  double weight = 1.0;
};

namespace detail {

inline constexpr double kPrecisionFloor = 1e-8;
inline constexpr double kPrecisionCeil = 1e12;

// In-place Cholesky solve of the symmetric system a x = rhs (row-major full
// storage). Returns false when a pivot falls below the relative threshold.
inline bool cholesky_solve(std::vector<double> a, std::vector<double>& rhs, int p) {
  double max_diag = 0.0;
  for (int r = 0; r < p; ++r) max_diag = std::max(max_diag, a[static_cast<std::size_t>(r * p + r)]);
  const double tol = 1e-12 * std::max(max_diag, 1e-300);
  for (int c = 0; c < p; ++c) {
    double diag = a[static_cast<std::size_t>(c * p + c)];
    for (int k = 0; k < c; ++k) {
      const double l = a[static_cast<std::size_t>(c * p + k)];
      diag -= l * l;
    }
    if (!(diag > tol)) return false;
    const double root = std::sqrt(diag);
    a[static_cast<std::size_t>(c * p + c)] = root;
    for (int r = c + 1; r < p; ++r) {
      double v = a[static_cast<std::size_t>(r * p + c)];
      for (int k = 0; k < c; ++k)
        v -= a[static_cast<std::size_t>(r * p + k)] * a[static_cast<std::size_t>(c * p + k)];
      a[static_cast<std::size_t>(r * p + c)] = v / root;
    }
  }
  for (int r = 0; r < p; ++r) {  // L y = rhs
    double v = rhs[static_cast<std::size_t>(r)];
    for (int k = 0; k < r; ++k) v -= a[static_cast<std::size_t>(r * p + k)] * rhs[static_cast<std::size_t>(k)];
    rhs[static_cast<std::size_t>(r)] = v / a[static_cast<std::size_t>(r * p + r)];
  }
  for (int r = p - 1; r >= 0; --r) {  // L^T x = y
    double v = rhs[static_cast<std::size_t>(r)];
    for (int k = r + 1; k < p; ++k) v -= a[static_cast<std::size_t>(k * p + r)] * rhs[static_cast<std::size_t>(k)];
    rhs[static_cast<std::size_t>(r)] = v / a[static_cast<std::size_t>(r * p + r)];
  }
  return true;
}

}  // namespace detail

// Minimizes sum_spans w ||v - Phi_d beta||^2 by normal equations; the inverse
// precision is the weighted residual variance, clamped away from degenerate
// zero-residual collapse. Singular normal matrices get one ridge retry
// (1e-8 * trace / (M+1) on the diagonal), covering duration-1 spans whose
// design rows repeat.
inline EmissionParams weighted_least_squares(std::span<const WlsSpan> spans,
                                             const BasisConfig& basis, int order) {
  if (order < 0) throw DomainError("weighted_least_squares: negative order");
  const int p = order + 1;
  std::vector<double> normal(static_cast<std::size_t>(p) * p, 0.0);
  std::vector<double> rhs(static_cast<std::size_t>(p), 0.0);
  std::vector<double> phi(static_cast<std::size_t>(p));
  double effective = 0.0;
  for (const auto& span : spans) {
    const int d = static_cast<int>(span.samples.size());
    if (d < 1) throw DomainError("weighted_least_squares: empty span");
    if (!(span.weight >= 0.0) || !std::isfinite(span.weight))
      throw DomainError("weighted_least_squares: span weight must be finite and >= 0");
    if (span.weight == 0.0) continue;
    effective += span.weight * d;
    for (int k = 0; k < d; ++k) {
      basis_eval_into(basis, order, k, d, phi);
      const double wv = span.weight * span.samples[static_cast<std::size_t>(k)];
      for (int r = 0; r < p; ++r) {
        rhs[static_cast<std::size_t>(r)] += wv * phi[static_cast<std::size_t>(r)];
        const double wr = span.weight * phi[static_cast<std::size_t>(r)];
        for (int c = r; c < p; ++c)
          normal[static_cast<std::size_t>(r * p + c)] += wr * phi[static_cast<std::size_t>(c)];
      }
    }
  }
  if (!(effective > static_cast<double>(p)))
    throw EstimationError("weighted_least_squares: effective sample mass must exceed order + 1");
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < r; ++c)
      normal[static_cast<std::size_t>(r * p + c)] = normal[static_cast<std::size_t>(c * p + r)];

  std::vector<double> weights = rhs;
  if (!detail::cholesky_solve(normal, weights, p)) {
    double trace = 0.0;
    for (int r = 0; r < p; ++r) trace += normal[static_cast<std::size_t>(r * p + r)];
    std::vector<double> ridged = normal;
    const double ridge = 1e-8 * trace / p;
    for (int r = 0; r < p; ++r) ridged[static_cast<std::size_t>(r * p + r)] += ridge;
    weights = rhs;
    if (!detail::cholesky_solve(ridged, weights, p))
      throw EstimationError("weighted_least_squares: design matrix rank-deficient beyond ridge rescue");
  }

  double rss = 0.0;
  for (const auto& span : spans) {
    if (span.weight == 0.0) continue;
    const int d = static_cast<int>(span.samples.size());
    for (int k = 0; k < d; ++k) {
      basis_eval_into(basis, order, k, d, phi);
      double mu = 0.0;
      for (int r = 0; r < p; ++r) mu += weights[static_cast<std::size_t>(r)] * phi[static_cast<std::size_t>(r)];
      const double res = span.samples[static_cast<std::size_t>(k)] - mu;
      rss += span.weight * res * res;
    }
  }
  EmissionParams em;
  em.order = order;
  em.weights = std::move(weights);
  const double variance = rss / effective;
  em.precision = variance > 0.0
                     ? std::clamp(1.0 / variance, detail::kPrecisionFloor, detail::kPrecisionCeil)
                     : detail::kPrecisionCeil;
  return em;
}

namespace detail {

inline void check_train_config(const TrainConfig& cfg, int series_length) {
  if (cfg.n_states < 1) throw DomainError("train config: n_states must be >= 1");
  if (static_cast<int>(cfg.orders.size()) != cfg.n_states)
    throw DomainError("train config: orders list must have one entry per state");
  for (int o : cfg.orders)
    if (o < 0) throw DomainError("train config: negative basis order");
  if (!cfg.bounds.empty()) {
    if (static_cast<int>(cfg.bounds.size()) != cfg.n_states)
      throw DomainError("train config: bounds list must have one window per state");
    for (const auto& b : cfg.bounds)
      if (b.lo < 1 || b.hi < b.lo || b.hi > series_length)
        throw DomainError("train config: duration bounds must lie within [1, T]");
  }
  if (cfg.max_iters && *cfg.max_iters < 1)
    throw DomainError("train config: max_iters must be >= 1");
}

inline LatticeOptions search_options(const TrainConfig& cfg) {
  LatticeOptions opt;
  if (!cfg.bounds.empty() && !cfg.bounds_init_only) opt.bounds = cfg.bounds;
  return opt;
}

inline DurationWindow reestimation_window(const TrainConfig& cfg, int state, int series_length) {
  if (!cfg.bounds.empty() && !cfg.bounds_init_only) return cfg.bounds[static_cast<std::size_t>(state)];
  return {1, series_length};
}

}  // namespace detail

// Left-to-right initial guess from the exemplar: pi = e1, superdiagonal
// transitions, the last row absorbing. The series splits into contiguous
// segments (scaled cumulative bound midpoints when bounds are given, equal
// lengths otherwise); emissions come from per-segment least squares, discrete
// durations start uniform on their windows, and gamma durations moment-match
// the window midpoint with sigma0 = max(1, (hi - lo) / 4).
inline Model initialize(const Series& series, const TrainConfig& cfg) {
  const int T = static_cast<int>(series.values.size());
  detail::check_train_config(cfg, T);
  const int N = cfg.n_states;
  if (T < N) throw InfeasibleSeriesError("initialize: series shorter than the state count");

  std::vector<int> seg_len(static_cast<std::size_t>(N));
  if (cfg.bounds.empty()) {
    const int base = T / N;
    for (int i = 0; i < N - 1; ++i) seg_len[static_cast<std::size_t>(i)] = base;
    seg_len[static_cast<std::size_t>(N - 1)] = T - base * (N - 1);
  } else {
    std::vector<double> cum(static_cast<std::size_t>(N));
    double acc = 0.0;
    for (int i = 0; i < N; ++i) {
      acc += 0.5 * (cfg.bounds[static_cast<std::size_t>(i)].lo + cfg.bounds[static_cast<std::size_t>(i)].hi);
      cum[static_cast<std::size_t>(i)] = acc;
    }
    int prev = 0;
    for (int i = 0; i < N; ++i) {
      int b = i == N - 1 ? T
                         : static_cast<int>(std::lround(T * cum[static_cast<std::size_t>(i)] / acc));
      b = std::clamp(b, prev + 1, T - (N - 1 - i));
      seg_len[static_cast<std::size_t>(i)] = b - prev;
      prev = b;
    }
  }

  Model m;
  m.n_states = N;
  m.sampling_period = series.sampling_period;
  m.pi.assign(static_cast<std::size_t>(N), 0.0);
  m.pi[0] = 1.0;
  m.trans.assign(static_cast<std::size_t>(N), std::vector<double>(static_cast<std::size_t>(N), 0.0));
  m.topology_mask.assign(static_cast<std::size_t>(N),
                         std::vector<std::uint8_t>(static_cast<std::size_t>(N), 0));
  for (int i = 0; i + 1 < N; ++i) {
    m.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(i + 1)] = 1.0;
    m.topology_mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(i + 1)] = 1;
  }
  int max_order = 0;
  for (int o : cfg.orders) max_order = std::max(max_order, o);
  m.basis = {cfg.basis_family, max_order, cfg.basis_scale, cfg.time_convention};

  // Duration windows: user bounds as given; otherwise +-25% around the
  // initial segment length, clipped so some tiling of T stays feasible
  // (a single state must span the whole series).
  std::vector<DurationWindow> windows(static_cast<std::size_t>(N));
  if (cfg.bounds.empty()) {
    int lo_sum = 0;
    int hi_sum = 0;
    for (int i = 0; i < N; ++i) {
      const int len = seg_len[static_cast<std::size_t>(i)];
      auto& w = windows[static_cast<std::size_t>(i)];
      w.lo = std::max(1, static_cast<int>(std::lround(0.75 * len)));
      w.hi = std::min(T, std::max(w.lo, static_cast<int>(std::lround(1.25 * len))));
      lo_sum += w.lo;
      hi_sum += w.hi;
    }
    for (int i = 0; i < N; ++i) {
      auto& w = windows[static_cast<std::size_t>(i)];
      const int others_hi = hi_sum - w.hi;
      const int others_lo = lo_sum - w.lo;
      w.lo = std::max(w.lo, T - others_hi);
      w.hi = std::min(w.hi, T - others_lo);
      w.lo = std::min(w.lo, w.hi);
    }
  } else {
    windows = cfg.bounds;
  }

  int start = 0;
  for (int i = 0; i < N; ++i) {
    const int len = seg_len[static_cast<std::size_t>(i)];
    const int lo = windows[static_cast<std::size_t>(i)].lo;
    const int hi = windows[static_cast<std::size_t>(i)].hi;
    if (cfg.family == DurationFamily::kDiscrete) {
      DiscreteDuration dd;
      dd.d_min = lo;
      dd.d_max = hi;
      dd.pmf.assign(static_cast<std::size_t>(hi - lo) + 1, 1.0 / (hi - lo + 1));
      m.durations.emplace_back(std::move(dd));
    } else {
      const double mid = 0.5 * (lo + hi);
      const double sigma0 = std::max(1.0, (hi - lo) / 4.0);
      GammaDuration g;
      g.shape = (mid / sigma0) * (mid / sigma0);
      g.rate = g.shape / mid;
      g.horizon = T;
      m.durations.emplace_back(g);
    }
    const WlsSpan span{std::span<const double>(series.values).subspan(static_cast<std::size_t>(start),
                                                                      static_cast<std::size_t>(len)),
                       1.0};
    try {
      m.emissions.push_back(weighted_least_squares({&span, 1}, m.basis, cfg.orders[static_cast<std::size_t>(i)]));
    } catch (const EstimationError& e) {
      throw EstimationError("initialize: state " + std::to_string(i + 1) + ": " + e.what());
    }
    start += len;
  }
  return m;
}

namespace detail {

inline std::pair<Model, double> em_step_soft(const Model& model, const Series& series,
                                             const TrainConfig& cfg) {
  const int T = static_cast<int>(series.values.size());
  const int N = model.n_states;
  const Lattice lat = forward_backward(model, series, search_options(cfg));
  const PosteriorStats post = posteriors(model, series, lat);

  Model next = model;

  double init_sum = 0.0;
  for (double g : post.init) init_sum += g;
  for (int i = 0; i < N; ++i) next.pi[static_cast<std::size_t>(i)] = post.init[static_cast<std::size_t>(i)] / init_sum;

  for (int i = 0; i < N; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < N; ++j) row_sum += post.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    if (row_sum > 0.0) {
      for (int j = 0; j < N; ++j)
        next.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            model.topology_mask[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]
                ? post.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] / row_sum
                : 0.0;
    }
    // zero-mass rows keep their previous values
  }

  for (int j = 0; j < N; ++j) {
    if (!(post.dur[static_cast<std::size_t>(j)].total_mass > 0.0))
      throw EstimationError("em_step: state " + std::to_string(j + 1) + " received zero posterior mass");
    try {
      if (cfg.family == DurationFamily::kDiscrete) {
        const auto window = reestimation_window(cfg, j, T);
        next.durations[static_cast<std::size_t>(j)] =
            reestimate_discrete(post.dur[static_cast<std::size_t>(j)], window.lo, window.hi);
      } else {
        next.durations[static_cast<std::size_t>(j)] =
            reestimate_gamma(post.dur[static_cast<std::size_t>(j)],
                             std::get<GammaDuration>(model.durations[static_cast<std::size_t>(j)]),
                             cfg.coupled_gamma_update);
      }
    } catch (const EstimationError& e) {
      throw EstimationError("em_step: state " + std::to_string(j + 1) + ": " + e.what());
    }
  }

  std::vector<std::vector<WlsSpan>> state_spans(static_cast<std::size_t>(N));
  for (const auto& span : post.spans) {
    state_spans[static_cast<std::size_t>(span.state)].push_back(
        {std::span<const double>(series.values).subspan(static_cast<std::size_t>(span.end - span.duration),
                                                        static_cast<std::size_t>(span.duration)),
         span.weight});
  }
  for (int j = 0; j < N; ++j) {
    try {
      next.emissions[static_cast<std::size_t>(j)] = weighted_least_squares(
          state_spans[static_cast<std::size_t>(j)], model.basis, model.emissions[static_cast<std::size_t>(j)].order);
    } catch (const EstimationError& e) {
      throw EstimationError("em_step: state " + std::to_string(j + 1) + ": " + e.what());
    }
  }
  return {std::move(next), lat.log_likelihood};
}

inline std::pair<Model, double> em_step_viterbi(const Model& model, const Series& series,
                                                const TrainConfig& cfg) {
  const int T = static_cast<int>(series.values.size());
  const int N = model.n_states;
  const Segmentation seg = viterbi(model, series, search_options(cfg));

  std::vector<std::vector<WlsSpan>> state_spans(static_cast<std::size_t>(N));
  std::vector<DurationStats> stats(static_cast<std::size_t>(N));
  std::vector<std::vector<double>> trans_counts(static_cast<std::size_t>(N),
                                                std::vector<double>(static_cast<std::size_t>(N), 0.0));
  for (std::size_t s = 0; s < seg.segments.size(); ++s) {
    const auto& piece = seg.segments[s];
    stats[static_cast<std::size_t>(piece.state)].add(piece.duration, 1.0);
    state_spans[static_cast<std::size_t>(piece.state)].push_back(
        {std::span<const double>(series.values).subspan(static_cast<std::size_t>(piece.start - 1),
                                                        static_cast<std::size_t>(piece.duration)),
         1.0});
    if (s + 1 < seg.segments.size())
      trans_counts[static_cast<std::size_t>(piece.state)]
                  [static_cast<std::size_t>(seg.segments[s + 1].state)] += 1.0;
  }

  Model next = model;
  next.pi.assign(static_cast<std::size_t>(N), 0.0);
  next.pi[static_cast<std::size_t>(seg.segments.front().state)] = 1.0;

  for (int i = 0; i < N; ++i) {
    double row_sum = 0.0;
    for (int j = 0; j < N; ++j) row_sum += trans_counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    if (row_sum > 0.0)
      for (int j = 0; j < N; ++j)
        next.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
            trans_counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] / row_sum;
  }

  for (int j = 0; j < N; ++j) {
    if (!(stats[static_cast<std::size_t>(j)].total_mass > 0.0))
      throw EstimationError("em_step: state " + std::to_string(j + 1) +
                            " not visited by the best segmentation");
    if (cfg.family == DurationFamily::kDiscrete) {
      // Laplace-smooth the point-mass counts over the window so boundaries
      // can still move on later iterations.
      const auto window = reestimation_window(cfg, j, T);
      constexpr double kSmooth = 1e-3;
      DiscreteDuration dd;
      dd.d_min = window.lo;
      dd.d_max = window.hi;
      dd.pmf.assign(static_cast<std::size_t>(window.hi - window.lo) + 1, kSmooth);
      for (const auto& [d, c] : stats[static_cast<std::size_t>(j)].counts)
        if (d >= window.lo && d <= window.hi) dd.pmf[static_cast<std::size_t>(d - window.lo)] += c;
      double total = 0.0;
      for (double v : dd.pmf) total += v;
      for (double& v : dd.pmf) v /= total;
      next.durations[static_cast<std::size_t>(j)] = std::move(dd);
    } else {
      next.durations[static_cast<std::size_t>(j)] =
          reestimate_gamma(stats[static_cast<std::size_t>(j)],
                           std::get<GammaDuration>(model.durations[static_cast<std::size_t>(j)]),
                           cfg.coupled_gamma_update);
    }
    try {
      next.emissions[static_cast<std::size_t>(j)] = weighted_least_squares(
          state_spans[static_cast<std::size_t>(j)], model.basis, model.emissions[static_cast<std::size_t>(j)].order);
    } catch (const EstimationError& e) {
      throw EstimationError("em_step: state " + std::to_string(j + 1) + ": " + e.what());
    }
  }
  return {std::move(next), seg.log_joint};
}

}  // namespace detail

// One reestimation pass. Returns the updated model together with the
// pre-update score: the forward log-likelihood in soft mode, the best-path
// log joint in viterbi mode.
inline std::pair<Model, double> em_step(const Model& model, const Series& series,
                                        const TrainConfig& cfg) {
  detail::check_train_config(cfg, static_cast<int>(series.values.size()));
  return cfg.mode == AssignMode::kSoft ? detail::em_step_soft(model, series, cfg)
                                       : detail::em_step_viterbi(model, series, cfg);
}

// initialize + iterate em_step until |delta loglik| < loglik_tol or the
// iteration budget runs out.
inline std::pair<Model, FitTrace> fit(const Series& series, const TrainConfig& cfg) {
  detail::check_train_config(cfg, static_cast<int>(series.values.size()));
  const int iters =
      cfg.max_iters ? *cfg.max_iters : (cfg.family == DurationFamily::kDiscrete ? 4 : 10);
  Model model = initialize(series, cfg);
  FitTrace trace;
  double prev = 0.0;
  for (int k = 0; k < iters; ++k) {
    const auto start = std::chrono::steady_clock::now();
    auto [next, score] = em_step(model, series, cfg);
    const auto stop = std::chrono::steady_clock::now();
    trace.loglik.push_back(score);
    trace.iter_millis.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    model = std::move(next);
    if (k > 0 && std::fabs(score - prev) < cfg.loglik_tol) {
      trace.converged = true;
      break;
    }
    prev = score;
  }
  return {std::move(model), std::move(trace)};
}

}  // namespace plhmm
