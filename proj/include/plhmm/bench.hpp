// Training-cost benchmark: unbounded discrete, bounded discrete, and gamma
// (bound-midpoint init) cells per series, timed around fit() only.
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "plhmm/io.hpp"
#include "plhmm/train.hpp"

namespace plhmm {

struct BenchOptions {
  int n_states = 7;
  std::vector<int> orders = {3, 5, 1, 6, 1, 5, 3};
  std::vector<DurationWindow> bounds;  // empty: +-25% windows around the equal split
  int discrete_iters = 4;
  int gamma_iters = 10;
  BasisFamily basis_family = BasisFamily::kHermiteOrthonormal;
  double basis_scale = 3.0;
  TimeConvention time_convention = TimeConvention::kSegmentNormalized;
};

struct BenchCell {
  std::string series;
  std::string mode;  // "discrete", "discrete-bounded", "gamma"
  int iterations = 0;
  double wall_ms = 0.0;
  double final_loglik = 0.0;
  std::string error;  // nonempty when the fit failed
};

struct BenchReport {
  std::vector<BenchCell> rows;
};

// H:MM:SS.mmm
inline std::string format_hms(double ms) {
  long total_ms = static_cast<long>(ms + 0.5);
  const long h = total_ms / 3600000;
  total_ms %= 3600000;
  const long m = total_ms / 60000;
  total_ms %= 60000;
  const long s = total_ms / 1000;
  const long rem = total_ms % 1000;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%ld:%02ld:%02ld.%03ld", h, m, s, rem);
  return buf;
}

namespace detail {

inline std::vector<DurationWindow> default_bench_windows(int n_states, int series_length) {
  std::vector<DurationWindow> windows(static_cast<std::size_t>(n_states));
  const int len = std::max(1, series_length / n_states);
  for (auto& w : windows) {
    w.lo = std::max(1, static_cast<int>(std::lround(0.75 * len)));
    w.hi = std::min(series_length, std::max(w.lo, static_cast<int>(std::lround(1.25 * len))));
  }
  return windows;
}

inline BenchCell run_bench_cell(const std::string& name, const Series& series,
                                const TrainConfig& cfg, const std::string& mode) {
  BenchCell cell;
  cell.series = name;
  cell.mode = mode;
  cell.iterations = cfg.max_iters.value_or(0);
  try {
    const auto start = std::chrono::steady_clock::now();
    const auto [model, trace] = fit(series, cfg);
    const auto stop = std::chrono::steady_clock::now();
    (void)model;
    cell.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    cell.iterations = static_cast<int>(trace.loglik.size());
    cell.final_loglik = trace.loglik.empty() ? 0.0 : trace.loglik.back();
  } catch (const Error& e) {
    cell.error = e.what();
  }
  return cell;
}

}  // namespace detail

// One row per (series, mode) cell; failed cells carry the error and the run
// continues.
inline BenchReport bench(const std::vector<std::pair<std::string, Series>>& inputs,
                         const BenchOptions& opt = {}) {
  BenchReport report;
  for (const auto& [name, series] : inputs) {
    const int T = static_cast<int>(series.values.size());
    const auto windows =
        opt.bounds.empty() ? detail::default_bench_windows(opt.n_states, T) : opt.bounds;

    TrainConfig base;
    base.n_states = opt.n_states;
    base.orders = opt.orders;
    base.basis_family = opt.basis_family;
    base.basis_scale = opt.basis_scale;
    base.time_convention = opt.time_convention;

    TrainConfig unbounded = base;
    unbounded.family = DurationFamily::kDiscrete;
    unbounded.max_iters = opt.discrete_iters;
    report.rows.push_back(detail::run_bench_cell(name, series, unbounded, "discrete"));

    TrainConfig bounded = base;
    bounded.family = DurationFamily::kDiscrete;
    bounded.max_iters = opt.discrete_iters;
    bounded.bounds = windows;
    report.rows.push_back(detail::run_bench_cell(name, series, bounded, "discrete-bounded"));

    TrainConfig gamma = base;
    gamma.family = DurationFamily::kGamma;
    gamma.max_iters = opt.gamma_iters;
    gamma.bounds = windows;
    gamma.bounds_init_only = true;  // midpoint init, unsupervised search
    report.rows.push_back(detail::run_bench_cell(name, series, gamma, "gamma"));
  }
  return report;
}

inline void write_bench_csv(const BenchReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write bench report: " + path.string());
  out << "series,mode,iterations,wall_ms,wall_hms,final_loglik,error\n";
  for (const auto& row : report.rows) {
    out << row.series << "," << row.mode << "," << row.iterations << ","
        << detail::fmt17(row.wall_ms) << "," << format_hms(row.wall_ms) << ","
        << detail::fmt17(row.final_loglik) << "," << row.error << "\n";
  }
}

// Wall-clock table, one series per row and one duration mode per column.
inline std::string format_bench_table(const BenchReport& report) {
  std::ostringstream out;
  out << "Recording | Discrete | Discrete [dmin,dmax] | Gamma\n";
  std::vector<std::string> order;
  for (const auto& row : report.rows) {
    bool seen = false;
    for (const auto& name : order) seen = seen || name == row.series;
    if (!seen) order.push_back(row.series);
  }
  auto cell_for = [&report](const std::string& series, const std::string& mode) -> std::string {
    for (const auto& row : report.rows)
      if (row.series == series && row.mode == mode)
        return row.error.empty() ? format_hms(row.wall_ms) : "error";
    return "-";
  };
  for (const auto& name : order) {
    out << name << " | " << cell_for(name, "discrete") << " | "
        << cell_for(name, "discrete-bounded") << " | " << cell_for(name, "gamma") << "\n";
  }
  return out.str();
}

}  // namespace plhmm
