// plhmm command-line tool: train / score / sample / segment / bench.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric or
// estimation error. PLHMM_LOG={error,warn,info,debug} controls diagnostics
// on standard error; data outputs go to files or standard out only.
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "plhmm/plhmm.hpp"

namespace {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level_from_env() {
  const char* env = std::getenv("PLHMM_LOG");
  if (!env) return LogLevel::kWarn;
  const std::string v(env);
  if (v == "error") return LogLevel::kError;
  if (v == "warn") return LogLevel::kWarn;
  if (v == "info") return LogLevel::kInfo;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

const LogLevel g_log_level = log_level_from_env();

void log_line(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= g_log_level)
    std::cerr << "plhmm [" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

std::vector<plhmm::DurationWindow> make_windows(const std::vector<int>& dmin,
                                                const std::vector<int>& dmax) {
  if (dmin.empty() && dmax.empty()) return {};
  if (dmin.size() != dmax.size())
    throw plhmm::DomainError("--dmin and --dmax must list the same number of states");
  std::vector<plhmm::DurationWindow> windows(dmin.size());
  for (std::size_t i = 0; i < dmin.size(); ++i) windows[i] = {dmin[i], dmax[i]};
  return windows;
}

plhmm::DurationFamily family_from(const std::string& s) {
  if (s == "discrete") return plhmm::DurationFamily::kDiscrete;
  if (s == "gamma") return plhmm::DurationFamily::kGamma;
  throw plhmm::DomainError("--duration must be 'discrete' or 'gamma'");
}

plhmm::AssignMode mode_from(const std::string& s) {
  if (s == "soft") return plhmm::AssignMode::kSoft;
  if (s == "viterbi") return plhmm::AssignMode::kViterbi;
  throw plhmm::DomainError("--mode must be 'soft' or 'viterbi'");
}

struct TrainArgs {
  std::string input, out, trace;
  int states = 7;
  std::vector<int> orders = {3, 5, 1, 6, 1, 5, 3};
  std::string duration = "discrete";
  std::vector<int> dmin, dmax;
  bool bounds_init_only = false;
  std::string mode = "soft";
  int iters = 0;  // 0: family default
  double tol = 1e-6;
  std::uint64_t seed = 0;
  std::string basis = "hermite-orthonormal";
  double scale = 3.0;
  std::string gamma_update = "coupled";
};

int run_train(const TrainArgs& a) {
  const plhmm::Series series = plhmm::load_series(a.input);
  plhmm::TrainConfig cfg;
  cfg.n_states = a.states;
  cfg.orders = a.orders;
  cfg.family = family_from(a.duration);
  cfg.bounds = make_windows(a.dmin, a.dmax);
  cfg.bounds_init_only = a.bounds_init_only;
  cfg.mode = mode_from(a.mode);
  if (a.iters > 0) cfg.max_iters = a.iters;
  cfg.loglik_tol = a.tol;
  cfg.seed = a.seed;
  cfg.basis_family = a.basis == "monomial" ? plhmm::BasisFamily::kMonomial
                                           : plhmm::BasisFamily::kHermiteOrthonormal;
  cfg.basis_scale = a.scale;
  if (a.gamma_update == "coupled")
    cfg.coupled_gamma_update = true;
  else if (a.gamma_update == "independent")
    cfg.coupled_gamma_update = false;
  else
    throw plhmm::DomainError("--gamma-update must be 'coupled' or 'independent'");
  log_line(LogLevel::kInfo, "training " + a.duration + " model with " +
                                std::to_string(a.states) + " states on " +
                                std::to_string(series.values.size()) + " samples");
  const auto [model, trace] = plhmm::fit(series, cfg);
  for (std::size_t k = 0; k < trace.loglik.size(); ++k)
    log_line(LogLevel::kDebug, "iteration " + std::to_string(k + 1) +
                                   " loglik=" + std::to_string(trace.loglik[k]));
  log_line(LogLevel::kInfo, "final pre-update score " +
                                (trace.loglik.empty() ? std::string("n/a")
                                                      : std::to_string(trace.loglik.back())) +
                                (trace.converged ? " (converged)" : ""));
  plhmm::save_model(model, a.out);
  if (!a.trace.empty()) plhmm::save_trace_csv(trace, a.trace);
  return 0;
}

struct ScoreArgs {
  std::string model, input, out, out_detections;
  int width = 260;
  int stride = 1;
  double detect = 0.0;
  bool detect_set = false;
  int min_sep = 1;
};

int run_score(const ScoreArgs& a) {
  const plhmm::Model model = plhmm::load_model(a.model);
  const plhmm::Series strip = plhmm::load_series(a.input);
  log_line(LogLevel::kInfo, "scoring " + std::to_string(strip.values.size()) +
                                " samples, width=" + std::to_string(a.width) +
                                " stride=" + std::to_string(a.stride));
  const plhmm::ScoreTrack track = plhmm::score_windows(model, strip, a.width, a.stride);
  log_line(LogLevel::kInfo, std::to_string(track.scores.size()) + " windows scored");
  plhmm::save_track_csv(track, a.out);
  if (a.detect_set) {
    const auto detections = plhmm::find_detections(track, a.detect, a.min_sep);
    log_line(LogLevel::kInfo, std::to_string(detections.size()) + " detections");
    if (a.out_detections.empty())
      std::cout << plhmm::detections_to_json(detections, track).dump(2) << "\n";
    else {
      std::ofstream out(a.out_detections);
      if (!out) throw plhmm::DataError("cannot write detections file: " + a.out_detections);
      out << plhmm::detections_to_json(detections, track).dump(2) << "\n";
    }
  }
  return 0;
}

struct SampleArgs {
  std::string model, out, path;
  std::uint64_t seed = 0;
  int max_length = 0;
};

int run_sample(const SampleArgs& a) {
  const plhmm::Model model = plhmm::load_model(a.model);
  const plhmm::SamplePath sampled = plhmm::sample(model, a.seed, a.max_length);
  log_line(LogLevel::kInfo, "sampled " + std::to_string(sampled.series.values.size()) +
                                " samples, " + std::to_string(sampled.segmentation.segments.size()) +
                                " segments");
  plhmm::save_series(sampled.series, a.out);
  if (!a.path.empty()) plhmm::save_segmentation(sampled.segmentation, a.path);
  return 0;
}

struct SegmentArgs {
  std::string model, input, out;
};

int run_segment(const SegmentArgs& a) {
  const plhmm::Model model = plhmm::load_model(a.model);
  const plhmm::Series series = plhmm::load_series(a.input);
  const plhmm::Segmentation seg = plhmm::viterbi(model, series);
  log_line(LogLevel::kInfo, "best segmentation: " + std::to_string(seg.segments.size()) +
                                " segments, log joint " + std::to_string(seg.log_joint));
  plhmm::save_segmentation(seg, a.out);
  return 0;
}

struct BenchArgs {
  std::vector<std::string> inputs;
  std::vector<int> dmin, dmax;
  int states = 7;
  std::vector<int> orders = {3, 5, 1, 6, 1, 5, 3};
  int discrete_iters = 4;
  int gamma_iters = 10;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  std::vector<std::pair<std::string, plhmm::Series>> inputs;
  for (const auto& path : a.inputs)
    inputs.emplace_back(std::filesystem::path(path).stem().string(), plhmm::load_series(path));
  plhmm::BenchOptions opt;
  opt.n_states = a.states;
  opt.orders = a.orders;
  opt.bounds = make_windows(a.dmin, a.dmax);
  opt.discrete_iters = a.discrete_iters;
  opt.gamma_iters = a.gamma_iters;
  const plhmm::BenchReport report = plhmm::bench(inputs, opt);
  if (!a.out.empty()) plhmm::write_bench_csv(report, a.out);
  std::cout << plhmm::format_bench_table(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Piecewise Linear Hidden Markov Model trainer and recognizer"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "learn a model from one exemplar series");
  train->add_option("--input", train_args.input, "exemplar series CSV")->required();
  train->add_option("--states", train_args.states, "number of states");
  train->add_option("--orders", train_args.orders, "per-state basis orders")->delimiter(',');
  train->add_option("--duration", train_args.duration, "duration family: discrete|gamma");
  train->add_option("--dmin", train_args.dmin, "per-state minimum durations")->delimiter(',');
  train->add_option("--dmax", train_args.dmax, "per-state maximum durations")->delimiter(',');
  train->add_flag("--bounds-init-only", train_args.bounds_init_only,
                  "use bounds for initialization only, search [1, T]");
  train->add_option("--mode", train_args.mode, "assignment mode: soft|viterbi");
  train->add_option("--iters", train_args.iters, "EM iterations (default 4 discrete, 10 gamma)");
  train->add_option("--tol", train_args.tol, "log-likelihood convergence tolerance");
  train->add_option("--seed", train_args.seed, "random seed recorded in the run");
  train->add_option("--basis", train_args.basis, "basis family: hermite-orthonormal|monomial");
  train->add_option("--scale", train_args.scale, "basis argument half-width c");
  train->add_option("--gamma-update", train_args.gamma_update,
                    "gamma reestimation coupling: coupled|independent");
  train->add_option("--out", train_args.out, "output model JSON")->required();
  train->add_option("--trace", train_args.trace, "optional fit trace CSV");

  ScoreArgs score_args;
  auto* score = app.add_subcommand("score", "sliding-window log-likelihood of a strip");
  score->add_option("--model", score_args.model, "model JSON")->required();
  score->add_option("--input", score_args.input, "strip series CSV")->required();
  score->add_option("--width", score_args.width, "window width in samples");
  score->add_option("--stride", score_args.stride, "window stride in samples");
  score->add_option("--out", score_args.out, "output track CSV")->required();
  auto* detect_opt =
      score->add_option("--detect", score_args.detect, "detection threshold (log-likelihood)");
  score->add_option("--min-sep", score_args.min_sep, "minimum separation between detections");
  score->add_option("--out-detections", score_args.out_detections, "detections JSON output");

  SampleArgs sample_args;
  auto* sample = app.add_subcommand("sample", "draw a series from a model");
  sample->add_option("--model", sample_args.model, "model JSON")->required();
  sample->add_option("--seed", sample_args.seed, "random seed");
  sample->add_option("--max-length", sample_args.max_length,
                     "length budget (default 10x summed mean durations)");
  sample->add_option("--out", sample_args.out, "output series CSV")->required();
  sample->add_option("--path", sample_args.path, "optional segmentation JSON sidecar");

  SegmentArgs segment_args;
  auto* segment = app.add_subcommand("segment", "best state/duration tiling of a series");
  segment->add_option("--model", segment_args.model, "model JSON")->required();
  segment->add_option("--input", segment_args.input, "series CSV")->required();
  segment->add_option("--out", segment_args.out, "output segmentation JSON")->required();

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "training-cost benchmark across duration modes");
  bench->add_option("--inputs", bench_args.inputs, "series CSV paths")->delimiter(',')->required();
  bench->add_option("--dmin", bench_args.dmin, "per-state minimum durations")->delimiter(',');
  bench->add_option("--dmax", bench_args.dmax, "per-state maximum durations")->delimiter(',');
  bench->add_option("--states", bench_args.states, "number of states");
  bench->add_option("--orders", bench_args.orders, "per-state basis orders")->delimiter(',');
  bench->add_option("--discrete-iters", bench_args.discrete_iters, "iterations for discrete cells");
  bench->add_option("--gamma-iters", bench_args.gamma_iters, "iterations for the gamma cell");
  bench->add_option("--out", bench_args.out, "report CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return run_train(train_args);
    if (*score) {
      score_args.detect_set = detect_opt->count() > 0;
      return run_score(score_args);
    }
    if (*sample) return run_sample(sample_args);
    if (*segment) return run_segment(segment_args);
    if (*bench) return run_bench(bench_args);
  } catch (const plhmm::DataError& e) {
    log_line(LogLevel::kError, e.what());
    return 3;
  } catch (const plhmm::DomainError& e) {
    log_line(LogLevel::kError, e.what());
    return 2;
  } catch (const plhmm::Error& e) {
    log_line(LogLevel::kError, e.what());
    return 4;
  } catch (const std::exception& e) {
    log_line(LogLevel::kError, e.what());
    return 4;
  }
  return 0;
}
