// File formats: series CSV, model JSON persistence, and the export encodings
// for segmentations, score tracks, detections, and fit traces.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "plhmm/errors.hpp"
#include "plhmm/lattice.hpp"
#include "plhmm/model.hpp"
#include "plhmm/recognize.hpp"
#include "plhmm/train.hpp"

namespace plhmm {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline double parse_double(const std::string& token, int line_no) {
  const std::string t = trim(token);
  if (t.empty()) throw DataError("line " + std::to_string(line_no) + ": empty field");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size())
    throw DataError("line " + std::to_string(line_no) + ": malformed number '" + t + "'");
  if (!std::isfinite(v))
    throw DataError("line " + std::to_string(line_no) + ": non-finite value '" + t + "'");
  return v;
}

inline long parse_long(const std::string& token, int line_no) {
  const std::string t = trim(token);
  char* end = nullptr;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (t.empty() || end != t.c_str() + t.size())
    throw DataError("line " + std::to_string(line_no) + ": malformed index '" + t + "'");
  return v;
}

// Shortest 17-significant-digit form; round-trips exactly through strtod.
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// CSV series: header `value` or `t,value`, optional `# fs=<Hz>` comment.
// Rejects NaN/inf values and non-increasing sample indices.
inline Series load_series(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open series file: " + path.string());
  Series series;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  bool has_index = false;
  long prev_index = -1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const std::string body = detail::trim(t.substr(1));
      if (body.rfind("fs=", 0) == 0) {
        const double fs = detail::parse_double(body.substr(3), line_no);
        if (!(fs > 0.0))
          throw DataError("line " + std::to_string(line_no) + ": fs must be positive");
        series.sampling_period = 1.0 / fs;
      }
      continue;
    }
    if (!header_seen) {
      if (t == "value") {
        has_index = false;
      } else if (t == "t,value") {
        has_index = true;
      } else {
        throw DataError("line " + std::to_string(line_no) +
                        ": expected header 'value' or 't,value', got '" + t + "'");
      }
      header_seen = true;
      continue;
    }
    const auto comma = t.find(',');
    if (has_index) {
      if (comma == std::string::npos)
        throw DataError("line " + std::to_string(line_no) + ": expected 't,value' row");
      const long idx = detail::parse_long(t.substr(0, comma), line_no);
      if (idx <= prev_index)
        throw DataError("line " + std::to_string(line_no) + ": sample index not increasing");
      prev_index = idx;
      series.values.push_back(detail::parse_double(t.substr(comma + 1), line_no));
    } else {
      if (comma != std::string::npos)
        throw DataError("line " + std::to_string(line_no) + ": unexpected extra column");
      series.values.push_back(detail::parse_double(t, line_no));
    }
  }
  if (!header_seen) throw DataError(path.string() + ": missing header line");
  if (series.values.empty()) throw DataError(path.string() + ": no samples");
  return series;
}

inline void save_series(const Series& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write series file: " + path.string());
  out << "# fs=" << detail::fmt17(1.0 / series.sampling_period) << "\n";
  out << "value\n";
  for (double v : series.values) out << detail::fmt17(v) << "\n";
}

namespace detail {

inline nlohmann::ordered_json duration_to_json(const DurationModel& dm) {
  nlohmann::ordered_json j;
  if (const auto* disc = std::get_if<DiscreteDuration>(&dm)) {
    j["type"] = "discrete";
    j["d_min"] = disc->d_min;
    j["d_max"] = disc->d_max;
    j["pmf"] = disc->pmf;
  } else {
    const auto& g = std::get<GammaDuration>(dm);
    j["type"] = "gamma";
    j["shape"] = g.shape;
    j["rate"] = g.rate;
    j["horizon"] = g.horizon;
  }
  return j;
}

inline DurationModel duration_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "discrete") {
    DiscreteDuration d;
    d.d_min = j.at("d_min").get<int>();
    d.d_max = j.at("d_max").get<int>();
    d.pmf = j.at("pmf").get<std::vector<double>>();
    return d;
  }
  if (type == "gamma") {
    GammaDuration g;
    g.shape = j.at("shape").get<double>();
    g.rate = j.at("rate").get<double>();
    g.horizon = j.at("horizon").get<int>();
    return g;
  }
  throw DataError("unknown duration type '" + type + "'");
}

inline std::string basis_family_name(BasisFamily f) {
  return f == BasisFamily::kHermiteOrthonormal ? "hermite-orthonormal" : "monomial";
}

inline BasisFamily basis_family_from(const std::string& s) {
  if (s == "hermite-orthonormal") return BasisFamily::kHermiteOrthonormal;
  if (s == "monomial") return BasisFamily::kMonomial;
  throw DataError("unknown basis family '" + s + "'");
}

inline std::string convention_name(TimeConvention c) {
  return c == TimeConvention::kSegmentNormalized ? "segment-normalized" : "segment-offset";
}

inline TimeConvention convention_from(const std::string& s) {
  if (s == "segment-normalized") return TimeConvention::kSegmentNormalized;
  if (s == "segment-offset") return TimeConvention::kSegmentOffset;
  throw DataError("unknown time convention '" + s + "'");
}

}  // namespace detail

inline nlohmann::ordered_json model_to_json(const Model& m) {
  nlohmann::ordered_json doc;
  doc["version"] = 1;
  doc["n_states"] = m.n_states;
  doc["pi"] = m.pi;
  doc["trans"] = m.trans;
  auto mask = nlohmann::ordered_json::array();
  for (const auto& row : m.topology_mask) {
    auto jrow = nlohmann::ordered_json::array();
    for (auto b : row) jrow.push_back(static_cast<bool>(b));
    mask.push_back(std::move(jrow));
  }
  doc["topology_mask"] = std::move(mask);
  auto durations = nlohmann::ordered_json::array();
  for (const auto& dm : m.durations) durations.push_back(detail::duration_to_json(dm));
  doc["durations"] = std::move(durations);
  auto emissions = nlohmann::ordered_json::array();
  for (const auto& em : m.emissions) {
    nlohmann::ordered_json j;
    j["weights"] = em.weights;
    j["precision"] = em.precision;
    emissions.push_back(std::move(j));
  }
  doc["emissions"] = std::move(emissions);
  nlohmann::ordered_json basis;
  basis["family"] = detail::basis_family_name(m.basis.family);
  auto orders = nlohmann::ordered_json::array();
  for (const auto& em : m.emissions) orders.push_back(em.order);
  basis["orders"] = std::move(orders);
  basis["scale"] = m.basis.scale;
  basis["time_convention"] = detail::convention_name(m.basis.time_convention);
  doc["basis"] = std::move(basis);
  doc["sampling_period"] = m.sampling_period;
  return doc;
}

inline Model model_from_json(const nlohmann::json& doc) {
  Model m;
  try {
    if (doc.at("version").get<int>() != 1)
      throw DataError("unsupported model schema version");
    m.n_states = doc.at("n_states").get<int>();
    m.pi = doc.at("pi").get<std::vector<double>>();
    m.trans = doc.at("trans").get<std::vector<std::vector<double>>>();
    for (const auto& row : doc.at("topology_mask")) {
      std::vector<std::uint8_t> r;
      for (const auto& b : row) r.push_back(b.get<bool>() ? 1 : 0);
      m.topology_mask.push_back(std::move(r));
    }
    for (const auto& j : doc.at("durations")) m.durations.push_back(detail::duration_from_json(j));
    const auto& basis = doc.at("basis");
    m.basis.family = detail::basis_family_from(basis.at("family").get<std::string>());
    m.basis.scale = basis.at("scale").get<double>();
    m.basis.time_convention = detail::convention_from(basis.at("time_convention").get<std::string>());
    const auto orders = basis.at("orders").get<std::vector<int>>();
    std::size_t i = 0;
    for (const auto& j : doc.at("emissions")) {
      EmissionParams em;
      em.weights = j.at("weights").get<std::vector<double>>();
      em.precision = j.at("precision").get<double>();
      if (i >= orders.size()) throw DataError("emissions/orders length mismatch");
      em.order = orders[i++];
      if (em.weights.size() != static_cast<std::size_t>(em.order) + 1)
        throw DataError("emission weight count does not match basis order at state " +
                        std::to_string(i));
      m.emissions.push_back(std::move(em));
    }
    if (i != orders.size()) throw DataError("emissions/orders length mismatch");
    m.basis.max_order = 0;
    for (int o : orders) m.basis.max_order = std::max(m.basis.max_order, o);
    m.sampling_period = doc.at("sampling_period").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model schema violation: ") + e.what());
  }
  const auto report = validate(m);
  if (!report.ok()) {
    std::string msg = "model fails validation on load:";
    for (const auto& v : report.violations) msg += " [" + v + "]";
    throw DataError(msg);
  }
  return m;
}

inline void save_model(const Model& m, const std::filesystem::path& path) {
  require_valid(m);
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file: " + path.string());
  out << model_to_json(m).dump(2) << "\n";
}

inline Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": JSON parse error: " + e.what());
  }
  return model_from_json(doc);
}

// Segmentation export: 1-based states and start times.
inline nlohmann::ordered_json segmentation_to_json(const Segmentation& seg) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& s : seg.segments) {
    nlohmann::ordered_json j;
    j["state"] = s.state + 1;
    j["start"] = s.start;
    j["duration"] = s.duration;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline void save_segmentation(const Segmentation& seg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write segmentation file: " + path.string());
  out << segmentation_to_json(seg).dump(2) << "\n";
}

inline void save_track_csv(const ScoreTrack& track, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write track file: " + path.string());
  out << "window_start,loglik\n";
  for (std::size_t k = 0; k < track.scores.size(); ++k)
    out << (1 + static_cast<long>(k) * track.stride) << "," << detail::fmt17(track.scores[k])
        << "\n";
}

inline nlohmann::ordered_json detections_to_json(const std::vector<Detection>& detections,
                                                 const ScoreTrack& track) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : detections) {
    nlohmann::ordered_json j;
    j["window"] = d.window;
    j["window_start"] = 1 + d.window * track.stride;
    j["score"] = d.score;
    j["peak"] = d.peak;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline void save_trace_csv(const FitTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trace file: " + path.string());
  out << "iteration,loglik,millis\n";
  for (std::size_t k = 0; k < trace.loglik.size(); ++k)
    out << (k + 1) << "," << detail::fmt17(trace.loglik[k]) << ","
        << detail::fmt17(trace.iter_millis[k]) << "\n";
}

}  // namespace plhmm
