// Sliding-window recognition: per-window forward log-likelihood against a
// trained model, and peak picking over the resulting track.
#pragma once

#include <algorithm>
#include <vector>

#include "plhmm/lattice.hpp"
#include "plhmm/model.hpp"

namespace plhmm {

struct ScoreTrack {
  std::vector<double> scores;  // scores[k] for the window starting at 1 + k*stride
  int width = 260;
  int stride = 1;
};

struct Detection {
  int window = 0;
  double score = kLogZero;
  bool peak = true;
};

// scores[k] = forward log-likelihood of strip[offset_k, offset_k + width - 1];
// windows with no feasible tiling score -inf so indices stay aligned. A strip
// shorter than the window yields an empty track.
inline ScoreTrack score_windows(const Model& model, const Series& strip, int width = 260,
                                int stride = 1, const LatticeOptions& opt = {}) {
  if (width < 1 || stride < 1) throw DomainError("score_windows: width and stride must be >= 1");
  require_valid(model);
  ScoreTrack track;
  track.width = width;
  track.stride = stride;
  const int T = static_cast<int>(strip.values.size());
  if (T < width) return track;
  const int count = (T - width) / stride + 1;
  track.scores.reserve(static_cast<std::size_t>(count));
  Series window;
  window.sampling_period = strip.sampling_period;
  for (int k = 0; k < count; ++k) {
    const int offset = k * stride;
    window.values.assign(strip.values.begin() + offset, strip.values.begin() + offset + width);
    double score;
    try {
      score = forward(model, window, opt).log_likelihood;
    } catch (const InfeasibleSeriesError&) {
      score = kLogZero;
    }
    track.scores.push_back(score);
  }
  return track;
}

// Local maxima at or above the threshold, greedily suppressing neighbors
// closer than min_separation. The higher score wins; equal scores keep the
// earlier index. Returned detections are ordered by window index.
inline std::vector<Detection> find_detections(const ScoreTrack& track, double threshold,
                                               int min_separation) {
  if (min_separation < 1) throw DomainError("find_detections: min_separation must be >= 1");
  const auto& s = track.scores;
  const int n = static_cast<int>(s.size());
  std::vector<int> candidates;
  for (int k = 0; k < n; ++k) {
    if (!(s[static_cast<std::size_t>(k)] >= threshold)) continue;
    const bool left_ok = k == 0 || s[static_cast<std::size_t>(k)] >= s[static_cast<std::size_t>(k - 1)];
    const bool right_ok = k == n - 1 || s[static_cast<std::size_t>(k)] >= s[static_cast<std::size_t>(k + 1)];
    if (left_ok && right_ok) candidates.push_back(k);
  }
  std::sort(candidates.begin(), candidates.end(), [&s](int a, int b) {
    if (s[static_cast<std::size_t>(a)] != s[static_cast<std::size_t>(b)])
      return s[static_cast<std::size_t>(a)] > s[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<int> kept;
  for (int k : candidates) {
    bool suppressed = false;
    for (int other : kept) {
      if (std::abs(k - other) < min_separation) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(k);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<Detection> out;
  out.reserve(kept.size());
  for (int k : kept) out.push_back({k, s[static_cast<std::size_t>(k)], true});
  return out;
}

}  // namespace plhmm
