#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "tsdr/models/detector.hpp"
#include "tsdr/types.hpp"

namespace tsdr {

/// Intersection-over-union of two axis-aligned boxes given as (x, y, w, h).
inline double box_iou(double ax, double ay, double aw, double ah, double bx, double by, double bw,
                      double bh) {
  const double ix = std::max(0.0, std::min(ax + aw, bx + bw) - std::max(ax, bx));
  const double iy = std::max(0.0, std::min(ay + ah, by + bh) - std::max(ay, by));
  const double inter = ix * iy;
  const double uni = aw * ah + bw * bh - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct MatchPair {
  std::int64_t detection_index = -1;
  std::int64_t ground_truth_index = -1;
  double iou = 0.0;
};

struct MatchResult {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::vector<MatchPair> pairs;
};

/// Greedy one-to-one matching of detections against ground-truth boxes.
/// A candidate pair must agree on class and reach the IoU threshold; pairs
/// are claimed in order of IoU (ties: higher detection score, then lower
/// detection index, then lower ground-truth index). Unmatched detections are
/// false positives, unmatched ground truths false negatives.
inline MatchResult match_detections(const std::vector<Detection>& detections,
                                    const std::vector<SignAnnotation>& ground_truth,
                                    double iou_threshold = 0.5) {
  struct Cand {
    std::int64_t d, g;
    double iou, score;
  };
  std::vector<Cand> cands;
  for (std::int64_t d = 0; d < static_cast<std::int64_t>(detections.size()); ++d)
    for (std::int64_t g = 0; g < static_cast<std::int64_t>(ground_truth.size()); ++g) {
      const auto& det = detections[static_cast<std::size_t>(d)];
      const auto& gt = ground_truth[static_cast<std::size_t>(g)];
      if (det.class_id != gt.class_id) continue;
      const double iou =
          box_iou(static_cast<double>(det.x), static_cast<double>(det.y),
                  static_cast<double>(det.w), static_cast<double>(det.h),
                  static_cast<double>(gt.x), static_cast<double>(gt.y), static_cast<double>(gt.w),
                  static_cast<double>(gt.h));
      if (iou >= iou_threshold) cands.push_back({d, g, iou, det.score});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.score != b.score) return a.score > b.score;
    if (a.d != b.d) return a.d < b.d;
    return a.g < b.g;
  });
  MatchResult res;
  std::vector<char> d_used(detections.size(), 0), g_used(ground_truth.size(), 0);
  for (const Cand& c : cands) {
    if (d_used[static_cast<std::size_t>(c.d)] || g_used[static_cast<std::size_t>(c.g)]) continue;
    d_used[static_cast<std::size_t>(c.d)] = 1;
    g_used[static_cast<std::size_t>(c.g)] = 1;
    res.pairs.push_back({c.d, c.g, c.iou});
  }
  res.tp = static_cast<std::int64_t>(res.pairs.size());
  res.fp = static_cast<std::int64_t>(detections.size()) - res.tp;
  res.fn = static_cast<std::int64_t>(ground_truth.size()) - res.tp;
  return res;
}

/// Precision and recall from match counts. Both default to 1.0 when their
/// denominator is zero (no detections, or no ground truth).
inline std::pair<double, double> precision_recall(const MatchResult& m) {
  const double precision =
      (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 1.0;
  const double recall =
      (m.tp + m.fn) > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 1.0;
  return {precision, recall};
}

}  // namespace tsdr
