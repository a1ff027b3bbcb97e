#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "decade/errors.hpp"
#include "decade/kitti.hpp"

namespace decade {

inline constexpr double kMatchIou = 0.6;

inline double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw DegenerateBoxError("iou needs positive-area boxes");
  const double iw = std::min(a.right, b.right) - std::max(a.left, b.left);
  const double ih = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

struct MatchedPair {
  std::size_t detection_index = 0;  // position in the detections given to match_detections
  std::size_t truth_index = 0;
  DetectionRecord detection;
  LabelRecord truth;
  double iou = 0.0;
  bool class_agrees = false;
};

struct MatchOptions {
  double threshold = kMatchIou;
  bool class_strict = false;
};

// Greedy one-to-one matching over a single image. Detections are visited in
// descending confidence (stable, so earlier rows win ties); each takes the
// unmatched truth of highest IoU, earliest truth on equal IoU.
inline std::vector<MatchedPair> match_detections(const std::vector<DetectionRecord>& dets,
                                                 const std::vector<LabelRecord>& truths,
                                                 const MatchOptions& options = {}) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  std::vector<bool> taken(truths.size(), false);
  std::vector<MatchedPair> pairs;
  for (std::size_t di : order) {
    const DetectionRecord& d = dets[di];
    double best = -1.0;
    std::size_t best_t = truths.size();
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (taken[t] || truths[t].cls == ObjectClass::DontCare) continue;
      if (options.class_strict && truths[t].cls != d.cls) continue;
      const double v = iou(d.box, truths[t].box);
      if (v >= options.threshold && v > best) {
        best = v;
        best_t = t;
      }
    }
    if (best_t == truths.size()) continue;
    taken[best_t] = true;
    pairs.push_back({di, best_t, d, truths[best_t], best, d.cls == truths[best_t].cls});
  }
  return pairs;
}

}  // namespace decade
