#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <gtest/gtest.h>

#include "decade/matching.hpp"
#include "test_util.hpp"

using namespace decade;

namespace {

LabelRecord truth(Box b) {
  LabelRecord r;
  r.cls = ObjectClass::Car;
  r.box = b;
  r.distance = 10;
  return r;
}

DetectionRecord det(Box b, double conf, ObjectClass cls = ObjectClass::Car) { return {"img", cls, conf, b}; }

Box random_box(Rng& rng, double extent) {
  const double l = rng.uniform(0, extent), t = rng.uniform(0, extent);
  return {l, t, l + rng.uniform(1, extent / 2), t + rng.uniform(1, extent / 2)};
}

}  // namespace

TEST(Iou, Examples) {
  EXPECT_EQ(iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
  EXPECT_EQ(iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
  EXPECT_EQ(iou({0, 0, 1, 1}, {1, 0, 2, 1}), 0.0);  // touching edges
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {1, 0, 3, 2}), 1.0 / 3.0);
  EXPECT_THROW(iou({0, 0, 0, 2}, {0, 0, 1, 1}), DegenerateBoxError);
}

TEST(Iou, SymmetricBoundedIdentity) {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const Box a = random_box(rng, 100), b = random_box(rng, 100);
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_EQ(iou(a, a), 1.0);
  }
}

TEST(Matching, Examples) {
  const auto one = match_detections({det({0, 0, 10, 10}, 0.9)}, {truth({0, 0, 10, 10})});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].iou, 1.0);

  const auto none = match_detections({det({0, 0, 10, 5}, 0.9)}, {truth({0, 0, 10, 10})});
  EXPECT_EQ(iou({0, 0, 10, 5}, {0, 0, 10, 10}), 0.5);
  EXPECT_TRUE(none.empty());

  const auto two = match_detections({det({0, 0, 10, 9.5}, 0.8), det({0, 0, 10, 9}, 0.9)}, {truth({0, 0, 10, 10})});
  ASSERT_EQ(two.size(), 1u);
  EXPECT_EQ(two[0].detection.confidence, 0.9);
  EXPECT_EQ(two[0].detection_index, 1u);
}

TEST(Matching, TiesGoToEarlierRow) {
  const auto m = match_detections({det({0, 0, 10, 9}, 0.7), det({0, 0, 10, 9}, 0.7)}, {truth({0, 0, 10, 10})});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].detection_index, 0u);
}

TEST(Matching, ClassStrictToggle) {
  const std::vector<DetectionRecord> d = {det({0, 0, 10, 10}, 0.9, ObjectClass::Van)};
  const auto loose = match_detections(d, {truth({0, 0, 10, 10})});
  ASSERT_EQ(loose.size(), 1u);
  EXPECT_FALSE(loose[0].class_agrees);
  EXPECT_TRUE(match_detections(d, {truth({0, 0, 10, 10})}, {kMatchIou, true}).empty());
}

TEST(Matching, OneToOneAndAboveThreshold) {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<LabelRecord> truths;
    std::vector<DetectionRecord> dets;
    for (int i = 0; i < 6; ++i) truths.push_back(truth(random_box(rng, 60)));
    for (int i = 0; i < 8; ++i) {
      Box b = truths[rng.below(truths.size())].box;
      const double s = rng.uniform(-2, 2);
      b = {b.left + s, b.top + rng.uniform(-2, 2), b.right + s, b.bottom};
      if (!b.valid()) continue;
      dets.push_back(det(b, std::round(rng.uniform(0, 1) * 10) / 10));
    }
    const auto pairs = match_detections(dets, truths);
    std::set<std::size_t> seen_d, seen_t;
    for (const auto& p : pairs) {
      EXPECT_GE(p.iou, kMatchIou);
      EXPECT_TRUE(seen_d.insert(p.detection_index).second);
      EXPECT_TRUE(seen_t.insert(p.truth_index).second);
    }
    EXPECT_EQ(match_detections(dets, truths).size(), pairs.size());
  }
}

// Exhaustive check of the greedy rule on small instances: replay the rule
// independently (for each detection in confidence order, the best remaining
// truth) by brute force over every truth each time.
TEST(Matching, GreedyAgreesWithBruteForceReplay) {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<LabelRecord> truths;
    std::vector<DetectionRecord> dets;
    for (int i = 0; i < 3; ++i) truths.push_back(truth(random_box(rng, 20)));
    for (int i = 0; i < 3; ++i) {
      const Box b = truths[rng.below(3)].box;
      dets.push_back(det({b.left + rng.uniform(-1, 1), b.top, b.right, b.bottom + rng.uniform(-1, 1)}, rng.uniform()));
    }
    std::vector<std::size_t> order(3);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return dets[a].confidence > dets[b].confidence; });
    std::vector<std::pair<std::size_t, std::size_t>> expect;
    std::vector<bool> used(3, false);
    for (auto d : order) {
      double best = kMatchIou;
      int pick = -1;
      for (std::size_t t = 0; t < 3; ++t) {
        const double v = iou(dets[d].box, truths[t].box);
        if (!used[t] && v >= best && (pick < 0 || v > best)) {
          best = v;
          pick = int(t);
        }
      }
      if (pick >= 0) {
        used[pick] = true;
        expect.emplace_back(d, pick);
      }
    }
    const auto got = match_detections(dets, truths);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].detection_index, expect[i].first);
      EXPECT_EQ(got[i].truth_index, expect[i].second);
    }
  }
}
