#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "decade/evaluation.hpp"
#include "test_util.hpp"

using namespace decade;

namespace {

std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

std::vector<DistancePair> random_pairs(Rng& rng, std::size_t n) {
  std::vector<DistancePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform(0.5, 150);
    out.push_back({t + rng.uniform(-5, 5), t, static_cast<ObjectClass>(rng.below(kNumClasses))});
  }
  return out;
}

}  // namespace

TEST(Metrics, MaeExamples) {
  EXPECT_EQ(mae({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_EQ(mae({10, 20}, {11, 22}), 1.5);
  EXPECT_THROW(mae({}, {}), EmptySetError);
  EXPECT_THROW(mae({1}, {1, 2}), DimensionError);
}

TEST(Metrics, MreExamples) {
  EXPECT_NEAR(mre({1.1}, {1.0}), 0.10, 1e-12);
  EXPECT_NEAR(mae({1.1}, {1.0}), 0.1, 1e-12);
  EXPECT_EQ(mre({4, 5}, {4, 5}), 0.0);
  EXPECT_DOUBLE_EQ(mre({12}, {10}), 0.2);
  EXPECT_THROW(mre({1}, {0}), DomainError);
  EXPECT_THROW(mre({1}, {-2}), DomainError);
  EXPECT_THROW(mre({}, {}), EmptySetError);
}

TEST(Metrics, PoseMaeExamples) {
  EXPECT_EQ(pose_mae({10, 20}, {10, 20}), 0.0);
  EXPECT_EQ(pose_mae({45}, {40}), 5.0);
  EXPECT_THROW(pose_mae({91}, {40}), DomainError);
  EXPECT_THROW(pose_mae({5}, {-1}), DomainError);
}

TEST(Metrics, MatchBruteForce) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto p = uniform_vec(rng, 100, 0, 150), t = uniform_vec(rng, 100, 0.1, 150);
    double a = 0, r = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      a += std::abs(t[i] - p[i]);
      r += std::abs(t[i] - p[i]) / t[i];
    }
    EXPECT_EQ(mae(p, t), a / 100);
    EXPECT_EQ(mre(p, t), r / 100);
  }
}

TEST(Metrics, PermutationAndTranslation) {
  Rng rng(2);
  auto p = uniform_vec(rng, 64, 1, 100), t = uniform_vec(rng, 64, 1, 100);
  std::vector<std::size_t> idx(64);
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  std::vector<double> ps, ts;
  for (auto i : idx) {
    ps.push_back(p[i]);
    ts.push_back(t[i]);
  }
  EXPECT_NEAR(mae(ps, ts), mae(p, t), 1e-12);
  EXPECT_NEAR(mre(ps, ts), mre(p, t), 1e-12);
  std::vector<double> pc = p, tc = t;
  for (auto& v : pc) v += 7.0;
  for (auto& v : tc) v += 7.0;
  EXPECT_NEAR(mae(pc, tc), mae(p, t), 1e-9);
  EXPECT_NE(mre(pc, tc), mre(p, t));
}

TEST(Report, BinAssignment) {
  const auto r = build_report({{9.0, 9.5, ObjectClass::Car}});
  ASSERT_EQ(r.per_range.size(), 10u);
  EXPECT_EQ(r.per_range[0].stats.count, 1u);
  for (std::size_t b = 1; b < 10; ++b) {
    EXPECT_EQ(r.per_range[b].stats.count, 0u);
    EXPECT_FALSE(r.per_range[b].stats.mae_m.has_value());
  }
  const auto ten = build_report({{10.0, 10.0, ObjectClass::Car}});
  EXPECT_EQ(ten.per_range[1].stats.count, 1u);
  const auto top = build_report({{150, 150, ObjectClass::Car}, {90, 90, ObjectClass::Van}});
  EXPECT_EQ(top.per_range[9].stats.count, 2u);
  EXPECT_EQ(top.per_range[9].label(), "[90,150]");
  EXPECT_EQ(top.per_range[0].label(), "[0,10)");
  EXPECT_THROW(build_report({{1, 151, ObjectClass::Car}}), DomainError);
}

TEST(Report, ZeroTruthExcludedFromMreOnly) {
  const auto r = build_report({{1.0, 0.0, ObjectClass::Car}, {12, 10, ObjectClass::Car}});
  EXPECT_EQ(r.overall.count, 2u);
  EXPECT_DOUBLE_EQ(*r.overall.mae_m, 1.5);
  EXPECT_DOUBLE_EQ(*r.overall.mre, 0.2);
  EXPECT_EQ(r.overall.mre_excluded, 1u);
}

TEST(Report, CountWeightedIdentities) {
  Rng rng(3);
  const auto pairs = random_pairs(rng, 2000);
  const auto r = build_report(pairs);
  std::size_t n_class = 0, n_range = 0;
  double s_class = 0, s_range = 0;
  for (const auto& [name, a] : r.per_class) {
    n_class += a.count;
    if (a.count) s_class += *a.mae_m * double(a.count);
  }
  for (const auto& b : r.per_range) {
    n_range += b.stats.count;
    if (b.stats.count) s_range += *b.stats.mae_m * double(b.stats.count);
  }
  EXPECT_EQ(n_class, r.overall.count);
  EXPECT_EQ(n_range, r.overall.count);
  EXPECT_NEAR(s_class / double(n_class), *r.overall.mae_m, 1e-9);
  EXPECT_NEAR(s_range / double(n_range), *r.overall.mae_m, 1e-9);
}

TEST(Report, PoseMaeIncluded) {
  const auto r = build_report({{5, 5, ObjectClass::Car}}, {{30, 40}, {10, 10}});
  ASSERT_TRUE(r.pose_mae_deg.has_value());
  EXPECT_EQ(*r.pose_mae_deg, 5.0);
  EXPECT_EQ(r.pose_count, 2u);
}

TEST(Report, JsonRoundTripIsLossless) {
  Rng rng(4);
  const auto r = build_report(random_pairs(rng, 300), {{1.0 / 3.0, 89.9}});
  EXPECT_EQ(report_from_json(report_to_json(r)), r);
  EXPECT_EQ(report_from_json(nlohmann::json::parse(report_to_json(r).dump())), r);
  EXPECT_THROW(report_from_json(nlohmann::json::parse("{\"overall\": 3}")), ParseError);
}

TEST(Report, CsvLayout) {
  const auto r = build_report({{11, 10, ObjectClass::Car}});
  const auto csv = report_to_csv(r);
  EXPECT_EQ(csv.rfind("scope,key,count,mae_m,mre_pct\noverall,all,1,1,10\nclass,Car,1,1,10\n", 0), 0u) << csv;
  EXPECT_NE(csv.find("range,[0,10),0,,\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("range,[10,20),1,1,10\n"), std::string::npos) << csv;
}
