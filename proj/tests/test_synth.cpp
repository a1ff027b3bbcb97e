#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include <gtest/gtest.h>

#include "decade/matching.hpp"
#include "decade/synth.hpp"
#include "test_util.hpp"

using namespace decade;
using decade::testing::TempDir;

namespace {

std::size_t differing_pixels(const Tensor<float>& a, const Tensor<float>& b, float tol) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += std::abs(a[i] - b[i]) > tol;
  return n;
}

}  // namespace

TEST(Projection, PinholeProportionality) {
  const SynthConfig cfg;
  const Dimensions car{1.5, 1.8, 4.0};
  EXPECT_DOUBLE_EQ(projected_height(cfg, car, 20.0), 2.0 * projected_height(cfg, car, 40.0));
  EXPECT_DOUBLE_EQ(projected_width(cfg, car, 0.0, 10.0), cfg.focal_px * 1.8 / 10.0);
  EXPECT_NEAR(projected_width(cfg, car, std::numbers::pi / 2, 10.0), cfg.focal_px * 4.0 / 10.0, 1e-9);
}

TEST(Generate, DeterministicAndInRange) {
  SynthConfig cfg;
  const auto a = generate_samples(cfg, 7, 300);
  const auto b = generate_samples(cfg, 7, 300);
  ASSERT_EQ(a.size(), 300u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_TRUE(a[i].crop == b[i].crop);
    const auto& r = a[i].label;
    EXPECT_GE(r.distance, cfg.min_distance);
    EXPECT_LE(r.distance, cfg.max_distance);
    EXPECT_GE(r.box.left, 0.0);
    EXPECT_GE(r.box.top, 0.0);
    EXPECT_LE(r.box.right, cfg.width_px);
    EXPECT_LE(r.box.bottom, cfg.height_px);
    EXPECT_GE(r.alpha, -std::numbers::pi);
    EXPECT_LE(r.alpha, std::numbers::pi);
    EXPECT_DOUBLE_EQ(a[i].theta_eff, effective_orientation(r.alpha));
    EXPECT_EQ(a[i].crop.shape(), (Shape{3, 32, 32}));
  }
  const auto c = generate_samples(cfg, 8, 300);
  EXPECT_NE(a[0].label, c[0].label);
}

TEST(Generate, SelfInverting) {
  for (Placement placement : {Placement::ground, Placement::uniform}) {
    SynthConfig cfg;
    cfg.placement = placement;
    for (const auto& s : generate_samples(cfg, 3, 2000, false)) {
      const double z = cfg.focal_px * s.label.dims.height / s.label.box.height();
      EXPECT_NEAR(z, s.label.distance, 1e-6);
    }
  }
}

TEST(Generate, GroundPlacementPutsBottomOnRoad) {
  SynthConfig cfg;
  for (const auto& s : generate_samples(cfg, 4, 500, false)) {
    EXPECT_NEAR(s.label.location.y, cfg.cam_height, 1e-9);
    EXPECT_NEAR(s.label.box.bottom, cfg.principal_y() + cfg.focal_px * cfg.cam_height / s.label.distance, 1e-9);
  }
}

TEST(Generate, HeightSortsDistanceWithinClassWithoutSizeJitter) {
  SynthConfig cfg;
  cfg.size_jitter = 0.0;
  std::map<ObjectClass, std::vector<std::pair<double, double>>> by_class;
  for (const auto& s : generate_samples(cfg, 5, 3000, false)) {
    by_class[s.label.cls].emplace_back(s.label.box.height(), s.label.distance);
  }
  for (auto& [cls, v] : by_class) {
    std::sort(v.begin(), v.end(), [](auto a, auto b) { return a.first > b.first; });
    for (std::size_t i = 1; i < v.size(); ++i) EXPECT_LE(v[i - 1].second, v[i].second);
  }
}

TEST(Generate, ImpossibleConfigFailsAfterRetries) {
  SynthConfig cfg;
  cfg.width_px = 4;
  cfg.height_px = 4;
  cfg.max_retries = 50;
  EXPECT_THROW(generate_samples(cfg, 1, 1), ConfigError);
  cfg = SynthConfig{};
  cfg.focal_px = 0;
  EXPECT_THROW(generate_samples(cfg, 1, 1), ConfigError);
  EXPECT_THROW(generate_samples(SynthConfig{}, 1, 0), ConfigError);
}

TEST(RenderCrop, HorizontalBarIsRowSymmetric) {
  const auto c = render_crop(0.0, 1, 0.0);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 32; ++x)
        EXPECT_FLOAT_EQ(c[(ch * 32 + y) * 32 + x], c[(ch * 32 + 31 - y) * 32 + x]);
}

TEST(RenderCrop, VerticalIsTransposeOfHorizontal) {
  const auto h = render_crop(0.0, 1, 0.0), v = render_crop(90.0, 1, 0.0);
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) EXPECT_NEAR(v[(ch * 32 + y) * 32 + x], h[(ch * 32 + x) * 32 + y], 1e-6);
  // with noise the two agree up to noise
  const auto hn = render_crop(0.0, 2), vn = render_crop(90.0, 3);
  std::size_t off = 0;
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) off += std::abs(vn[(ch * 32 + y) * 32 + x] - hn[(ch * 32 + x) * 32 + y]) > 0.15f;
  EXPECT_EQ(off, 0u);
}

TEST(RenderCrop, DistinctAnglesDiffer) {
  const auto a = render_crop(30.0, 1), b = render_crop(60.0, 1);
  EXPECT_GT(differing_pixels(a, b, 0.1f), a.size() / 10);
  // injective on a fine grid (noise-free)
  for (double t = 0; t < 90; t += 0.5) EXPECT_GT(differing_pixels(render_crop(t, 1, 0), render_crop(t + 0.5, 1, 0), 0), 0u);
}

TEST(RenderCrop, DeterministicRangeAndDomain) {
  EXPECT_TRUE(render_crop(42.0, 9) == render_crop(42.0, 9));
  EXPECT_FALSE(render_crop(42.0, 9) == render_crop(42.0, 10));
  const auto crop = render_crop(17.0, 3);
  for (float v : crop.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_THROW(render_crop(-1.0, 1), DomainError);
  EXPECT_THROW(render_crop(90.5, 1), DomainError);
}

TEST(RenderScene, CropOfBoxResemblesRenderCrop) {
  SynthConfig cfg;
  const Box box{300, 100, 428, 164};  // 4x upscale of 32x32 horizontally, 2x vertically
  const auto scene = render_scene(cfg, box, 35.0, 1, 0.0);
  const auto crop = extract_crop(scene, box);
  const auto ref = render_crop(35.0, 1, 0.0);
  double err = 0;
  for (std::size_t i = 0; i < crop.size(); ++i) err += std::abs(crop[i] - ref[i]);
  EXPECT_LT(err / double(crop.size()), 0.02);
}

TEST(Perturb, ZeroJitterKeepsBoxes) {
  const auto samples = generate_samples(SynthConfig{}, 2, 200, false);
  const auto dets = perturb_detections(annotations_of(samples), 0.0, 5);
  ASSERT_EQ(dets.size(), samples.size());
  bool varied = false;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_EQ(dets[i].box, samples[i].label.box);
    EXPECT_GE(dets[i].confidence, 0.5);
    EXPECT_LE(dets[i].confidence, 1.0);
    varied = varied || dets[i].confidence != dets[0].confidence;
  }
  EXPECT_TRUE(varied);
}

TEST(Perturb, FivePercentKeepsMeanIouAboveThreshold) {
  SynthConfig cfg;
  const auto samples = generate_samples(cfg, 6, 1000, false);
  const auto dets = perturb_detections(annotations_of(samples), 0.05, 7, cfg.width_px, cfg.height_px);
  double sum = 0;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_TRUE(dets[i].box.valid());
    sum += iou(dets[i].box, samples[i].label.box);
  }
  EXPECT_GT(sum / 1000.0, 0.6);
}

TEST(Perturb, LargeJitterStillPositiveArea) {
  const auto samples = generate_samples(SynthConfig{}, 8, 300, false);
  for (const auto& d : perturb_detections(annotations_of(samples), 0.8, 9)) EXPECT_TRUE(d.box.valid());
}

TEST(Emit, KittiFilesRoundTrip) {
  TempDir dir("synth_emit");
  SynthConfig cfg;
  cfg.jitter_std = 0.05;
  const auto samples = generate_samples(cfg, 10, 20);
  write_synth_dataset(dir.path(), cfg, samples, 10, {true, true, 0.25});
  const auto train = load_split(dir / "train.txt"), test = load_split(dir / "test.txt");
  EXPECT_EQ(train.size(), 15u);
  EXPECT_EQ(test.size(), 5u);
  for (const auto& s : samples) {
    const auto labels = load_label_file(dir / "labels" / (s.image_id + ".txt"));
    ASSERT_EQ(labels.size(), 1u);
    EXPECT_EQ(labels[0], s.label);
    const auto img = read_image(dir / "images" / (s.image_id + ".png"));
    EXPECT_EQ(img.shape(), (Shape{3, 375, 1242}));
  }
  EXPECT_EQ(load_detections(dir / "detections.csv").size(), 20u);
}
