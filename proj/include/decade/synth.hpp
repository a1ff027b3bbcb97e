#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "decade/errors.hpp"
#include "decade/features.hpp"
#include "decade/image.hpp"
#include "decade/kitti.hpp"
#include "decade/random.hpp"
#include "decade/tensor.hpp"

// Pinhole-camera scene generator with known ground truth.
namespace decade {

enum class Placement {
  ground,   // box bottom on a flat road seen from cam_height
  uniform,  // box centre uniform over the image
};

inline Placement placement_from_name(std::string_view name) {
  if (name == "ground") return Placement::ground;
  if (name == "uniform") return Placement::uniform;
  throw ConfigError("unknown placement '" + std::string(name) + "' (expected ground or uniform)");
}

struct SynthConfig {
  double focal_px = 700.0;
  int width_px = 1242;
  int height_px = 375;
  double min_distance = 4.0;
  double max_distance = 150.0;
  ClassPriors priors;
  std::array<double, kNumClasses> class_weights = {1, 1, 1, 1, 1, 1, 1, 1};
  Placement placement = Placement::ground;
  double cam_height = 1.65;       // meters above the road
  double horizon_fraction = 0.47;  // principal point row / image height
  double size_jitter = 0.03;      // per-object relative std on each real dimension
  double jitter_std = 0.0;        // detector box noise, fraction of box size
  int max_retries = 10000;

  double principal_x() const { return 0.5 * width_px; }
  double principal_y() const { return horizon_fraction * height_px; }

  void validate() const {
    if (!(focal_px > 0.0)) throw ConfigError("synth: focal_px must be positive");
    if (width_px <= 0 || height_px <= 0) throw ConfigError("synth: image size must be positive");
    if (!(min_distance > 0.0) || !(max_distance > min_distance)) {
      throw ConfigError("synth: require 0 < min_distance < max_distance");
    }
    if (!(jitter_std >= 0.0) || !(size_jitter >= 0.0)) throw ConfigError("synth: jitter std must be >= 0");
    if (!(cam_height > 0.0) || !(horizon_fraction > 0.0 && horizon_fraction < 1.0)) {
      throw ConfigError("synth: require cam_height > 0 and horizon_fraction in (0, 1)");
    }
    double total = 0.0;
    for (double w : class_weights) {
      if (!(w >= 0.0)) throw ConfigError("synth: class weights must be >= 0");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("synth: at least one class weight must be positive");
    if (max_retries < 1) throw ConfigError("synth: max_retries must be >= 1");
  }
};

struct SynthSample {
  std::string image_id;
  LabelRecord label;
  double theta = 0.0;      // radians, the drawn orientation
  double theta_eff = 0.0;  // degrees
  Tensor<float> crop;
};

inline std::string synth_image_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return buf;
}

inline double wrap_angle(double a) {
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0.0) a += two_pi;
  return a - std::numbers::pi;
}

// Projected box extents of an object of real size `dims` at depth z seen at
// orientation theta.
inline double projected_height(const SynthConfig& cfg, const Dimensions& dims, double z) {
  return cfg.focal_px * dims.height / z;
}

inline double projected_width(const SynthConfig& cfg, const Dimensions& dims, double theta, double z) {
  return cfg.focal_px * (dims.width * std::abs(std::cos(theta)) + dims.length * std::abs(std::sin(theta))) / z;
}

namespace detail {

inline constexpr float kBarBackground = 0.1f;
inline constexpr std::array<float, 3> kBarColor = {0.95f, 0.85f, 0.75f};
inline constexpr double kBarHalfLength = 12.0;
inline constexpr double kBarHalfThickness = 3.0;

// Bar coverage at crop coordinates (u, v), both in [0, 32); antialiased
// over one pixel so the image varies continuously with the angle.
inline double bar_coverage(double u, double v, double theta_eff_deg) {
  const double t = theta_eff_deg * std::numbers::pi / 180.0;
  const double px = u - 16.0, py = v - 16.0;
  // Counter-clockwise on screen; image rows grow downward.
  const double along = px * std::cos(t) - py * std::sin(t);
  const double across = px * std::sin(t) + py * std::cos(t);
  const double a = std::clamp(kBarHalfLength - std::abs(along) + 0.5, 0.0, 1.0);
  const double b = std::clamp(kBarHalfThickness - std::abs(across) + 0.5, 0.0, 1.0);
  return a * b;
}

inline float bar_pixel(double coverage, std::size_t channel, double noise) {
  const double v = kBarBackground + (kBarColor[channel] - kBarBackground) * coverage + noise;
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

inline void check_theta_eff(double theta_eff) {
  if (!(theta_eff >= 0.0 && theta_eff <= 90.0)) {
    throw DomainError("effective orientation " + format_number(theta_eff) + " outside [0, 90]");
  }
}

}  // namespace detail

inline constexpr double kCropNoiseStd = 0.02;

// 3x32x32 bright bar on a dark background, rotated by theta_eff degrees.
inline Tensor<float> render_crop(double theta_eff, std::uint64_t seed, double noise_std = kCropNoiseStd) {
  detail::check_theta_eff(theta_eff);
  Rng rng(seed);
  Tensor<float> crop({3, kCropExtent, kCropExtent});
  float* out = crop.data();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < kCropExtent; ++y) {
      for (std::size_t x = 0; x < kCropExtent; ++x) {
        const double cov = detail::bar_coverage(x + 0.5, y + 0.5, theta_eff);
        out[(c * kCropExtent + y) * kCropExtent + x] = detail::bar_pixel(cov, c, noise_std * rng.normal());
      }
    }
  }
  return crop;
}

// Full camera image: constant background, with the object drawn as the bar
// in box-normalized coordinates so a crop of the box recovers it.
inline Tensor<float> render_scene(const SynthConfig& cfg, const Box& box, double theta_eff, std::uint64_t seed,
                                  double noise_std = kCropNoiseStd) {
  detail::check_theta_eff(theta_eff);
  const std::size_t H = cfg.height_px, W = cfg.width_px;
  Tensor<float> img({3, H, W}, detail::kBarBackground);
  const Box b = clamp_box(box, double(W), double(H));
  const auto x0 = static_cast<std::size_t>(std::floor(b.left));
  const auto x1 = std::min(W, static_cast<std::size_t>(std::ceil(b.right)));
  const auto y0 = static_cast<std::size_t>(std::floor(b.top));
  const auto y1 = std::min(H, static_cast<std::size_t>(std::ceil(b.bottom)));
  Rng rng(seed);
  float* out = img.data();
  for (std::size_t y = y0; y < y1; ++y) {
    const double v = (y + 0.5 - box.top) / box.height() * double(kCropExtent);
    for (std::size_t x = x0; x < x1; ++x) {
      const double u = (x + 0.5 - box.left) / box.width() * double(kCropExtent);
      const double cov = detail::bar_coverage(u, v, theta_eff);
      for (std::size_t c = 0; c < 3; ++c) out[(c * H + y) * W + x] = detail::bar_pixel(cov, c, noise_std * rng.normal());
    }
  }
  return img;
}

namespace detail {

inline ObjectClass draw_class(const SynthConfig& cfg, Rng& rng) {
  double total = 0.0;
  for (double w : cfg.class_weights) total += w;
  double r = rng.uniform() * total;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (cfg.class_weights[i] <= 0.0) continue;
    if (r < cfg.class_weights[i]) return static_cast<ObjectClass>(i);
    r -= cfg.class_weights[i];
  }
  for (std::size_t i = kNumClasses; i-- > 0;) {
    if (cfg.class_weights[i] > 0.0) return static_cast<ObjectClass>(i);
  }
  return ObjectClass::Car;
}

inline double jittered(double v, double rel_std, Rng& rng) {
  if (rel_std <= 0.0) return v;
  return v * std::clamp(1.0 + rel_std * rng.normal(), 0.5, 1.5);
}

}  // namespace detail

// One object per image. Draws class, depth and orientation, projects the
// box, and redraws whenever the box does not fit inside the image.
inline std::vector<SynthSample> generate_samples(const SynthConfig& cfg, std::uint64_t seed, std::size_t n,
                                                 bool with_crops = true) {
  cfg.validate();
  if (n == 0) throw ConfigError("synth: sample count must be >= 1");
  const double W = cfg.width_px, H = cfg.height_px;
  std::vector<SynthSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(derive_seed(seed, "synth-sample"), i));
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const ObjectClass cls = detail::draw_class(cfg, rng);
      const double z = rng.uniform(cfg.min_distance, cfg.max_distance);
      const double theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
      const Dimensions prior = cfg.priors.at(cls);
      const Dimensions dims{detail::jittered(prior.height, cfg.size_jitter, rng),
                            detail::jittered(prior.width, cfg.size_jitter, rng),
                            detail::jittered(prior.length, cfg.size_jitter, rng)};
      const double h = projected_height(cfg, dims, z);
      const double w = projected_width(cfg, dims, theta, z);
      if (!(h < H) || !(w < W)) continue;
      const double cx = rng.uniform(w / 2.0, W - w / 2.0);
      double bottom = 0.0;
      if (cfg.placement == Placement::ground) {
        bottom = cfg.principal_y() + cfg.focal_px * cfg.cam_height / z;
      } else {
        bottom = rng.uniform(h / 2.0, H - h / 2.0) + h / 2.0;
      }
      if (bottom > H || bottom - h < 0.0) continue;

      SynthSample s;
      s.image_id = synth_image_id(i);
      s.theta = theta;
      LabelRecord& r = s.label;
      r.cls = cls;
      r.alpha = wrap_angle(theta);
      s.theta_eff = effective_orientation(r.alpha);
      r.box = {cx - w / 2.0, bottom - h, cx + w / 2.0, bottom};
      r.dims = dims;
      r.location = {(cx - cfg.principal_x()) * z / cfg.focal_px, (bottom - cfg.principal_y()) * z / cfg.focal_px, z};
      r.rotation_y = wrap_angle(r.alpha + std::atan2(r.location.x, z));
      r.distance = z;
      if (with_crops) s.crop = render_crop(s.theta_eff, derive_seed(seed, "crop-" + s.image_id));
      out.push_back(std::move(s));
      placed = true;
    }
    if (!placed) {
      throw ConfigError("synth: no object fits the image after " + std::to_string(cfg.max_retries) +
                        " draws; check image size, focal length and distance range");
    }
  }
  return out;
}

struct Annotation {
  std::string image_id;
  LabelRecord label;
};

inline std::vector<Annotation> annotations_of(const std::vector<SynthSample>& samples) {
  std::vector<Annotation> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.image_id, s.label});
  return out;
}

// Detector stand-in: every edge moves by N(0, jitter_std) times the box
// extent along its axis; the result is clipped to the image when bounds are
// given and redrawn until it has positive area.
inline std::vector<DetectionRecord> perturb_detections(const std::vector<Annotation>& annotations, double jitter_std,
                                                       std::uint64_t seed, double image_width = 0.0,
                                                       double image_height = 0.0) {
  if (!(jitter_std >= 0.0)) throw ConfigError("perturb: jitter std must be >= 0");
  std::vector<DetectionRecord> out;
  out.reserve(annotations.size());
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const Annotation& a = annotations[i];
    if (a.label.cls == ObjectClass::DontCare) continue;
    Rng rng(derive_seed(derive_seed(seed, "perturb"), i));
    const Box& b = a.label.box;
    DetectionRecord d;
    d.image_id = a.image_id;
    d.cls = a.label.cls;
    d.confidence = rng.uniform(0.5, 1.0);
    for (int attempt = 0;; ++attempt) {
      const double sw = jitter_std * b.width(), sh = jitter_std * b.height();
      Box p{b.left + sw * rng.normal(), b.top + sh * rng.normal(), b.right + sw * rng.normal(),
            b.bottom + sh * rng.normal()};
      if (image_width > 0.0 && image_height > 0.0) p = clamp_box(p, image_width, image_height);
      if (p.valid() && p.width() >= 1e-3 && p.height() >= 1e-3) {
        d.box = p;
        break;
      }
      if (attempt > 1000) {
        d.box = b;
        break;
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

struct SynthDumpOptions {
  bool images = true;
  bool write_detections = false;
  double test_fraction = 0.2;
};

// Writes labels/<id>.txt, images/<id>.png, train.txt, test.txt and, when
// asked, detections.csv with jittered boxes.
inline void write_synth_dataset(const std::filesystem::path& dir, const SynthConfig& cfg,
                                const std::vector<SynthSample>& samples, std::uint64_t seed,
                                const SynthDumpOptions& options = {}) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "labels");
  if (options.images) fs::create_directories(dir / "images");
  for (const auto& s : samples) {
    write_label_file(dir / "labels" / (s.image_id + ".txt"), {s.label});
    if (options.images) {
      write_png(dir / "images" / (s.image_id + ".png"),
                render_scene(cfg, s.label.box, s.theta_eff, derive_seed(seed, "scene-" + s.image_id)));
    }
  }
  const auto n_test = static_cast<std::size_t>(std::llround(options.test_fraction * double(samples.size())));
  std::vector<std::string> train, test;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (i < samples.size() - n_test ? train : test).push_back(samples[i].image_id);
  }
  write_split(dir / "train.txt", train);
  write_split(dir / "test.txt", test);
  if (options.write_detections) {
    write_detections(dir / "detections.csv", perturb_detections(annotations_of(samples), cfg.jitter_std,
                                                                derive_seed(seed, "detections"), cfg.width_px,
                                                                cfg.height_px));
  }
}

}  // namespace decade
