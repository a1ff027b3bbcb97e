#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "decade/errors.hpp"
#include "decade/kitti.hpp"

namespace decade {

enum class FeatureLayout { decade_v1, disnet_v1 };

struct FeatureVector {
  std::vector<double> values;
  FeatureLayout layout = FeatureLayout::decade_v1;
};

inline constexpr std::size_t kDecadeWidth = 14;
inline constexpr std::size_t kDisnetWidth = 6;

// Folds an allocentric angle (radians) onto [0, 90] degrees.
inline double effective_orientation(double alpha) {
  if (!std::isfinite(alpha)) throw DomainError("orientation must be finite");
  const double a = std::abs(alpha * 180.0 / std::numbers::pi);
  const double r = std::fmod(a, 180.0);
  return std::min(r, 180.0 - r);
}

struct ClassPriors {
  std::array<Dimensions, kNumClasses> dims = {{
      {1.5, 1.8, 4.0},    // Car
      {2.0, 1.9, 5.0},    // Van
      {3.0, 2.6, 10.0},   // Truck
      {1.75, 0.6, 0.6},   // Pedestrian
      {1.2, 0.6, 0.6},    // Person_sitting
      {1.75, 0.6, 1.8},   // Cyclist
      {3.5, 2.5, 15.0},   // Tram
      {1.5, 1.5, 3.0},    // Misc
  }};

  const Dimensions& at(ObjectClass c) const {
    if (c == ObjectClass::DontCare) throw DomainError("DontCare has no size prior");
    return dims[class_index(c)];
  }
};

// CSV `class,height_m,width_m,length_m`; listed classes replace defaults.
inline ClassPriors parse_class_priors(std::string_view text, std::string_view source = {}) {
  ClassPriors priors;
  const auto lines = detail::split(text, '\n');
  if (lines.empty() || detail::trim(lines[0]) != "class,height_m,width_m,length_m") {
    throw ParseError(detail::where(source, 1) + ": expected header 'class,height_m,width_m,length_m'");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    const std::string loc = detail::where(source, i + 1);
    const auto cells = detail::split(lines[i], ',');
    if (cells.size() != 4) throw ParseError(loc + ": expected 4 columns");
    const auto cls = class_from_name(detail::trim(cells[0]));
    if (!cls || *cls == ObjectClass::DontCare) throw ParseError(loc + ": unknown class '" + std::string(cells[0]) + "'");
    std::array<double, 3> v{};
    for (std::size_t k = 0; k < 3; ++k) {
      const auto x = detail::to_double(cells[k + 1]);
      if (!x || *x <= 0.0) throw ParseError(loc + ": prior sizes must be positive numbers");
      v[k] = *x;
    }
    priors.dims[class_index(*cls)] = {v[0], v[1], v[2]};
  }
  return priors;
}

inline ClassPriors load_class_priors(const std::filesystem::path& path) {
  return parse_class_priors(read_text_file(path), path.string());
}

namespace detail {

inline void check_meta(const ImageMeta& meta) {
  if (meta.width_px <= 0 || meta.height_px <= 0) {
    throw DomainError("image '" + meta.image_id + "' has non-positive size");
  }
}

inline void check_class(ObjectClass cls) {
  if (cls == ObjectClass::DontCare || class_index(cls) >= kNumClasses) {
    throw DomainError("class '" + std::string(class_name(cls)) + "' cannot be encoded");
  }
}

}  // namespace detail

// [one-hot(8), w/W, h/H, diag/DIAG, cx/W, cy/H, theta_eff/90]
inline FeatureVector build_decade_features(const Box& box, ObjectClass cls, double theta_eff, const ImageMeta& meta) {
  detail::check_class(cls);
  detail::check_meta(meta);
  if (!box.valid()) throw DegenerateBoxError("box has non-positive width or height");
  if (!(theta_eff >= 0.0 && theta_eff <= 90.0)) {
    throw DomainError("effective orientation " + detail::format_number(theta_eff) + " outside [0, 90]");
  }
  const double W = meta.width_px, H = meta.height_px;
  const double w = box.width(), h = box.height();
  FeatureVector f;
  f.layout = FeatureLayout::decade_v1;
  f.values.assign(kDecadeWidth, 0.0);
  f.values[class_index(cls)] = 1.0;
  f.values[8] = w / W;
  f.values[9] = h / H;
  f.values[10] = std::hypot(w, h) / std::hypot(W, H);
  f.values[11] = box.center_x() / W;
  f.values[12] = box.center_y() / H;
  f.values[13] = theta_eff / 90.0;
  return f;
}

// [H/h, W/w, DIAG/diag, prior height, prior width, prior length]
inline FeatureVector build_disnet_features(const Box& box, ObjectClass cls, const ImageMeta& meta,
                                           const ClassPriors& priors = {}) {
  detail::check_class(cls);
  detail::check_meta(meta);
  if (!box.valid()) throw DegenerateBoxError("box has non-positive width or height");
  const double W = meta.width_px, H = meta.height_px;
  const double w = box.width(), h = box.height();
  const Dimensions& p = priors.at(cls);
  FeatureVector f;
  f.layout = FeatureLayout::disnet_v1;
  f.values = {H / h, W / w, std::hypot(W, H) / std::hypot(w, h), p.height, p.width, p.length};
  return f;
}

}  // namespace decade
