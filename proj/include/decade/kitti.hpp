#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "decade/errors.hpp"

// KITTI object-label parsing, detector-output CSV ingestion and the
// distance preprocessing applied before any training or evaluation.
namespace decade {

enum class ObjectClass : std::uint8_t {
  Car = 0,
  Van,
  Truck,
  Pedestrian,
  Person_sitting,
  Cyclist,
  Tram,
  Misc,
  DontCare,
};

// Classes that carry geometry, in one-hot order.
inline constexpr std::size_t kNumClasses = 8;
inline constexpr std::array<std::string_view, 9> kClassNames = {
    "Car", "Van", "Truck", "Pedestrian", "Person_sitting", "Cyclist", "Tram", "Misc", "DontCare"};

inline std::string_view class_name(ObjectClass c) { return kClassNames[static_cast<std::size_t>(c)]; }

inline std::optional<ObjectClass> class_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    if (kClassNames[i] == name) return static_cast<ObjectClass>(i);
  }
  return std::nullopt;
}

inline std::size_t class_index(ObjectClass c) { return static_cast<std::size_t>(c); }

// Axis-aligned pixel box; right/bottom are exclusive edges.
struct Box {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  double width() const { return right - left; }
  double height() const { return bottom - top; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  double center_x() const { return 0.5 * (left + right); }
  double center_y() const { return 0.5 * (top + bottom); }
  bool valid() const { return right > left && bottom > top; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct Dimensions {
  double height = 0.0;
  double width = 0.0;
  double length = 0.0;
  friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

struct Location {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Location&, const Location&) = default;
};

enum class DistanceMode { z_axis, euclidean };

inline double derive_distance(const Location& loc, DistanceMode mode = DistanceMode::z_axis) {
  if (mode == DistanceMode::euclidean) return std::sqrt(loc.x * loc.x + loc.y * loc.y + loc.z * loc.z);
  return loc.z;
}

inline DistanceMode distance_mode_from_name(std::string_view name) {
  if (name == "z_axis" || name == "z") return DistanceMode::z_axis;
  if (name == "euclidean") return DistanceMode::euclidean;
  throw ConfigError("unknown distance mode '" + std::string(name) + "' (expected z_axis or euclidean)");
}

struct LabelRecord {
  ObjectClass cls = ObjectClass::DontCare;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;  // allocentric orientation, radians
  Box box;
  Dimensions dims;
  Location location;
  double rotation_y = 0.0;
  double distance = 0.0;  // meters, derived from location

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

struct DetectionRecord {
  std::string image_id;
  ObjectClass cls = ObjectClass::Car;
  double confidence = 0.0;
  Box box;

  friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct ImageMeta {
  std::string image_id;
  int width_px = 0;
  int height_px = 0;
};

namespace detail {

inline std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<int> to_int(std::string_view s) {
  s = trim(s);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// Shortest representation that parses back to the same double.
inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline std::string where(std::string_view source, std::size_t line) {
  std::string s = source.empty() ? std::string("line ") : std::string(source) + ":";
  return s + std::to_string(line);
}

}  // namespace detail

// One KITTI label line: type, truncated, occluded, alpha, bbox(4),
// dimensions(3: h w l), location(3: x y z), rotation_y.
inline LabelRecord parse_label_line(std::string_view text, std::size_t line_number = 1,
                                    DistanceMode mode = DistanceMode::z_axis, std::string_view source = {}) {
  const auto fields = detail::split_whitespace(text);
  const std::string loc = detail::where(source, line_number);
  if (fields.size() != 15) {
    throw ParseError(loc + ": expected 15 fields, got " + std::to_string(fields.size()));
  }
  LabelRecord r;
  const auto cls = class_from_name(fields[0]);
  if (!cls) throw ParseError(loc + ": unknown class '" + std::string(fields[0]) + "'");
  r.cls = *cls;

  std::array<double, 14> v{};
  for (std::size_t i = 1; i < 15; ++i) {
    if (i == 2) {
      const auto occ = detail::to_int(fields[i]);
      if (!occ) throw ParseError(loc + ": field 3 (occluded) is not an integer: '" + std::string(fields[i]) + "'");
      v[i - 1] = *occ;
      continue;
    }
    const auto d = detail::to_double(fields[i]);
    if (!d) {
      throw ParseError(loc + ": field " + std::to_string(i + 1) + " is not a number: '" + std::string(fields[i]) +
                       "'");
    }
    v[i - 1] = *d;
  }
  r.truncated = v[0];
  r.occluded = static_cast<int>(v[1]);
  r.alpha = v[2];
  r.box = {v[3], v[4], v[5], v[6]};
  r.dims = {v[7], v[8], v[9]};
  r.location = {v[10], v[11], v[12]};
  r.rotation_y = v[13];
  r.distance = derive_distance(r.location, mode);
  if (r.cls != ObjectClass::DontCare && !r.box.valid()) {
    throw ParseError(loc + ": box must satisfy right > left and bottom > top");
  }
  return r;
}

inline std::string format_label_line(const LabelRecord& r) {
  using detail::format_number;
  std::string s(class_name(r.cls));
  for (double v : {r.truncated}) s += " " + format_number(v);
  s += " " + std::to_string(r.occluded);
  for (double v : {r.alpha, r.box.left, r.box.top, r.box.right, r.box.bottom, r.dims.height, r.dims.width,
                   r.dims.length, r.location.x, r.location.y, r.location.z, r.rotation_y}) {
    s += " " + format_number(v);
  }
  return s;
}

inline std::vector<LabelRecord> parse_label_text(std::string_view text, DistanceMode mode = DistanceMode::z_axis,
                                                 std::string_view source = {}) {
  std::vector<LabelRecord> out;
  std::size_t line_number = 0;
  for (std::string_view line : detail::split(text, '\n')) {
    ++line_number;
    if (detail::trim(line).empty()) continue;
    out.push_back(parse_label_line(line, line_number, mode, source));
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<LabelRecord> load_label_file(const std::filesystem::path& path,
                                                DistanceMode mode = DistanceMode::z_axis) {
  return parse_label_text(read_text_file(path), mode, path.string());
}

inline void write_label_file(const std::filesystem::path& path, const std::vector<LabelRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << format_label_line(r) << '\n';
}

inline constexpr double kMaxDistance = 150.0;

// Drops DontCare and negative distances, clips the rest at max_distance.
inline std::vector<LabelRecord> preprocess(std::vector<LabelRecord> records, double max_distance = kMaxDistance) {
  std::vector<LabelRecord> out;
  out.reserve(records.size());
  for (auto& r : records) {
    if (r.cls == ObjectClass::DontCare || r.distance < 0.0) continue;
    r.distance = std::min(r.distance, max_distance);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// detections CSV: image_id,class,confidence,left,top,right,bottom

inline constexpr std::string_view kDetectionsHeader = "image_id,class,confidence,left,top,right,bottom";

inline DetectionRecord parse_detection_row(std::string_view row, std::size_t row_number,
                                           std::string_view source = {}) {
  const std::string loc = detail::where(source, row_number);
  const auto cells = detail::split(row, ',');
  if (cells.size() != 7) throw ParseError(loc + ": expected 7 columns, got " + std::to_string(cells.size()));
  DetectionRecord d;
  d.image_id = std::string(detail::trim(cells[0]));
  if (d.image_id.empty()) throw ParseError(loc + ": empty image_id");
  const auto cls = class_from_name(detail::trim(cells[1]));
  if (!cls || *cls == ObjectClass::DontCare) {
    throw ParseError(loc + ": unknown detection class '" + std::string(cells[1]) + "'");
  }
  d.cls = *cls;
  std::array<double, 5> v{};
  static constexpr std::array<const char*, 5> names = {"confidence", "left", "top", "right", "bottom"};
  for (std::size_t i = 0; i < 5; ++i) {
    const auto x = detail::to_double(cells[i + 2]);
    if (!x) throw ParseError(loc + ": " + names[i] + " is not a number: '" + std::string(cells[i + 2]) + "'");
    v[i] = *x;
  }
  d.confidence = v[0];
  d.box = {v[1], v[2], v[3], v[4]};
  if (d.confidence < 0.0 || d.confidence > 1.0) {
    throw ParseError(loc + ": confidence " + detail::format_number(d.confidence) + " outside [0, 1]");
  }
  if (!d.box.valid()) throw ParseError(loc + ": box must satisfy right > left and bottom > top");
  return d;
}

// Rows come back grouped by image_id (groups in first-appearance order),
// file order preserved within each group.
inline std::vector<DetectionRecord> parse_detections(std::string_view text, std::string_view source = {}) {
  const auto lines = detail::split(text, '\n');
  if (lines.empty() || detail::trim(lines[0]) != kDetectionsHeader) {
    throw ParseError(detail::where(source, 1) + ": expected header '" + std::string(kDetectionsHeader) + "'");
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<DetectionRecord>> groups;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (detail::trim(lines[i]).empty()) continue;
    auto d = parse_detection_row(lines[i], i + 1, source);
    auto [it, inserted] = groups.try_emplace(d.image_id);
    if (inserted) order.push_back(d.image_id);
    it->second.push_back(std::move(d));
  }
  std::vector<DetectionRecord> out;
  for (const auto& id : order) {
    for (auto& d : groups[id]) out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<DetectionRecord> load_detections(const std::filesystem::path& path) {
  return parse_detections(read_text_file(path), path.string());
}

inline std::map<std::string, std::vector<DetectionRecord>> group_by_image(const std::vector<DetectionRecord>& dets) {
  std::map<std::string, std::vector<DetectionRecord>> out;
  for (const auto& d : dets) out[d.image_id].push_back(d);
  return out;
}

inline void write_detections(const std::filesystem::path& path, const std::vector<DetectionRecord>& dets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kDetectionsHeader << '\n';
  for (const auto& d : dets) {
    out << d.image_id << ',' << class_name(d.cls) << ',' << detail::format_number(d.confidence) << ','
        << detail::format_number(d.box.left) << ',' << detail::format_number(d.box.top) << ','
        << detail::format_number(d.box.right) << ',' << detail::format_number(d.box.bottom) << '\n';
  }
}

// Newline-separated image ids; blank lines ignored.
inline std::vector<std::string> load_split(const std::filesystem::path& path) {
  std::vector<std::string> ids;
  const std::string text = read_text_file(path);
  for (std::string_view line : detail::split(text, '\n')) {
    const auto id = detail::trim(line);
    if (!id.empty()) ids.emplace_back(id);
  }
  return ids;
}

inline void write_split(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& id : ids) out << id << '\n';
}

}  // namespace decade
