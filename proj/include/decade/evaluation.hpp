#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "decade/errors.hpp"
#include "decade/kitti.hpp"

namespace decade {

namespace detail {

inline void check_pairing(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": " + std::to_string(a) + " predictions vs " + std::to_string(b) +
                         " truths");
  }
  if (a == 0) throw EmptySetError(std::string(what) + " of an empty set is undefined");
}

}  // namespace detail

inline double mae(const std::vector<double>& preds, const std::vector<double>& truths) {
  detail::check_pairing(preds.size(), truths.size(), "mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += std::abs(truths[i] - preds[i]);
  return sum / static_cast<double>(preds.size());
}

// Fraction, not percent.
inline double mre(const std::vector<double>& preds, const std::vector<double>& truths) {
  detail::check_pairing(preds.size(), truths.size(), "mre");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!(truths[i] > 0.0)) {
      throw DomainError("mre: truth " + detail::format_number(truths[i]) + " at index " + std::to_string(i) +
                        " is not positive");
    }
    sum += std::abs(truths[i] - preds[i]) / truths[i];
  }
  return sum / static_cast<double>(preds.size());
}

inline double pose_mae(const std::vector<double>& pred_deg, const std::vector<double>& truth_deg) {
  detail::check_pairing(pred_deg.size(), truth_deg.size(), "pose_mae");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_deg.size(); ++i) {
    for (double v : {pred_deg[i], truth_deg[i]}) {
      if (!(v >= 0.0 && v <= 90.0)) {
        throw DomainError("pose_mae: angle " + detail::format_number(v) + " at index " + std::to_string(i) +
                          " outside [0, 90]");
      }
    }
    sum += std::abs(truth_deg[i] - pred_deg[i]);
  }
  return sum / static_cast<double>(pred_deg.size());
}

struct DistancePair {
  double pred = 0.0;
  double truth = 0.0;
  ObjectClass cls = ObjectClass::Car;
};

struct PosePair {
  double pred_deg = 0.0;
  double truth_deg = 0.0;
};

struct Aggregate {
  std::size_t count = 0;
  std::optional<double> mae_m;
  std::optional<double> mre;  // fraction
  std::size_t mre_excluded = 0;  // zero-distance truths left out of mre

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct RangeBin {
  double lo = 0.0;
  double hi = 0.0;
  bool closed = false;  // upper edge included
  Aggregate stats;

  std::string label() const {
    return "[" + detail::format_number(lo) + "," + detail::format_number(hi) + (closed ? "]" : ")");
  }
  bool contains(double d) const { return d >= lo && (closed ? d <= hi : d < hi); }

  friend bool operator==(const RangeBin&, const RangeBin&) = default;
};

struct EvalReport {
  Aggregate overall;
  std::map<std::string, Aggregate> per_class;  // keyed by class name
  std::vector<RangeBin> per_range;
  std::optional<double> pose_mae_deg;
  std::size_t pose_count = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline std::vector<RangeBin> default_range_bins() {
  std::vector<RangeBin> bins;
  for (int lo = 0; lo < 90; lo += 10) bins.push_back({double(lo), double(lo + 10), false, {}});
  bins.push_back({90.0, kMaxDistance, true, {}});
  return bins;
}

inline Aggregate aggregate(const std::vector<double>& preds, const std::vector<double>& truths) {
  Aggregate a;
  a.count = preds.size();
  if (preds.empty()) return a;
  a.mae_m = mae(preds, truths);
  std::vector<double> p, t;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (truths[i] == 0.0) {
      ++a.mre_excluded;
      continue;
    }
    p.push_back(preds[i]);
    t.push_back(truths[i]);
  }
  if (!p.empty()) a.mre = mre(p, t);
  return a;
}

inline EvalReport build_report(const std::vector<DistancePair>& pairs, const std::vector<PosePair>& pose_pairs = {}) {
  EvalReport r;
  r.per_range = default_range_bins();
  std::vector<double> all_p, all_t;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_class;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> by_bin(r.per_range.size());
  for (const auto& pr : pairs) {
    if (!(pr.truth >= 0.0 && pr.truth <= kMaxDistance)) {
      throw DomainError("truth distance " + detail::format_number(pr.truth) + " outside [0, 150]");
    }
    all_p.push_back(pr.pred);
    all_t.push_back(pr.truth);
    auto& c = by_class[std::string(class_name(pr.cls))];
    c.first.push_back(pr.pred);
    c.second.push_back(pr.truth);
    for (std::size_t b = 0; b < r.per_range.size(); ++b) {
      if (r.per_range[b].contains(pr.truth)) {
        by_bin[b].first.push_back(pr.pred);
        by_bin[b].second.push_back(pr.truth);
        break;
      }
    }
  }
  r.overall = aggregate(all_p, all_t);
  for (const auto& [name, v] : by_class) r.per_class[name] = aggregate(v.first, v.second);
  for (std::size_t b = 0; b < r.per_range.size(); ++b) r.per_range[b].stats = aggregate(by_bin[b].first, by_bin[b].second);
  if (!pose_pairs.empty()) {
    std::vector<double> p, t;
    for (const auto& pp : pose_pairs) {
      p.push_back(pp.pred_deg);
      t.push_back(pp.truth_deg);
    }
    r.pose_mae_deg = pose_mae(p, t);
    r.pose_count = pose_pairs.size();
  }
  return r;
}

// ---------------------------------------------------------------------------
// serialization

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::json aggregate_json(const Aggregate& a) {
  return {{"count", a.count}, {"mae_m", optional_json(a.mae_m)}, {"mre", optional_json(a.mre)},
          {"mre_excluded", a.mre_excluded}};
}

inline Aggregate aggregate_from(const nlohmann::json& j) {
  Aggregate a;
  a.count = j.at("count").get<std::size_t>();
  a.mae_m = optional_from(j.at("mae_m"));
  a.mre = optional_from(j.at("mre"));
  a.mre_excluded = j.at("mre_excluded").get<std::size_t>();
  return a;
}

}  // namespace detail

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["overall"] = detail::aggregate_json(r.overall);
  j["per_class"] = nlohmann::json::object();
  for (const auto& [name, a] : r.per_class) j["per_class"][name] = detail::aggregate_json(a);
  j["per_range"] = nlohmann::json::array();
  for (const auto& b : r.per_range) {
    auto e = detail::aggregate_json(b.stats);
    e["lo"] = b.lo;
    e["hi"] = b.hi;
    e["closed"] = b.closed;
    j["per_range"].push_back(e);
  }
  j["pose_mae_deg"] = detail::optional_json(r.pose_mae_deg);
  j["pose_count"] = r.pose_count;
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.overall = detail::aggregate_from(j.at("overall"));
    for (const auto& [name, a] : j.at("per_class").items()) r.per_class[name] = detail::aggregate_from(a);
    for (const auto& e : j.at("per_range")) {
      r.per_range.push_back({e.at("lo").get<double>(), e.at("hi").get<double>(), e.at("closed").get<bool>(),
                             detail::aggregate_from(e)});
    }
    r.pose_mae_deg = detail::optional_from(j.at("pose_mae_deg"));
    r.pose_count = j.at("pose_count").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed report: ") + e.what());
  }
}

// Rows: scope,key,count,mae_m,mre_pct. Empty metrics are blank cells.
inline std::string report_to_csv(const EvalReport& r) {
  auto cell = [](const std::optional<double>& v, double scale) {
    return v ? detail::format_number(*v * scale) : std::string();
  };
  std::string out = "scope,key,count,mae_m,mre_pct\n";
  auto row = [&](const std::string& scope, const std::string& key, const Aggregate& a) {
    out += scope + "," + key + "," + std::to_string(a.count) + "," + cell(a.mae_m, 1.0) + "," + cell(a.mre, 100.0) +
           "\n";
  };
  row("overall", "all", r.overall);
  for (const auto& [name, a] : r.per_class) row("class", name, a);
  for (const auto& b : r.per_range) row("range", b.label(), b.stats);
  if (r.pose_mae_deg) {
    out += "pose,mae_deg," + std::to_string(r.pose_count) + "," + detail::format_number(*r.pose_mae_deg) + ",\n";
  }
  return out;
}

inline void write_report(const std::filesystem::path& json_path, const std::filesystem::path& csv_path,
                         const EvalReport& r) {
  {
    std::ofstream out(json_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + json_path.string());
    out << report_to_json(r).dump(2) << '\n';
  }
  std::ofstream out(csv_path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out << report_to_csv(r);
}

inline EvalReport load_report(const std::filesystem::path& json_path) {
  try {
    return report_from_json(nlohmann::json::parse(read_text_file(json_path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(json_path.string() + ": " + e.what());
  }
}

}  // namespace decade
