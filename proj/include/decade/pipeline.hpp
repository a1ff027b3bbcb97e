#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "decade/checkpoint.hpp"
#include "decade/errors.hpp"
#include "decade/evaluation.hpp"
#include "decade/features.hpp"
#include "decade/image.hpp"
#include "decade/kitti.hpp"
#include "decade/matching.hpp"
#include "decade/models.hpp"
#include "decade/training.hpp"

// Glue between file formats, feature construction, networks and reports:
// ground-truth evaluation, end-to-end evaluation over matched detections,
// and the adaptation datasets.
namespace decade {

// One object as seen by the estimator: the box and class come either from
// the annotation (ground-truth mode) or from a matched detection.
struct Observation {
  std::string image_id;
  std::size_t image_rank = 0;   // position of the image in the split
  std::size_t truth_index = 0;  // position of the truth among the image's kept labels
  ObjectClass cls = ObjectClass::Car;
  Box box;
  ImageMeta meta;
  Tensor<float> crop;  // empty when crops were not requested
  LabelRecord truth;

  double truth_theta_eff() const { return effective_orientation(truth.alpha); }
};

struct DataLayout {
  std::filesystem::path labels_dir;
  std::filesystem::path images_dir;
  DistanceMode distance_mode = DistanceMode::z_axis;

  std::filesystem::path label_path(const std::string& id) const { return labels_dir / (id + ".txt"); }
};

// Fails on the first id without a label file or image, before any work.
inline void check_split(const DataLayout& layout, const std::vector<std::string>& ids, bool need_images) {
  for (const auto& id : ids) {
    if (!std::filesystem::exists(layout.label_path(id))) {
      throw ConfigError("split lists unknown image id '" + id + "' (no " + layout.label_path(id).string() + ")");
    }
    if (need_images) {
      try {
        find_image(layout.images_dir, id);
      } catch (const IoError&) {
        throw ConfigError("split lists image id '" + id + "' with no image in " + layout.images_dir.string());
      }
    }
  }
}

inline std::vector<LabelRecord> load_truths(const DataLayout& layout, const std::string& id) {
  return preprocess(load_label_file(layout.label_path(id), layout.distance_mode));
}

namespace detail {

inline void sort_canonical(std::vector<Observation>& obs) {
  std::stable_sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) {
    return a.image_rank != b.image_rank ? a.image_rank < b.image_rank : a.truth_index < b.truth_index;
  });
}

}  // namespace detail

// Ground-truth mode: every kept annotation, observed through its own box.
inline std::vector<Observation> observe_ground_truth(const DataLayout& layout, const std::vector<std::string>& ids,
                                                     bool with_crops = true) {
  std::vector<Observation> out;
  for (std::size_t rank = 0; rank < ids.size(); ++rank) {
    const auto& id = ids[rank];
    const auto truths = load_truths(layout, id);
    if (truths.empty()) continue;
    const Tensor<float> img = read_image(find_image(layout.images_dir, id));
    const ImageMeta meta = image_meta(id, img);
    for (std::size_t t = 0; t < truths.size(); ++t) {
      Observation o{id, rank, t, truths[t].cls, truths[t].box, meta, {}, truths[t]};
      if (with_crops) o.crop = extract_crop(img, o.box);
      out.push_back(std::move(o));
    }
  }
  return out;
}

struct MatchStats {
  std::size_t detections = 0;
  std::size_t truths = 0;
  std::size_t matched = 0;
  std::size_t class_disagreements = 0;
};

// End-to-end mode: detections matched to kept annotations per image; each
// pair is observed through the detection box and detected class.
inline std::vector<Observation> observe_matched(const DataLayout& layout, const std::vector<std::string>& ids,
                                                const std::vector<DetectionRecord>& detections,
                                                const MatchOptions& options = {}, bool with_crops = true,
                                                MatchStats* stats = nullptr) {
  const auto by_image = group_by_image(detections);
  std::vector<Observation> out;
  MatchStats local;
  for (std::size_t rank = 0; rank < ids.size(); ++rank) {
    const auto& id = ids[rank];
    const auto truths = load_truths(layout, id);
    local.truths += truths.size();
    const auto it = by_image.find(id);
    if (it == by_image.end()) continue;
    local.detections += it->second.size();
    const auto pairs = match_detections(it->second, truths, options);
    if (pairs.empty()) continue;
    const Tensor<float> img = read_image(find_image(layout.images_dir, id));
    const ImageMeta meta = image_meta(id, img);
    for (const auto& p : pairs) {
      Observation o{id, rank, p.truth_index, p.detection.cls, p.detection.box, meta, {}, p.truth};
      if (with_crops) o.crop = extract_crop(img, o.box);
      if (!p.class_agrees) ++local.class_disagreements;
      out.push_back(std::move(o));
    }
  }
  local.matched = out.size();
  if (stats) *stats = local;
  detail::sort_canonical(out);
  return out;
}

// ---------------------------------------------------------------------------
// estimators

// Degrees in [0, 90]. Without a network the annotation's own orientation is
// used (oracle pose).
inline std::vector<double> estimate_orientations(const std::vector<Observation>& obs, const Network<float>* pose) {
  std::vector<double> out;
  out.reserve(obs.size());
  if (!pose) {
    for (const auto& o : obs) out.push_back(o.truth_theta_eff());
    return out;
  }
  constexpr std::size_t batch = 128;
  const std::size_t k = kCropChannels * kCropSize * kCropSize;
  for (std::size_t start = 0; start < obs.size(); start += batch) {
    const std::size_t n = std::min(batch, obs.size() - start);
    Tensor<float> x({n, kCropChannels, kCropSize, kCropSize});
    for (std::size_t b = 0; b < n; ++b) {
      const Tensor<float>& c = obs[start + b].crop;
      if (c.size() != k) throw StateError("observation of '" + obs[start + b].image_id + "' has no crop");
      std::copy_n(c.data(), k, x.data() + b * k);
    }
    const Tensor<float> y = pose->infer(x);
    for (std::size_t b = 0; b < n; ++b) out.push_back(std::clamp(double(y[b]) * 90.0, 0.0, 90.0));
  }
  return out;
}

inline std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

inline Dataset make_pose_dataset(const std::vector<Observation>& obs) {
  Dataset d{{kCropChannels, kCropSize, kCropSize}, {}, {}};
  for (const auto& o : obs) d.add(o.crop.values(), static_cast<float>(o.truth_theta_eff() / 90.0));
  return d;
}

inline Dataset make_distance_dataset(const std::vector<Observation>& obs, const std::vector<double>& thetas) {
  if (thetas.size() != obs.size()) throw DimensionError("one orientation per observation required");
  Dataset d{{kDecadeFeatureWidth}, {}, {}};
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto f = build_decade_features(obs[i].box, obs[i].cls, thetas[i], obs[i].meta);
    d.add(to_float(f.values), static_cast<float>(obs[i].truth.distance));
  }
  return d;
}

inline Dataset make_disnet_dataset(const std::vector<Observation>& obs, const ClassPriors& priors = {}) {
  Dataset d{{kDisnetFeatureWidth}, {}, {}};
  for (const auto& o : obs) {
    d.add(to_float(build_disnet_features(o.box, o.cls, o.meta, priors).values), static_cast<float>(o.truth.distance));
  }
  return d;
}

struct AdaptationData {
  Dataset pose;
  Dataset distance;
};

// Crops/features from the detection side, targets from the truth side.
// `pose` supplies the orientation fed to the distance features.
inline AdaptationData build_adaptation_dataset(const std::vector<Observation>& matched, const Network<float>* pose) {
  AdaptationData out;
  const bool have_crops = !matched.empty() && matched.front().crop.size() > 0;
  out.pose = have_crops ? make_pose_dataset(matched) : Dataset{{kCropChannels, kCropSize, kCropSize}, {}, {}};
  out.distance = make_distance_dataset(matched, estimate_orientations(matched, pose));
  return out;
}

enum class DistanceModel { decade, disnet };

struct Estimator {
  DistanceModel model = DistanceModel::decade;
  const Network<float>* pose = nullptr;  // null: oracle orientation (decade only)
  const Network<float>* distance = nullptr;
  ClassPriors priors;
};

struct Estimates {
  std::vector<double> distances;
  std::vector<double> thetas;  // empty for disnet
};

inline Estimates estimate(const std::vector<Observation>& obs, const Estimator& est) {
  if (!est.distance) throw StateError("estimator has no distance network");
  Estimates e;
  Dataset d;
  if (est.model == DistanceModel::decade) {
    e.thetas = estimate_orientations(obs, est.pose);
    d = make_distance_dataset(obs, e.thetas);
  } else {
    d = make_disnet_dataset(obs, est.priors);
  }
  if (d.empty()) return e;
  const auto pred = predict(*est.distance, d);
  e.distances.assign(pred.begin(), pred.end());
  return e;
}

inline EvalReport evaluate(const std::vector<Observation>& obs, const Estimator& est) {
  const Estimates e = estimate(obs, est);
  std::vector<DistancePair> pairs;
  pairs.reserve(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) pairs.push_back({e.distances[i], obs[i].truth.distance, obs[i].truth.cls});
  std::vector<PosePair> pose_pairs;
  if (est.model == DistanceModel::decade && est.pose) {
    for (std::size_t i = 0; i < obs.size(); ++i) pose_pairs.push_back({e.thetas[i], obs[i].truth_theta_eff()});
  }
  return build_report(pairs, pose_pairs);
}

// ---------------------------------------------------------------------------
// dataset files: "DCDS" | u32 version | u32 rank | u32 dims... | u32 n |
// float32 inputs | float32 targets

inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const std::filesystem::path& path, const Dataset& d) {
  detail::ByteWriter w;
  for (char c : {'D', 'C', 'D', 'S'}) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kDatasetVersion);
  w.u32(detail::narrow(d.sample_shape.size(), "rank"));
  for (std::size_t s : d.sample_shape) w.u32(detail::narrow(s, "dim"));
  w.u32(detail::narrow(d.size(), "sample count"));
  for (float v : d.inputs) w.f32(v);
  for (float v : d.targets) w.f32(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  detail::ByteReader r(std::vector<char>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
  r.set_context("dataset header of " + path.string());
  if (r.raw(4) != "DCDS") throw ParseError(path.string() + ": not a dataset file");
  if (r.u32() != kDatasetVersion) throw ParseError(path.string() + ": unsupported dataset version");
  Dataset d;
  const std::uint32_t rank = r.u32();
  for (std::uint32_t i = 0; i < rank; ++i) d.sample_shape.push_back(r.u32());
  const std::uint32_t n = r.u32();
  r.set_context("dataset body of " + path.string());
  if (std::uint64_t(n) * (d.sample_size() + 1) * 4 != r.remaining()) {
    throw ParseError(path.string() + ": dataset body size does not match its header");
  }
  d.inputs.resize(std::size_t(n) * d.sample_size());
  for (float& v : d.inputs) v = r.f32();
  d.targets.resize(n);
  for (float& v : d.targets) v = r.f32();
  return d;
}

}  // namespace decade
