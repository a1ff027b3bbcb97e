#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <system_error>
#include <vector>

#include <CLI11.hpp>

#include "decade/checkpoint.hpp"
#include "decade/errors.hpp"
#include "decade/evaluation.hpp"
#include "decade/gradcheck.hpp"
#include "decade/models.hpp"
#include "decade/pipeline.hpp"
#include "decade/synth.hpp"
#include "decade/training.hpp"

// The `decade` command line: settings come from a `key = value` file and
// are overridden by `--key value` flags; every subcommand resolves and
// checks all of its inputs before it writes anything under --out.
namespace decade::cli {

struct KeySpec {
  std::string key;
  std::string fallback;
  std::string help;
  bool path = false;
};

inline const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      {"out", "decade_out", "output directory", true},
      {"seed", "1", "top-level seed; every random stream is derived from it"},
      {"labels_dir", "", "directory of KITTI label files <id>.txt", true},
      {"images_dir", "", "directory of images <id>.png or <id>.ppm", true},
      {"train_split", "", "file listing training image ids", true},
      {"test_split", "", "file listing test image ids", true},
      {"detections", "", "detector output CSV", true},
      {"class_priors", "", "CSV of per-class mean dimensions for DisNet", true},
      {"checkpoint", "", "checkpoint for bench (default: all three architectures)", true},
      {"distance_mode", "z_axis", "z_axis or euclidean"},
      {"epochs", "250", "training epochs"},
      {"adapt_epochs", "100", "fine-tuning epochs for adapt"},
      {"batch_size", "64", "minibatch size"},
      {"pose_lr", "0.001", "PoseCNN learning rate"},
      {"dist_lr", "0.0001", "DistMLP and DisNet learning rate"},
      {"holdout_fraction", "0.1", "share of the training set held out to pick the best epoch"},
      {"log_every", "10", "print training progress every N epochs (0: quiet)"},
      {"match_iou", "0.6", "IoU threshold for matching detections to annotations"},
      {"class_strict", "false", "only match detections whose class agrees"},
      {"model", "decade", "decade or disnet"},
      {"pose", "network", "network or oracle (annotated orientation)"},
      {"adapted", "false", "evaluate with the adapted checkpoints"},
      {"n", "1000", "synth: number of images"},
      {"jitter", "0", "synth: detector box noise as a fraction of box size"},
      {"write_detections", "false", "synth: write detections.csv even without jitter"},
      {"placement", "ground", "synth: ground or uniform"},
      {"size_jitter", "0.03", "synth: relative std of each object dimension"},
      {"test_fraction", "0.2", "synth: share of images listed in test.txt"},
      {"images", "true", "synth: render images"},
      {"runs", "1000", "bench: timed single-sample inferences"},
      {"gradcheck_seeds", "20", "gradcheck: random instances per network"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_keys()) values_[k.key] = k.fallback;
  }

  // Relative paths are taken relative to `base`.
  void set(const std::string& key, const std::string& value, const std::filesystem::path& base) {
    const KeySpec& s = spec(key);
    if (s.path && !value.empty()) {
      const std::filesystem::path p(value);
      values_[key] = (p.is_relative() ? base / p : p).lexically_normal().string();
    } else {
      values_[key] = value;
    }
  }

  void load_file(const std::filesystem::path& file) {
    if (!std::filesystem::is_regular_file(file)) throw ConfigError("config file " + file.string() + " not found");
    const std::string text = read_text_file(file);
    const auto base = std::filesystem::absolute(file).parent_path();
    std::size_t line_no = 0;
    for (std::string_view line : detail::split(text, '\n')) {
      ++line_no;
      line = detail::trim(line.substr(0, line.find('#')));
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = file.string() + ":" + std::to_string(line_no);
      if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
      const std::string key(detail::trim(line.substr(0, eq)));
      if (!known(key)) throw ConfigError(where + ": unknown key '" + key + "'");
      set(key, std::string(detail::trim(line.substr(eq + 1))), base);
    }
  }

  static bool known(const std::string& key) {
    for (const auto& k : config_keys()) {
      if (k.key == key) return true;
    }
    return false;
  }

  bool has(const std::string& key) const { return !values_.at(spec(key).key).empty(); }
  const std::string& text(const std::string& key) const { return values_.at(spec(key).key); }

  std::filesystem::path path(const std::string& key) const {
    if (!has(key)) throw ConfigError("missing setting '" + key + "' (config file or --" + key + ")");
    return text(key);
  }

  double real(const std::string& key) const {
    const std::string& v = text(key);
    double out = 0.0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out)) {
      throw ConfigError("setting '" + key + "' = '" + v + "' is not a number");
    }
    return out;
  }

  std::uint64_t integer(const std::string& key) const {
    const std::string& v = text(key);
    std::uint64_t out = 0;
    const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) {
      throw ConfigError("setting '" + key + "' = '" + v + "' is not a non-negative integer");
    }
    return out;
  }

  bool flag(const std::string& key) const {
    const std::string& v = text(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("setting '" + key + "' = '" + v + "' is not true/false");
  }

 private:
  static const KeySpec& spec(const std::string& key) {
    for (const auto& k : config_keys()) {
      if (k.key == key) return k;
    }
    throw ConfigError("unknown setting '" + key + "'");
  }

  std::map<std::string, std::string> values_;
};

// Files under --out: data/ (prepared datasets), models/ (checkpoints and
// training histories), reports/ (evaluation output).
struct Workspace {
  std::filesystem::path root;

  std::filesystem::path dataset(const std::string& kind, const std::string& split) const {
    return root / "data" / (kind + "_" + split + ".bin");
  }
  static std::string stem(const std::string& net, bool adapted) { return adapted ? net + "_adapted" : net; }
  std::filesystem::path checkpoint(const std::string& net, bool adapted = false) const {
    return root / "models" / (stem(net, adapted) + ".ckpt");
  }
  std::filesystem::path history(const std::string& net, bool adapted = false) const {
    return root / "models" / (stem(net, adapted) + "_history.csv");
  }
  std::filesystem::path report(const std::string& name, const std::string& ext) const {
    return root / "reports" / (name + ext);
  }
};

struct Context {
  RunConfig cfg;
  Workspace ws;
  std::ostream& out;
  std::ostream& err;

  std::uint64_t seed() const { return cfg.integer("seed"); }
};

namespace detail {

using decade::detail::format_number;

// Console numbers; files keep full precision.
inline std::string brief(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::filesystem::path require_file(const RunConfig& cfg, const std::string& key) {
  const auto p = cfg.path(key);
  if (!std::filesystem::is_regular_file(p)) throw ConfigError(key + ": file " + p.string() + " not found");
  return p;
}

inline std::filesystem::path require_dir(const RunConfig& cfg, const std::string& key) {
  const auto p = cfg.path(key);
  if (!std::filesystem::is_directory(p)) throw ConfigError(key + ": directory " + p.string() + " not found");
  return p;
}

inline DataLayout data_layout(const RunConfig& cfg) {
  return {require_dir(cfg, "labels_dir"), require_dir(cfg, "images_dir"),
          distance_mode_from_name(cfg.text("distance_mode"))};
}

// Split ids, checked against the label and image directories.
inline std::vector<std::string> split_ids(const RunConfig& cfg, const DataLayout& layout, const std::string& key) {
  const auto path = require_file(cfg, key);
  auto ids = load_split(path);
  if (ids.empty()) throw ConfigError(key + ": split " + path.string() + " lists no image ids");
  check_split(layout, ids, true);
  return ids;
}

inline ClassPriors priors(const RunConfig& cfg) {
  return cfg.has("class_priors") ? load_class_priors(require_file(cfg, "class_priors")) : ClassPriors{};
}

inline MatchOptions match_options(const RunConfig& cfg) {
  const double t = cfg.real("match_iou");
  if (!(t > 0.0 && t <= 1.0)) throw ConfigError("match_iou must lie in (0, 1]");
  return {t, cfg.flag("class_strict")};
}

inline std::vector<DetectionRecord> detections(const RunConfig& cfg) {
  return load_detections(require_file(cfg, "detections"));
}

inline Checkpoint require_checkpoint(const Workspace& ws, const NetworkDef& def, bool adapted,
                                     const std::string& how) {
  const auto path = ws.checkpoint(def.name, adapted);
  if (!std::filesystem::is_regular_file(path)) {
    throw DependencyError("missing " + path.string() + "; run `decade " + how + "` first");
  }
  return load_checkpoint(path, def);
}

inline Dataset require_dataset(const Workspace& ws, const std::string& kind, const std::string& split) {
  const auto path = ws.dataset(kind, split);
  if (!std::filesystem::is_regular_file(path)) {
    throw DependencyError("missing " + path.string() + "; run `decade prepare` first");
  }
  return load_dataset(path);
}

inline TrainConfig train_config(const Context& ctx, bool pose, std::size_t epochs, const std::string& tag) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = ctx.cfg.integer("batch_size");
  tc.learning_rate = ctx.cfg.real(pose ? "pose_lr" : "dist_lr");
  tc.holdout_fraction = ctx.cfg.real("holdout_fraction");
  tc.seed = derive_seed(ctx.seed(), tag);
  tc.metric_scale = pose ? 90.0 : 1.0;
  tc.validate();
  return tc;
}

inline EpochCallback progress(const Context& ctx, const std::string& name, std::size_t epochs, bool pose) {
  const std::size_t every = ctx.cfg.integer("log_every");
  if (every == 0) return {};
  return [&out = ctx.out, name, epochs, every, pose](std::size_t epoch, double loss, double metric) {
    if (epoch % every != 0 && epoch != epochs) return;
    out << name << " epoch " << epoch << "/" << epochs << " loss " << brief(loss) << " held-out MAE "
        << brief(metric) << (pose ? " deg" : " m") << "\n";
  };
}

inline void save_training(const Context& ctx, const TrainResult& r, const std::string& name, bool adapted,
                          std::size_t epochs) {
  std::filesystem::create_directories(ctx.ws.root / "models");
  save_checkpoint(r.best_net, ctx.ws.checkpoint(name, adapted), {ctx.seed(), epochs});
  write_history(ctx.ws.history(name, adapted), r.history);
  ctx.out << Workspace::stem(name, adapted) << ": best epoch " << r.best_epoch << " of " << epochs << " -> "
          << ctx.ws.checkpoint(name, adapted).string() << "\n";
}

inline void print_report(std::ostream& out, const EvalReport& r) {
  out << "objects " << r.overall.count;
  if (r.overall.mae_m) out << "  MAE " << brief(*r.overall.mae_m) << " m";
  if (r.overall.mre) out << "  MRE " << brief(*r.overall.mre * 100.0) << " %";
  if (r.pose_mae_deg) out << "  pose MAE " << brief(*r.pose_mae_deg) << " deg";
  out << "\n";
  for (const auto& [cls, a] : r.per_class) {
    if (a.count == 0) continue;
    out << "  " << cls << ": " << a.count << " objects, MAE " << brief(*a.mae_m) << " m";
    if (a.mre) out << ", MRE " << brief(*a.mre * 100.0) << " %";
    out << "\n";
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// commands

inline void cmd_prepare(const Context& ctx) {
  const DataLayout layout = detail::data_layout(ctx.cfg);
  const auto train_ids = detail::split_ids(ctx.cfg, layout, "train_split");
  const auto test_ids = detail::split_ids(ctx.cfg, layout, "test_split");
  const ClassPriors priors = detail::priors(ctx.cfg);

  struct Prepared {
    std::string split;
    std::size_t images;
    Dataset pose, dist, disnet;
  };
  std::vector<Prepared> prepared;
  for (const auto& [split, ids] : {std::pair{"train", &train_ids}, std::pair{"test", &test_ids}}) {
    const auto obs = observe_ground_truth(layout, *ids);
    if (obs.empty()) throw ConfigError(std::string(split) + " split has no usable annotations");
    prepared.push_back({split, ids->size(), make_pose_dataset(obs),
                        make_distance_dataset(obs, estimate_orientations(obs, nullptr)),
                        make_disnet_dataset(obs, priors)});
  }
  std::filesystem::create_directories(ctx.ws.root / "data");
  for (const auto& p : prepared) {
    save_dataset(ctx.ws.dataset("pose", p.split), p.pose);
    save_dataset(ctx.ws.dataset("dist", p.split), p.dist);
    save_dataset(ctx.ws.dataset("disnet", p.split), p.disnet);
    ctx.out << p.split << ": " << p.dist.size() << " objects from " << p.images << " images\n";
  }
}

inline void cmd_train(const Context& ctx, const std::string& which) {
  const bool pose = which == "pose";
  const NetworkDef def = pose ? build_posecnn() : which == "dist" ? build_distmlp() : build_disnet();
  const Dataset data = detail::require_dataset(ctx.ws, which, "train");
  const std::size_t epochs = ctx.cfg.integer("epochs");
  const TrainConfig tc = detail::train_config(ctx, pose, epochs, "train-" + def.name);
  const Network<float> init(def, derive_seed(ctx.seed(), "init-" + def.name));
  const auto r = train(init, data, tc, detail::progress(ctx, def.name, epochs, pose));
  detail::save_training(ctx, r, def.name, false, epochs);
}

// Fine-tunes on training-split detections matched to annotations: PoseCNN
// first, then DistMLP fed by the adapted PoseCNN.
inline void cmd_adapt(const Context& ctx, const std::string& which) {
  const bool pose = which == "pose";
  const bool oracle = ctx.cfg.text("pose") == "oracle";
  Checkpoint base, pose_net;
  if (pose) {
    base = detail::require_checkpoint(ctx.ws, build_posecnn(), false, "train pose");
  } else {
    if (!oracle) pose_net = detail::require_checkpoint(ctx.ws, build_posecnn(), true, "adapt pose");
    base = detail::require_checkpoint(ctx.ws, build_distmlp(), false, "train dist");
  }
  const DataLayout layout = detail::data_layout(ctx.cfg);
  const auto ids = detail::split_ids(ctx.cfg, layout, "train_split");
  const auto dets = detail::detections(ctx.cfg);
  MatchStats stats;
  const auto matched = observe_matched(layout, ids, dets, detail::match_options(ctx.cfg), pose || !oracle, &stats);
  if (matched.empty()) throw EmptyMatchError("no detection matches an annotation in the training split");
  ctx.out << "matched " << stats.matched << " of " << stats.detections << " detections (" << stats.truths
          << " annotations)\n";

  const std::size_t epochs = ctx.cfg.integer("adapt_epochs");
  const std::string name = base.network.name();
  const TrainConfig tc = detail::train_config(ctx, pose, epochs, "adapt-" + name);
  const AdaptationData data = build_adaptation_dataset(matched, oracle || pose ? nullptr : &pose_net.network);
  const auto r = adapt(base.network, pose ? data.pose : data.distance, tc, detail::progress(ctx, name, epochs, pose));
  detail::save_training(ctx, r, name, true, epochs);
}

inline void cmd_eval(const Context& ctx, const std::string& mode) {
  const bool e2e = mode == "e2e";
  const std::string model = ctx.cfg.text("model");
  const bool adapted = ctx.cfg.flag("adapted");
  const bool oracle = ctx.cfg.text("pose") == "oracle";
  if (model != "decade" && model != "disnet") throw ConfigError("model must be decade or disnet, got '" + model + "'");
  if (model == "disnet" && adapted) throw ConfigError("disnet has no adapted checkpoint");
  if (ctx.cfg.text("pose") != "network" && !oracle) throw ConfigError("pose must be network or oracle");

  Checkpoint pose, dist;
  Estimator est;
  if (model == "decade") {
    const std::string how = adapted ? "adapt" : "train";
    if (!oracle) pose = detail::require_checkpoint(ctx.ws, build_posecnn(), adapted, how + " pose");
    dist = detail::require_checkpoint(ctx.ws, build_distmlp(), adapted, how + " dist");
    est = {DistanceModel::decade, oracle ? nullptr : &pose.network, &dist.network, {}};
  } else {
    dist = detail::require_checkpoint(ctx.ws, build_disnet(), false, "train disnet");
    est = {DistanceModel::disnet, nullptr, &dist.network, detail::priors(ctx.cfg)};
  }
  const DataLayout layout = detail::data_layout(ctx.cfg);
  const auto ids = detail::split_ids(ctx.cfg, layout, "test_split");
  std::vector<Observation> obs;
  if (e2e) {
    const auto dets = detail::detections(ctx.cfg);
    MatchStats stats;
    obs = observe_matched(layout, ids, dets, detail::match_options(ctx.cfg), !oracle, &stats);
    if (obs.empty()) throw EmptyMatchError("no detection matches an annotation in the test split");
    ctx.out << "matched " << stats.matched << " of " << stats.detections << " detections (" << stats.truths
            << " annotations, " << stats.class_disagreements << " with another class)\n";
  } else {
    obs = observe_ground_truth(layout, ids, model == "decade" && !oracle);
    if (obs.empty()) throw ConfigError("test split has no usable annotations");
  }
  const EvalReport report = evaluate(obs, est);
  const std::string name = mode + "_" + Workspace::stem(model, adapted);
  std::filesystem::create_directories(ctx.ws.root / "reports");
  write_report(ctx.ws.report(name, ".json"), ctx.ws.report(name, ".csv"), report);
  detail::print_report(ctx.out, report);
  ctx.out << "report -> " << ctx.ws.report(name, ".json").string() << "\n";
}

// Distances for every detection in the detections file.
inline void cmd_predict(const Context& ctx) {
  const std::string model = ctx.cfg.text("model");
  const bool adapted = ctx.cfg.flag("adapted");
  if (model != "decade" && model != "disnet") throw ConfigError("model must be decade or disnet, got '" + model + "'");
  if (model == "disnet" && adapted) throw ConfigError("disnet has no adapted checkpoint");
  Checkpoint pose, dist;
  Estimator est;
  if (model == "decade") {
    const std::string how = adapted ? "adapt" : "train";
    pose = detail::require_checkpoint(ctx.ws, build_posecnn(), adapted, how + " pose");
    dist = detail::require_checkpoint(ctx.ws, build_distmlp(), adapted, how + " dist");
    est = {DistanceModel::decade, &pose.network, &dist.network, {}};
  } else {
    dist = detail::require_checkpoint(ctx.ws, build_disnet(), false, "train disnet");
    est = {DistanceModel::disnet, nullptr, &dist.network, detail::priors(ctx.cfg)};
  }
  const auto images_dir = detail::require_dir(ctx.cfg, "images_dir");
  const auto dets = detail::detections(ctx.cfg);
  const auto by_image = group_by_image(dets);
  for (const auto& [id, _] : by_image) {
    try {
      find_image(images_dir, id);
    } catch (const IoError&) {
      throw ConfigError("detections name image id '" + id + "' with no image in " + images_dir.string());
    }
  }

  std::vector<Observation> obs;
  std::vector<const DetectionRecord*> source;
  std::size_t rank = 0;
  for (const auto& [id, rows] : by_image) {
    const Tensor<float> img = read_image(find_image(images_dir, id));
    const ImageMeta meta = image_meta(id, img);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      Observation o{id, rank, j, rows[j].cls, rows[j].box, meta, {}, {}};
      if (model == "decade") o.crop = extract_crop(img, o.box);
      obs.push_back(std::move(o));
      source.push_back(&rows[j]);
    }
    ++rank;
  }
  const Estimates e = estimate(obs, est);

  std::filesystem::create_directories(ctx.ws.root);
  const auto path = ctx.ws.root / "predictions.csv";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "image_id,class,confidence,left,top,right,bottom,theta_eff_deg,distance_m\n";
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const DetectionRecord& d = *source[i];
    out << d.image_id << ',' << class_name(d.cls) << ',' << detail::format_number(d.confidence) << ','
        << detail::format_number(d.box.left) << ',' << detail::format_number(d.box.top) << ','
        << detail::format_number(d.box.right) << ',' << detail::format_number(d.box.bottom) << ','
        << (e.thetas.empty() ? std::string() : detail::format_number(e.thetas[i])) << ','
        << detail::format_number(e.distances[i]) << '\n';
  }
  ctx.out << obs.size() << " predictions -> " << path.string() << "\n";
}

inline void cmd_complexity(const Context& ctx) {
  char line[96];
  std::snprintf(line, sizeof line, "%-10s %12s %12s\n", "network", "params", "flops");
  ctx.out << line;
  for (const auto& def : {build_posecnn(), build_distmlp(), build_disnet()}) {
    std::snprintf(line, sizeof line, "%-10s %12zu %12llu\n", def.name.c_str(), count_params(def),
                  static_cast<unsigned long long>(count_flops(def)));
    ctx.out << line;
  }
}

// Mean wall-clock time of single-sample inference after 10 warm-up runs.
inline void cmd_bench(const Context& ctx) {
  const std::size_t runs = ctx.cfg.integer("runs");
  if (runs == 0) throw ConfigError("runs must be at least 1");
  std::vector<Network<float>> nets;
  if (ctx.cfg.has("checkpoint")) {
    nets.push_back(load_checkpoint(detail::require_file(ctx.cfg, "checkpoint")).network);
  } else {
    for (const auto& def : {build_posecnn(), build_distmlp(), build_disnet()}) {
      nets.emplace_back(def, derive_seed(ctx.seed(), "bench-" + def.name));
    }
  }
  if (runs == 1) ctx.err << "warning: a single timed run is noisy\n";
  Rng rng(derive_seed(ctx.seed(), "bench-input"));
  double sink = 0.0;
  for (const auto& net : nets) {
    Shape shape{1};
    shape.insert(shape.end(), net.def().input_shape.begin(), net.def().input_shape.end());
    Tensor<float> x(shape);
    for (float& v : x.values()) v = static_cast<float>(rng.uniform());
    for (int i = 0; i < 10; ++i) sink += net.infer(x)[0];
    double total = 0.0;
    for (std::size_t i = 0; i < runs; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      sink += net.infer(x)[0];
      total += std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0).count();
    }
    char line[128];
    std::snprintf(line, sizeof line, "%-10s %10.2f us mean over %zu runs\n", net.name().c_str(),
                  total / double(runs), runs);
    ctx.out << line;
  }
  if (!std::isfinite(sink)) ctx.err << "warning: non-finite network output\n";
}

// KITTI-layout synthetic dataset under --out plus a dataset.cfg pointing at it.
inline void cmd_synth(const Context& ctx) {
  const std::size_t n = ctx.cfg.integer("n");
  if (n == 0) throw ConfigError("n must be at least 1");
  SynthConfig sc;
  sc.placement = placement_from_name(ctx.cfg.text("placement"));
  sc.size_jitter = ctx.cfg.real("size_jitter");
  sc.jitter_std = ctx.cfg.real("jitter");
  sc.validate();
  SynthDumpOptions opts;
  opts.images = ctx.cfg.flag("images");
  opts.write_detections = sc.jitter_std > 0.0 || ctx.cfg.flag("write_detections");
  opts.test_fraction = ctx.cfg.real("test_fraction");
  if (!(opts.test_fraction >= 0.0 && opts.test_fraction < 1.0)) throw ConfigError("test_fraction must lie in [0, 1)");

  const auto samples = generate_samples(sc, derive_seed(ctx.seed(), "synth"), n, false);
  write_synth_dataset(ctx.ws.root, sc, samples, derive_seed(ctx.seed(), "synth-files"), opts);
  std::ofstream cfg(ctx.ws.root / "dataset.cfg", std::ios::trunc);
  cfg << "labels_dir = labels\nimages_dir = images\ntrain_split = train.txt\ntest_split = test.txt\n";
  if (opts.write_detections) cfg << "detections = detections.csv\n";
  if (!cfg) throw IoError("cannot write " + (ctx.ws.root / "dataset.cfg").string());
  ctx.out << n << " synthetic images -> " << ctx.ws.root.string() << "\n";
}

inline void cmd_gradcheck(const Context& ctx) {
  constexpr double tolerance = 1e-4;
  const std::size_t seeds = ctx.cfg.integer("gradcheck_seeds");
  if (seeds == 0) throw ConfigError("gradcheck_seeds must be at least 1");
  double worst = 0.0;
  for (const auto& def : gradcheck_suite()) {
    double max_err = 0.0;
    std::size_t checked = 0, kinks = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto r = gradient_check_random(def, derive_seed(ctx.seed(), s));
      max_err = std::max(max_err, r.max_relative_error);
      checked += r.checked;
      kinks += r.kinks_skipped;
    }
    char line[128];
    std::snprintf(line, sizeof line, "%-16s max rel err %.3e  (%zu probes, %zu at kinks)\n", def.name.c_str(),
                  max_err, checked, kinks);
    ctx.out << line;
    worst = std::max(worst, max_err);
  }
  if (!(worst < tolerance)) {
    throw NumericError("gradient check failed: max relative error " + detail::brief(worst));
  }
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"decade: detection-wise object distance estimation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "settings file of `key = value` lines");
  std::map<std::string, std::string> given;
  std::map<std::string, CLI::Option*> flags;
  for (const auto& k : config_keys()) {
    std::string names = "--" + k.key;
    if (k.key.find('_') != std::string::npos) {
      std::string dashed = k.key;
      std::replace(dashed.begin(), dashed.end(), '_', '-');
      names += ",--" + dashed;
    }
    flags[k.key] = app.add_option(names, given[k.key], k.help + (k.fallback.empty() ? "" : " [" + k.fallback + "]"));
  }

  std::string which;
  auto* prepare = app.add_subcommand("prepare", "build pose and distance datasets from the train/test splits");
  auto* train_cmd = app.add_subcommand("train", "train a network on prepared data");
  train_cmd->add_option("network", which, "pose, dist or disnet")->required()->check(CLI::IsMember({"pose", "dist", "disnet"}));
  auto* adapt_cmd = app.add_subcommand("adapt", "fine-tune on matched detections (pose before dist)");
  adapt_cmd->add_option("network", which, "pose or dist")->required()->check(CLI::IsMember({"pose", "dist"}));
  auto* eval = app.add_subcommand("eval", "evaluate on the test split");
  eval->add_option("mode", which, "gt (annotations) or e2e (matched detections)")->required()->check(CLI::IsMember({"gt", "e2e"}));
  auto* predict = app.add_subcommand("predict", "estimate distances for a detections file");
  auto* complexity = app.add_subcommand("complexity", "parameter and FLOP counts");
  auto* bench = app.add_subcommand("bench", "single-sample inference latency");
  auto* synth = app.add_subcommand("synth", "write a synthetic KITTI-layout dataset");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every layer's gradients");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    const auto cwd = std::filesystem::current_path();
    for (const auto& [key, opt] : flags) {
      if (opt->count() > 0) cfg.set(key, given[key], cwd);
    }
    Context ctx{cfg, {cfg.path("out")}, out, err};
    ctx.seed();

    if (app.got_subcommand(prepare)) cmd_prepare(ctx);
    else if (app.got_subcommand(train_cmd)) cmd_train(ctx, which);
    else if (app.got_subcommand(adapt_cmd)) cmd_adapt(ctx, which);
    else if (app.got_subcommand(eval)) cmd_eval(ctx, which);
    else if (app.got_subcommand(predict)) cmd_predict(ctx);
    else if (app.got_subcommand(complexity)) cmd_complexity(ctx);
    else if (app.got_subcommand(bench)) cmd_bench(ctx);
    else if (app.got_subcommand(synth)) cmd_synth(ctx);
    else if (app.got_subcommand(gradcheck)) cmd_gradcheck(ctx);
    return 0;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e);
  }
}

}  // namespace decade::cli
