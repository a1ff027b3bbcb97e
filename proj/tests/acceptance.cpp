// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Pass criterion numbers as arguments to run a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "decade/checkpoint.hpp"
#include "decade/evaluation.hpp"
#include "decade/features.hpp"
#include "decade/gradcheck.hpp"
#include "decade/matching.hpp"
#include "decade/models.hpp"
#include "decade/optim.hpp"
#include "decade/pipeline.hpp"
#include "decade/synth.hpp"
#include "decade/training.hpp"

using namespace decade;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// shared synthetic data, built on first use

constexpr std::size_t kTrainN = 10000;
constexpr std::size_t kTestN = 2000;
constexpr std::uint64_t kSeed = 1;
constexpr std::size_t kPoseEpochs = 10;

std::vector<Observation> to_observations(const SynthConfig& cfg, const std::vector<SynthSample>& samples) {
  std::vector<Observation> obs;
  obs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    obs.push_back({s.image_id, i, 0, s.label.cls, s.label.box, {s.image_id, cfg.width_px, cfg.height_px}, s.crop,
                   s.label});
  }
  return obs;
}

struct World {
  SynthConfig cfg;
  std::vector<Observation> train, test;

  World(bool crops, std::uint64_t seed) {
    train = to_observations(cfg, generate_samples(cfg, derive_seed(seed, "train"), kTrainN, crops));
    test = to_observations(cfg, generate_samples(cfg, derive_seed(seed, "test"), kTestN, crops));
  }
};

TrainConfig dist_config(std::uint64_t seed) {
  TrainConfig tc;  // 250 epochs, batch 64, lr 1e-4
  tc.seed = seed;
  return tc;
}

struct DistanceModels {
  Network<float> decade, disnet;
  double seconds_decade = 0.0;
};

const World& distance_world() {
  static const World w(false, kSeed);
  return w;
}

const DistanceModels& distance_models() {
  static const DistanceModels m = [] {
    const World& w = distance_world();
    Stopwatch t;
    auto decade_net = train(Network<float>(build_distmlp(), derive_seed(kSeed, "init-distmlp")),
                            make_distance_dataset(w.train, estimate_orientations(w.train, nullptr)),
                            dist_config(derive_seed(kSeed, "train-distmlp")))
                          .best_net;
    const double secs = t.seconds();
    auto disnet_net = train(Network<float>(build_disnet(), derive_seed(kSeed, "init-disnet")),
                            make_disnet_dataset(w.train), dist_config(derive_seed(kSeed, "train-disnet")))
                          .best_net;
    return DistanceModels{std::move(decade_net), std::move(disnet_net), secs};
  }();
  return m;
}

struct PoseModel {
  Network<float> net;
  double pose_mae_deg = 0.0;
  double seconds = 0.0;
};

const PoseModel& pose_model() {
  static const PoseModel m = [] {
    Stopwatch t;
    const World w(true, derive_seed(kSeed, "pose"));
    TrainConfig tc;
    tc.epochs = kPoseEpochs;
    tc.learning_rate = kPoseLearningRate;
    tc.metric_scale = 90.0;
    tc.seed = derive_seed(kSeed, "train-posecnn");
    auto net = train(Network<float>(build_posecnn(), derive_seed(kSeed, "init-posecnn")), make_pose_dataset(w.train),
                     tc)
                   .best_net;
    std::vector<double> truth;
    for (const auto& o : w.test) truth.push_back(o.truth_theta_eff());
    const double err = pose_mae(estimate_orientations(w.test, &net), truth);
    return PoseModel{std::move(net), err, t.seconds()};
  }();
  return m;
}

std::pair<double, double> distance_errors(const std::vector<Observation>& obs, const Estimator& est) {
  const auto e = estimate(obs, est);
  std::vector<double> truth;
  for (const auto& o : obs) truth.push_back(o.truth.distance);
  return {mae(e.distances, truth), mre(e.distances, truth)};
}

// ---------------------------------------------------------------------------
// criteria

Verdict gradient_integrity() {
  constexpr double tol = 1e-4;
  Stopwatch t;
  double worst = 0.0;
  std::string worst_name;
  std::size_t probes = 0;
  for (const auto& def : gradcheck_suite()) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto r = gradient_check_random(def, s);
      probes += r.checked;
      if (r.max_relative_error > worst) {
        worst = r.max_relative_error;
        worst_name = def.name;
      }
    }
  }
  const double secs = t.seconds();
  return {worst < tol && secs < 60.0,
          fmt("max rel err %.2e (%s) over %zu probes, 7 networks x 20 seeds; %.1f s", worst, worst_name.c_str(),
              probes, secs)};
}

Verdict optimizer() {
  Stopwatch t;
  std::size_t worst_steps = 0;
  bool all = true;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(derive_seed(seed, "adam"));
    Tensor<double> w({16});
    for (double& v : w.values()) v = rng.uniform(-1.0, 1.0);
    std::vector<Tensor<double>*> params{&w};
    auto state = make_adam_state<double>(params);
    std::size_t steps = 0;
    auto norm = [&] {
      double s = 0.0;
      for (double v : w.values()) s += v * v;
      return std::sqrt(s);
    };
    while (norm() >= 1e-3 && steps < 2000) {
      w.zero_grad();
      for (std::size_t i = 0; i < w.size(); ++i) w.grad()[i] = 2.0 * w[i];
      adam_step<double>(params, state, 0.01);
      ++steps;
    }
    all = all && norm() < 1e-3;
    worst_steps = std::max(worst_steps, steps);
  }
  const double secs = t.seconds();
  return {all && secs < 5.0, fmt("10/10 seeds need at most %zu steps to ||w|| < 1e-3 (limit 2000); %.2f s", worst_steps,
                                 secs)};
}

Verdict metric_oracles() {
  Stopwatch t;
  Rng rng(derive_seed(kSeed, "metrics"));
  bool exact = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(64);
    std::vector<double> p(n), q(n), a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = rng.uniform(0.5, 150.0);
      p[i] = q[i] + rng.uniform(-10.0, 10.0);
      a[i] = rng.uniform(0.0, 90.0);
      b[i] = rng.uniform(0.0, 90.0);
    }
    double sa = 0, sr = 0, sp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p[i] > q[i] ? p[i] - q[i] : q[i] - p[i];
      sa += d;
      sr += d / q[i];
      sp += a[i] > b[i] ? a[i] - b[i] : b[i] - a[i];
    }
    exact = exact && mae(p, q) == sa / double(n) && mre(p, q) == sr / double(n) && pose_mae(a, b) == sp / double(n);
  }
  const double rel = mre({1.1}, {1.0}), abs_err = mae({1.1}, {1.0});
  const bool worked = std::abs(rel - 0.10) < 1e-12 && std::abs(abs_err - 0.1) < 1e-12;
  const double secs = t.seconds();
  return {exact && worked && secs < 5.0,
          fmt("1000 random vectors %s brute force; 1.1 vs 1.0 -> MRE %.4f%%, MAE %.4f m; %.2f s",
              exact ? "equal" : "DIFFER from", rel * 100.0, abs_err, secs)};
}

// Fraction of 1000x1000 pixel centers covered, as an independent IoU.
double raster_iou(const Box& a, const Box& b) {
  auto span = [](double lo, double hi) {
    // pixel centers c + 0.5 inside [lo, hi)
    const long first = static_cast<long>(std::ceil(lo - 0.5));
    const long last = static_cast<long>(std::ceil(hi - 0.5)) - 1;
    return std::pair{first, last};
  };
  const auto [ax0, ax1] = span(a.left, a.right);
  const auto [ay0, ay1] = span(a.top, a.bottom);
  const auto [bx0, bx1] = span(b.left, b.right);
  const auto [by0, by1] = span(b.top, b.bottom);
  long inter = 0, uni = 0;
  for (long y = std::min(ay0, by0); y <= std::max(ay1, by1); ++y) {
    for (long x = std::min(ax0, bx0); x <= std::max(ax1, bx1); ++x) {
      const bool in_a = x >= ax0 && x <= ax1 && y >= ay0 && y <= ay1;
      const bool in_b = x >= bx0 && x <= bx1 && y >= by0 && y <= by1;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

Verdict iou_properties() {
  Stopwatch t;
  Rng rng(derive_seed(kSeed, "iou"));
  auto box = [&](double cx, double cy) {
    const double w = rng.uniform(100, 500), h = rng.uniform(100, 500);
    const double l = std::clamp(cx - w / 2, 0.0, 1000.0 - w), tp = std::clamp(cy - h / 2, 0.0, 1000.0 - h);
    return Box{l, tp, l + w, tp + h};
  };
  bool props = true;
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Box a = box(rng.uniform(0, 1000), rng.uniform(0, 1000));
    const Box b = box(0.5 * (a.left + a.right) + rng.uniform(-300, 300), 0.5 * (a.top + a.bottom) + rng.uniform(-300, 300));
    const double v = iou(a, b);
    props = props && v == iou(b, a) && v >= 0.0 && v <= 1.0 && iou(a, a) == 1.0 && iou(b, b) == 1.0;
    worst = std::max(worst, std::abs(v - raster_iou(a, b)));
  }
  const double secs = t.seconds();
  return {props && worst <= 0.02 && secs < 30.0,
          fmt("10000 pairs: symmetry/bounds/identity %s; max |iou - raster| %.4f (limit 0.02); %.1f s",
              props ? "hold" : "VIOLATED", worst, secs)};
}

Verdict orientation_fold() {
  Stopwatch t;
  const double rad = std::numbers::pi / 180.0;
  double lo = 1e9, hi = -1e9, worst = 0.0;
  for (int k = -1800; k <= 1800; ++k) {
    const double deg = k / 10.0;
    const double f = effective_orientation(deg * rad);
    lo = std::min(lo, f);
    hi = std::max(hi, f);
    worst = std::max({worst, std::abs(f - effective_orientation(-deg * rad)),
                      std::abs(f - effective_orientation((deg + 180.0) * rad)),
                      std::abs(f - effective_orientation((180.0 - deg) * rad))});
  }
  const double secs = t.seconds();
  return {worst < 1e-9 && lo == 0.0 && hi == 90.0 && secs < 1.0,
          fmt("3601 angles: max identity gap %.1e deg (f(-a), f(a+180), f(180-a)); range [%g, %g]; %.3f s", worst, lo,
              hi, secs)};
}

Verdict architecture_budgets() {
  const auto pose = count_params(build_posecnn()), dist = count_params(build_distmlp()),
             dis = count_params(build_disnet());
  const double rel = std::abs(double(pose) - 102300.0) / 102300.0;
  return {dist == 21801 && dis == 21001 && rel <= 0.05,
          fmt("distmlp %zu (21801), disnet %zu (21001), posecnn %zu (%.2f%% from 102.3K)", dist, dis, pose, rel * 100)};
}

Verdict distance_learnability() {
  const auto& m = distance_models();
  const auto [err_m, err_r] = distance_errors(distance_world().test, {DistanceModel::decade, nullptr, &m.decade, {}});
  return {err_r <= 0.08 && err_m <= 2.5 && m.seconds_decade < 600.0,
          fmt("%zu train / %zu test, 250 epochs: MAE %.3f m (<= 2.5), MRE %.2f%% (<= 8); %.0f s", kTrainN, kTestN,
              err_m, err_r * 100, m.seconds_decade)};
}

Verdict pose_learnability() {
  const auto& m = pose_model();
  return {m.pose_mae_deg <= 5.0 && m.seconds < 1800.0,
          fmt("%zu train / %zu test crops, %zu epochs: MAE %.3f deg (<= 5); %.0f s", kTrainN, kTestN, kPoseEpochs,
              m.pose_mae_deg, m.seconds)};
}

Verdict baseline_ordering() {
  const auto& m = distance_models();
  const auto& test = distance_world().test;
  const auto [dm, dr] = distance_errors(test, {DistanceModel::decade, nullptr, &m.decade, {}});
  const auto [bm, br] = distance_errors(test, {DistanceModel::disnet, nullptr, &m.disnet, {}});
  return {dr < br, fmt("DECADE MRE %.2f%% (MAE %.3f m) vs DisNet MRE %.2f%% (MAE %.3f m)", dr * 100, dm, br * 100, bm)};
}

// Detections with box noise, matched one-to-one per image at IoU 0.6.
std::vector<Observation> jittered_matches(const SynthConfig& cfg, const std::vector<Observation>& truth,
                                          std::uint64_t seed, std::size_t* dropped) {
  std::vector<Annotation> ann;
  for (const auto& o : truth) ann.push_back({o.image_id, o.truth});
  const auto dets = perturb_detections(ann, 0.05, seed, cfg.width_px, cfg.height_px);
  std::vector<Observation> out;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto pairs = match_detections({dets[i]}, {truth[i].truth});
    if (pairs.empty()) continue;
    Observation o = truth[i];
    o.cls = pairs[0].detection.cls;
    o.box = pairs[0].detection.box;
    out.push_back(std::move(o));
  }
  *dropped = truth.size() - out.size();
  return out;
}

Verdict adaptation() {
  std::string detail;
  std::size_t wins = 0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const World w(false, seed);
    Network<float> base = train(Network<float>(build_distmlp(), derive_seed(seed, "init-distmlp")),
                                make_distance_dataset(w.train, estimate_orientations(w.train, nullptr)),
                                dist_config(derive_seed(seed, "train-distmlp")))
                              .best_net;
    std::size_t drop_train = 0, drop_test = 0;
    const auto matched_train = jittered_matches(w.cfg, w.train, derive_seed(seed, "det-train"), &drop_train);
    const auto matched_test = jittered_matches(w.cfg, w.test, derive_seed(seed, "det-test"), &drop_test);
    TrainConfig tc = dist_config(derive_seed(seed, "adapt-distmlp"));
    tc.epochs = kAdaptEpochs;
    const Network<float> adapted = adapt(base, build_adaptation_dataset(matched_train, nullptr).distance, tc).best_net;
    const double before = distance_errors(matched_test, {DistanceModel::decade, nullptr, &base, {}}).second;
    const double after = distance_errors(matched_test, {DistanceModel::decade, nullptr, &adapted, {}}).second;
    wins += after < before;
    detail += fmt("%sseed %llu: %.2f%% -> %.2f%% (%zu/%zu test matched)", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), before * 100, after * 100, matched_test.size(), w.test.size());
  }
  return {wins == 3, fmt("adapted MRE lower on %zu/3 seeds: ", wins) + detail};
}

Verdict checkpoint_round_trip() {
  Stopwatch t;
  const fs::path dir = fs::temp_directory_path() / "decade_acceptance_ckpt";
  fs::create_directories(dir);
  bool identical = true;
  std::size_t compared = 0;
  const std::vector<const Network<float>*> trained = {&pose_model().net, &distance_models().decade,
                                                       &distance_models().disnet};
  Rng rng(derive_seed(kSeed, "ckpt-inputs"));
  for (const Network<float>* net : trained) {
    const auto path = dir / (net->name() + ".ckpt");
    save_checkpoint(*net, path, {kSeed, 1});
    const Checkpoint back = load_checkpoint(path, net->def());
    Shape shape{100};
    shape.insert(shape.end(), net->def().input_shape.begin(), net->def().input_shape.end());
    Tensor<float> x(shape);
    for (float& v : x.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
    const auto a = net->infer(x), b = back.network.infer(x);
    identical = identical && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
    compared += a.size();
  }
  fs::remove_all(dir);
  const double secs = t.seconds();
  return {identical && secs < 5.0, fmt("%zu outputs of 3 trained networks on 100 inputs each %s; %.2f s", compared,
                                       identical ? "bit-identical" : "DIFFER", secs)};
}

Verdict pipeline_degeneracy() {
  const fs::path dir = fs::temp_directory_path() / "decade_acceptance_pipeline";
  fs::remove_all(dir);
  SynthConfig cfg;
  const auto samples = generate_samples(cfg, derive_seed(kSeed, "degeneracy"), 200, false);
  write_synth_dataset(dir, cfg, samples, kSeed, {true, false, 0.5});
  const DataLayout layout{dir / "labels", dir / "images", DistanceMode::z_axis};
  const auto ids = load_split(dir / "test.txt");
  std::vector<DetectionRecord> exact;
  for (const auto& s : samples) exact.push_back({s.image_id, s.label.cls, 1.0, s.label.box});
  const auto gt = observe_ground_truth(layout, ids);
  const auto e2e = observe_matched(layout, ids, exact);
  const Estimator decade{DistanceModel::decade, &pose_model().net, &distance_models().decade, {}};
  const Estimator disnet{DistanceModel::disnet, nullptr, &distance_models().disnet, {}};
  const EvalReport g1 = evaluate(gt, decade), e1 = evaluate(e2e, decade);
  const EvalReport g2 = evaluate(gt, disnet), e2 = evaluate(e2e, disnet);
  fs::remove_all(dir);
  const bool same = g1 == e1 && g2 == e2 && report_to_csv(g1) == report_to_csv(e1);
  return {same && gt.size() == ids.size(),
          fmt("%zu test objects: end-to-end report %s ground-truth report (DECADE MAE %.3f m, pose MAE %.2f deg; DisNet "
              "MAE %.3f m)",
              gt.size(), same ? "equals" : "DIFFERS from", *g1.overall.mae_m, *g1.pose_mae_deg, *g2.overall.mae_m)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient integrity", gradient_integrity},
      {"optimizer", optimizer},
      {"metric oracles", metric_oracles},
      {"IoU", iou_properties},
      {"orientation fold", orientation_fold},
      {"architecture budgets", architecture_budgets},
      {"synthetic distance learnability", distance_learnability},
      {"synthetic pose learnability", pose_learnability},
      {"baseline ordering", baseline_ordering},
      {"adaptation improvement", adaptation},
      {"checkpoint round trip", checkpoint_round_trip},
      {"pipeline degeneracy", pipeline_degeneracy},
  };
  std::set<std::size_t> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoul(argv[i]));

  std::size_t failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!wanted.empty() && !wanted.count(i + 1)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %2zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("SKIP 13 KITTI reproduction: optional, needs the KITTI dataset (recipe in README.md)\n");
  return failed == 0 ? 0 : 1;
}
