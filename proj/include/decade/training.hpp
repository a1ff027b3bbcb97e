#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "decade/errors.hpp"
#include "decade/kitti.hpp"
#include "decade/network.hpp"
#include "decade/optim.hpp"
#include "decade/random.hpp"
#include "decade/tensor.hpp"

namespace decade {

// Flat supervised dataset: n samples of `sample_shape`, one scalar target each.
struct Dataset {
  Shape sample_shape;
  std::vector<float> inputs;
  std::vector<float> targets;

  std::size_t sample_size() const { return shape_size(sample_shape); }
  std::size_t size() const { return targets.size(); }
  bool empty() const { return targets.empty(); }

  void add(std::span<const float> x, float y) {
    if (x.size() != sample_size()) {
      throw DimensionError("dataset sample has " + std::to_string(x.size()) + " values, expected " +
                           std::to_string(sample_size()));
    }
    inputs.insert(inputs.end(), x.begin(), x.end());
    targets.push_back(y);
  }

  Dataset subset(const std::vector<std::size_t>& idx) const {
    Dataset d{sample_shape, {}, {}};
    d.inputs.reserve(idx.size() * sample_size());
    d.targets.reserve(idx.size());
    for (std::size_t i : idx) {
      d.inputs.insert(d.inputs.end(), inputs.begin() + i * sample_size(), inputs.begin() + (i + 1) * sample_size());
      d.targets.push_back(targets[i]);
    }
    return d;
  }

  Tensor<float> batch_inputs(std::span<const std::size_t> idx) const {
    Shape s{idx.size()};
    s.insert(s.end(), sample_shape.begin(), sample_shape.end());
    Tensor<float> t(s);
    const std::size_t k = sample_size();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::copy_n(inputs.begin() + idx[b] * k, k, t.data() + b * k);
    }
    return t;
  }

  Tensor<float> batch_targets(std::span<const std::size_t> idx) const {
    Tensor<float> t({idx.size(), 1});
    for (std::size_t b = 0; b < idx.size(); ++b) t[b] = targets[idx[b]];
    return t;
  }
};

inline constexpr double kPoseLearningRate = 1e-3;
inline constexpr double kDistLearningRate = 1e-4;

struct TrainConfig {
  std::size_t epochs = 250;
  std::size_t batch_size = 64;
  double learning_rate = kDistLearningRate;
  std::uint64_t seed = 0;
  double holdout_fraction = 0.1;
  double metric_scale = 1.0;  // holdout MAE reported as |pred - target| * scale

  void validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
      throw ConfigError("train: holdout_fraction must be in [0, 1)");
    }
  }
};

inline constexpr std::size_t kAdaptEpochs = 100;

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> holdout_mae;  // NaN when there is no held-out data

  std::size_t size() const { return train_loss.size(); }
};

struct TrainResult {
  Network<float> final_net;
  Network<float> best_net;  // lowest held-out MAE; final_net when nothing is held out
  TrainHistory history;
  std::size_t best_epoch = 0;  // 1-based, 0 when no epoch ran
};

struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

// Seeded split: a permutation of [0, n), the first round(fraction*n) held out.
inline HoldoutSplit holdout_split(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "holdout"));
  rng.shuffle(idx);
  std::size_t k = static_cast<std::size_t>(std::llround(fraction * double(n)));
  if (fraction > 0.0 && k == 0 && n >= 2) k = 1;
  if (k >= n) k = n - 1;
  HoldoutSplit s;
  s.holdout.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  std::sort(s.holdout.begin(), s.holdout.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

// Order of the training indices in a given epoch; depends only on (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::vector<std::size_t> indices, std::uint64_t seed, std::size_t epoch) {
  Rng rng(derive_seed(derive_seed(seed, "shuffle"), epoch));
  rng.shuffle(indices);
  return indices;
}

inline std::vector<float> predict(const Network<float>& net, const Dataset& data, std::size_t batch_size = 256) {
  std::vector<float> out;
  out.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const Tensor<float> y = net.infer(data.batch_inputs(idx));
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

inline double dataset_mae(const Network<float>& net, const Dataset& data, double scale = 1.0) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto pred = predict(net, data);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(double(pred[i]) - double(data.targets[i])) * scale;
  return sum / double(pred.size());
}

namespace detail {

inline void check_dataset(const Network<float>& net, const Dataset& data) {
  if (data.empty()) throw ConfigError("train: dataset for '" + net.name() + "' is empty");
  if (data.sample_shape != net.def().input_shape) {
    throw ConfigError("train: dataset samples are " + shape_string(data.sample_shape) + " but network '" +
                      net.name() + "' expects " + shape_string(net.def().input_shape));
  }
  if (data.inputs.size() != data.size() * data.sample_size()) {
    throw ConfigError("train: dataset input buffer does not match its sample count");
  }
}

}  // namespace detail

using EpochCallback = std::function<void(std::size_t epoch, double train_loss, double holdout_mae)>;

// Mini-batch Adam on mean squared error. Single-threaded and deterministic
// given (net, data, config).
inline TrainResult train(const Network<float>& initial, const Dataset& data, const TrainConfig& config,
                         const EpochCallback& on_epoch = {}) {
  config.validate();
  detail::check_dataset(initial, data);
  const HoldoutSplit split = holdout_split(data.size(), config.holdout_fraction, config.seed);
  const Dataset holdout = data.subset(split.holdout);

  TrainResult result{initial, initial, {}, 0};
  Network<float>& net = result.final_net;
  auto params = net.parameters();
  AdamState<float> adam = make_adam_state<float>(params);
  double best = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> batch;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(split.train, config.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
      const Tensor<float> pred = net.forward(data.batch_inputs(batch));
      const auto loss = mse_loss(pred, data.batch_targets(batch));
      if (!std::isfinite(loss.loss)) {
        throw NumericError("train: non-finite loss in epoch " + std::to_string(epoch + 1) + " of '" + net.name() + "'");
      }
      net.backward(loss.grad);
      adam_step<float>(params, adam, config.learning_rate);
      loss_sum += double(loss.loss) * double(batch.size());
    }
    const double train_loss = loss_sum / double(order.size());
    const double metric = dataset_mae(net, holdout, config.metric_scale);
    result.history.train_loss.push_back(train_loss);
    result.history.holdout_mae.push_back(metric);
    if (holdout.empty() || metric < best) {
      best = metric;
      result.best_net = net;
      result.best_epoch = epoch + 1;
    }
    if (on_epoch) on_epoch(epoch + 1, train_loss, metric);
  }
  if (config.epochs == 0) result.best_net = net;
  return result;
}

// Fine-tunes a pretrained network on detector-matched data.
inline TrainResult adapt(const Network<float>& pretrained, const Dataset& data, TrainConfig config,
                         const EpochCallback& on_epoch = {}) {
  if (pretrained.def().layers.empty()) throw StateError("adapt: network is not initialized");
  return train(pretrained, data, config, on_epoch);
}

inline std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,holdout_mae\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    out += std::to_string(i + 1) + "," + detail::format_number(h.train_loss[i]) + "," +
           (std::isnan(h.holdout_mae[i]) ? std::string() : detail::format_number(h.holdout_mae[i])) + "\n";
  }
  return out;
}

inline void write_history(const std::filesystem::path& path, const TrainHistory& h) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << history_csv(h);
}

}  // namespace decade
