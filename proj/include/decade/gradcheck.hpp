#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "decade/errors.hpp"
#include "decade/models.hpp"
#include "decade/network.hpp"
#include "decade/optim.hpp"
#include "decade/random.hpp"

namespace decade {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;   // index into Network::parameters()
  std::size_t worst_element = 0;
  std::size_t checked = 0;
  std::size_t kinks_skipped = 0;  // elements whose +-epsilon probe crossed a ReLU/pool kink
};

// Compares backward() against central differences of the MSE loss for every
// parameter element, in 64-bit precision. `tamper` runs after backward and
// lets tests corrupt the analytic gradients. A probe that changes the ReLU
// mask or a pool winner straddles a kink where the loss has no derivative;
// such elements are counted in kinks_skipped and left out of the maximum.
inline GradCheckResult gradient_check(Network<double>& net, const Tensor<double>& input,
                                      const Tensor<double>& target, double epsilon = 1e-5,
                                      const std::function<void(Network<double>&)>& tamper = {}) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ConfigError("gradient_check: epsilon must lie in [1e-6, 1e-3]");
  }
  auto loss_of = [&]() { return mse_loss(net.infer(input), target).loss; };

  const auto pred = net.forward(input);
  net.backward(mse_loss(pred, target).grad);
  if (tamper) tamper(net);

  const auto base_pattern = net.activation_pattern(input);
  GradCheckResult result;
  auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& p = *params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + epsilon;
      const double plus = loss_of();
      bool kink = net.activation_pattern(input) != base_pattern;
      p[i] = saved - epsilon;
      const double minus = loss_of();
      kink = kink || net.activation_pattern(input) != base_pattern;
      p[i] = saved;
      if (kink) {
        ++result.kinks_skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double analytic = p.grad()[i];
      const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      const double rel = std::abs(analytic - numeric) / scale;
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_tensor = k;
        result.worst_element = i;
      }
    }
  }
  return result;
}

// PoseCNN and DistMLP topologies at widths small enough to probe every
// parameter by finite differences.
inline NetworkDef reduced_posecnn() {
  NetworkDef def{"posecnn_reduced", {3, 8, 8}, {}};
  def.layers = {
      LayerSpec::conv2d(3, 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
      LayerSpec::conv2d(4, 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
      LayerSpec::conv2d(4, 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
      LayerSpec::flatten(),
      LayerSpec::dense(4, 6),           LayerSpec::relu(),
      LayerSpec::dense(6, 1),
  };
  infer_shapes(def);
  return def;
}

inline NetworkDef reduced_distmlp() {
  NetworkDef def{"distmlp_reduced", {kDecadeFeatureWidth}, {}};
  def.layers = {
      LayerSpec::dense(kDecadeFeatureWidth, 8), LayerSpec::relu(),
      LayerSpec::dense(8, 8),                   LayerSpec::relu(),
      LayerSpec::dense(8, 8),                   LayerSpec::relu(),
      LayerSpec::dense(8, 1),
  };
  infer_shapes(def);
  return def;
}

// One small network per layer kind (each parameter-free kind wrapped between
// trainable layers), then the two reduced stacks.
inline std::vector<NetworkDef> gradcheck_suite() {
  std::vector<NetworkDef> defs = {
      {"dense", {5}, {LayerSpec::dense(5, 3)}},
      {"conv2d", {2, 5, 5}, {LayerSpec::conv2d(2, 3, 3, 1, 1)}},
      {"relu", {5}, {LayerSpec::dense(5, 4), LayerSpec::relu(), LayerSpec::dense(4, 2)}},
      {"maxpool2d", {2, 6, 6}, {LayerSpec::conv2d(2, 2, 3, 1, 1), LayerSpec::maxpool2d(2, 2)}},
      {"flatten", {2, 4, 4}, {LayerSpec::conv2d(2, 2, 3, 1, 1), LayerSpec::flatten(), LayerSpec::dense(32, 2)}},
      reduced_posecnn(),
      reduced_distmlp(),
  };
  for (const auto& d : defs) infer_shapes(d);
  return defs;
}

// Every parameter (biases included) drawn from U(-half_range, half_range):
// the zero-bias default init leaves exact ties at ReLU and pool kinks.
inline void randomize_parameters(Network<double>& net, Rng& rng, double half_range = 0.5) {
  for (auto* p : net.parameters()) {
    for (double& v : p->values()) v = rng.uniform(-half_range, half_range);
  }
}

// Gradient check of `def` at a random parameter point, input and target.
inline GradCheckResult gradient_check_random(const NetworkDef& def, std::uint64_t seed, std::size_t batch = 3,
                                             double epsilon = 1e-5) {
  Rng rng(derive_seed(seed, "gradcheck-" + def.name));
  Network<double> net(def);
  randomize_parameters(net, rng);
  Shape in_shape{batch};
  in_shape.insert(in_shape.end(), def.input_shape.begin(), def.input_shape.end());
  Tensor<double> input(in_shape);
  for (double& v : input.values()) v = rng.uniform(-1.0, 1.0);
  Shape out_shape = output_shape(def);
  out_shape.insert(out_shape.begin(), batch);
  Tensor<double> target(out_shape);
  for (double& v : target.values()) v = rng.uniform(-1.0, 1.0);
  return gradient_check(net, input, target, epsilon);
}

}  // namespace decade
