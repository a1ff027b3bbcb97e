#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "decade/errors.hpp"
#include "decade/tensor.hpp"

namespace decade {

template <typename T>
struct LossResult {
  T loss{};
  Tensor<T> grad;  // d(loss)/d(pred), same shape as pred
};

// Mean squared error over all elements.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.size() != target.size()) {
    throw DimensionError("mse_loss: pred has " + std::to_string(pred.size()) + " elements, target has " +
                         std::to_string(target.size()));
  }
  if (pred.empty()) throw DimensionError("mse_loss: empty input");
  const std::size_t n = pred.size();
  LossResult<T> out{T{0}, Tensor<T>(pred.shape())};
  T sum{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T diff = pred[i] - target[i];
    sum += diff * diff;
    out.grad[i] = T{2} * diff / static_cast<T>(n);
  }
  out.loss = sum / static_cast<T>(n);
  return out;
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::uint64_t step_count = 0;
  std::vector<AlignedVector<T>> first_moment;
  std::vector<AlignedVector<T>> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
AdamState<T> make_adam_state(std::span<Tensor<T>* const> params, const AdamOptions& options = {}) {
  if (!(options.beta1 > 0.0 && options.beta1 < 1.0) || !(options.beta2 > 0.0 && options.beta2 < 1.0) ||
      !(options.epsilon > 0.0)) {
    throw ConfigError("adam: require 0 < beta1, beta2 < 1 and epsilon > 0");
  }
  AdamState<T> state;
  state.beta1 = options.beta1;
  state.beta2 = options.beta2;
  state.epsilon = options.epsilon;
  for (const Tensor<T>* p : params) {
    state.first_moment.emplace_back(p->size(), T{0});
    state.second_moment.emplace_back(p->size(), T{0});
  }
  return state;
}

// One bias-corrected Adam update using each parameter's grad buffer.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params, AdamState<T>& state, double learning_rate) {
  if (!(learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (params.size() != state.first_moment.size()) {
    throw DimensionError("adam: state tracks " + std::to_string(state.first_moment.size()) +
                         " tensors, got " + std::to_string(params.size()));
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(state.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(state.beta2, t));
  const T lr = static_cast<T>(learning_rate);
  const T eps = static_cast<T>(state.epsilon);

  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (m.size() != p.size() || v.size() != p.size()) {
      throw DimensionError("adam: moment buffer " + std::to_string(k) + " does not match its parameter");
    }
    if (!p.has_grad()) throw StateError("adam: parameter " + std::to_string(k) + " has no gradient");
    auto values = p.values();
    auto grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grad[i];
      m[i] = b1 * m[i] + (T{1} - b1) * g;
      v[i] = b2 * v[i] + (T{1} - b2) * g * g;
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace decade
