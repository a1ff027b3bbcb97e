#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "decade/errors.hpp"
#include "decade/layers.hpp"
#include "decade/random.hpp"
#include "decade/tensor.hpp"

namespace decade {

enum class LayerKind : std::uint8_t { dense = 0, conv2d = 1, maxpool2d = 2, relu = 3, flatten = 4 };

inline const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "unknown";
}

// One layer of a fixed-topology network.
//   dense:     in -> out features
//   conv2d:    in -> out channels, square kernel, stride, zero padding
//   maxpool2d: kernel is the square window, stride the step
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 0;
  std::size_t padding = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, in, out, 0, 0, 0}; }
  static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                          std::size_t stride = 1, std::size_t padding = 0) {
    return {LayerKind::conv2d, in_channels, out_channels, kernel, stride, padding};
  }
  static LayerSpec maxpool2d(std::size_t window, std::size_t stride) {
    return {LayerKind::maxpool2d, 0, 0, window, stride, 0};
  }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 0, 0}; }
  static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 0, 0, 0}; }

  bool has_parameters() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

  Shape weight_shape() const {
    if (kind == LayerKind::dense) return {in, out};
    if (kind == LayerKind::conv2d) return {out, in, kernel, kernel};
    return {};
  }
  Shape bias_shape() const { return has_parameters() ? Shape{out} : Shape{}; }

  std::size_t parameter_count() const {
    return has_parameters() ? shape_size(weight_shape()) + out : 0;
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

inline void validate(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::dense:
      if (spec.in == 0 || spec.out == 0) throw ConfigError("dense layer widths must be positive");
      break;
    case LayerKind::conv2d:
      if (spec.in == 0 || spec.out == 0 || spec.kernel == 0 || spec.stride == 0) {
        throw ConfigError("conv2d channels, kernel and stride must be positive");
      }
      break;
    case LayerKind::maxpool2d:
      if (spec.kernel == 0 || spec.stride == 0) throw ConfigError("maxpool2d window and stride must be positive");
      break;
    case LayerKind::relu:
    case LayerKind::flatten:
      break;
  }
}

// Per-sample output shape of one layer given its per-sample input shape.
inline Shape layer_output_shape(const LayerSpec& spec, const Shape& in, std::size_t index) {
  validate(spec);
  const std::string where = "layer " + std::to_string(index) + " (" + to_string(spec.kind) + ")";
  switch (spec.kind) {
    case LayerKind::dense:
      if (in.size() != 1 || in[0] != spec.in) {
        throw DimensionError(where + " expects [" + std::to_string(spec.in) + "], got " + shape_string(in));
      }
      return {spec.out};
    case LayerKind::conv2d: {
      if (in.size() != 3 || in[0] != spec.in) {
        throw DimensionError(where + " expects " + std::to_string(spec.in) + " input channels, got " +
                             shape_string(in));
      }
      const auto g = ops::conv_geometry(in[0], in[1], in[2], spec.kernel, spec.stride, spec.padding);
      return {spec.out, g.out_height, g.out_width};
    }
    case LayerKind::maxpool2d: {
      if (in.size() != 3) throw DimensionError(where + " expects a CxHxW input, got " + shape_string(in));
      const auto g = ops::pool_geometry({1, in[0], in[1], in[2]}, spec.kernel, spec.stride);
      return {in[0], g.out_height, g.out_width};
    }
    case LayerKind::relu: return in;
    case LayerKind::flatten: return {shape_size(in)};
  }
  return in;
}

struct NetworkDef {
  std::string name;
  Shape input_shape;  // per sample, without the batch axis
  std::vector<LayerSpec> layers;

  friend bool operator==(const NetworkDef&, const NetworkDef&) = default;
};

// Output shape after every layer; throws if adjacent layers do not conform.
inline std::vector<Shape> infer_shapes(const NetworkDef& def) {
  if (def.input_shape.empty()) throw ConfigError("network '" + def.name + "' has no input shape");
  std::vector<Shape> shapes;
  Shape current = def.input_shape;
  for (std::size_t i = 0; i < def.layers.size(); ++i) {
    current = layer_output_shape(def.layers[i], current, i);
    shapes.push_back(current);
  }
  return shapes;
}

inline Shape output_shape(const NetworkDef& def) {
  auto shapes = infer_shapes(def);
  return shapes.empty() ? def.input_shape : shapes.back();
}

// Weights plus the activation caches needed for one backward pass.
template <typename T>
class Network {
 public:
  Network() = default;

  // Zero-initialized parameters.
  explicit Network(NetworkDef def) : def_(std::move(def)) {
    infer_shapes(def_);
    for (const auto& spec : def_.layers) {
      Layer layer;
      layer.spec = spec;
      if (spec.has_parameters()) {
        layer.weights = Tensor<T>(spec.weight_shape());
        layer.bias = Tensor<T>(spec.bias_shape());
      }
      layers_.push_back(std::move(layer));
    }
  }

  // Uniform +-sqrt(6 / (fan_in + fan_out)) weights, zero biases.
  Network(NetworkDef def, std::uint64_t seed) : Network(std::move(def)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Layer& layer = layers_[i];
      if (!layer.spec.has_parameters()) continue;
      const std::size_t area = layer.spec.kind == LayerKind::conv2d ? layer.spec.kernel * layer.spec.kernel : 1;
      const double limit = std::sqrt(6.0 / static_cast<double>((layer.spec.in + layer.spec.out) * area));
      Rng rng(derive_seed(seed, i));
      for (T& w : layer.weights.values()) w = static_cast<T>(rng.uniform(-limit, limit));
    }
  }

  const NetworkDef& def() const { return def_; }
  const std::string& name() const { return def_.name; }

  // Training forward pass; keeps what backward() needs.
  Tensor<T> forward(const Tensor<T>& batch) {
    check_input(batch);
    Tensor<T> x = batch;
    for (Layer& layer : layers_) {
      Tensor<T> y = apply(layer, x, &layer.argmax);
      layer.input = std::move(x);
      layer.output_shape = y.shape();
      x = std::move(y);
    }
    has_cache_ = true;
    return x;
  }

  // Cache-free forward pass; safe to call concurrently on one network.
  Tensor<T> infer(const Tensor<T>& batch) const {
    check_input(batch);
    Tensor<T> x = batch;
    for (const Layer& layer : layers_) x = apply(layer, x, nullptr);
    return x;
  }

  // Which ReLU units are active and which pool cells win, in layer order.
  // Two inputs with equal patterns lie in the same linear region.
  std::vector<std::size_t> activation_pattern(const Tensor<T>& batch) const {
    check_input(batch);
    std::vector<std::size_t> pattern;
    Tensor<T> x = batch;
    for (const Layer& layer : layers_) {
      std::vector<std::size_t> argmax;
      Tensor<T> y = apply(layer, x, &argmax);
      if (layer.spec.kind == LayerKind::relu) {
        for (const T& v : x.values()) pattern.push_back(v > T{0} ? 1 : 0);
      } else if (layer.spec.kind == LayerKind::maxpool2d) {
        pattern.insert(pattern.end(), argmax.begin(), argmax.end());
      }
      x = std::move(y);
    }
    return pattern;
  }

  // Overwrites every parameter gradient with d(loss)/d(param) for the most
  // recent forward() and returns d(loss)/d(input).
  Tensor<T> backward(const Tensor<T>& grad_output) {
    if (!has_cache_) throw StateError("backward called before forward on network '" + def_.name + "'");
    Tensor<T> g = grad_output;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      Layer& layer = layers_[i];
      switch (layer.spec.kind) {
        case LayerKind::dense:
          g = ops::dense_backward(layer.input, layer.weights, layer.bias, g.reshaped(layer.output_shape));
          break;
        case LayerKind::conv2d:
          g = ops::conv2d_backward(layer.input, layer.weights, layer.bias, g.reshaped(layer.output_shape),
                                   layer.spec.stride, layer.spec.padding);
          break;
        case LayerKind::maxpool2d:
          g = ops::maxpool_backward(layer.input.shape(), layer.argmax, g);
          break;
        case LayerKind::relu:
          g = ops::relu_backward(layer.input, g);
          break;
        case LayerKind::flatten:
          g = g.reshaped(layer.input.shape());
          break;
      }
    }
    has_cache_ = false;
    return g;
  }

  // Weight then bias tensor of every parameterized layer, in layer order.
  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (Layer& layer : layers_) {
      if (!layer.spec.has_parameters()) continue;
      out.push_back(&layer.weights);
      out.push_back(&layer.bias);
    }
    return out;
  }

  std::vector<const Tensor<T>*> parameters() const {
    std::vector<const Tensor<T>*> out;
    for (const Layer& layer : layers_) {
      if (!layer.spec.has_parameters()) continue;
      out.push_back(&layer.weights);
      out.push_back(&layer.bias);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : parameters()) n += p->size();
    return n;
  }

  template <typename U>
  Network<U> cast() const {
    Network<U> out(def_);
    auto dst = out.parameters();
    auto src = parameters();
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
    return out;
  }

  // Parameters compared bit for bit.
  friend bool operator==(const Network& a, const Network& b) {
    if (!(a.def_ == b.def_)) return false;
    auto pa = a.parameters();
    auto pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      if (!(*pa[i] == *pb[i])) return false;
    }
    return true;
  }

 private:
  struct Layer {
    LayerSpec spec;
    Tensor<T> weights;
    Tensor<T> bias;
    Tensor<T> input;  // cached forward input
    Shape output_shape;
    std::vector<std::size_t> argmax;
  };

  void check_input(const Tensor<T>& batch) const {
    const Shape& s = batch.shape();
    bool ok = s.size() == def_.input_shape.size() + 1;
    for (std::size_t i = 0; ok && i < def_.input_shape.size(); ++i) ok = s[i + 1] == def_.input_shape[i];
    if (!ok) {
      throw DimensionError("network '" + def_.name + "' expects batch x " + shape_string(def_.input_shape) +
                           ", got " + shape_string(s));
    }
  }

  static Tensor<T> apply(const Layer& layer, const Tensor<T>& x, std::vector<std::size_t>* argmax) {
    Tensor<T> y;
    switch (layer.spec.kind) {
      case LayerKind::dense:
        y = ops::dense_forward(x, layer.weights, layer.bias);
        break;
      case LayerKind::conv2d:
        y = ops::conv2d_forward(x, layer.weights, layer.bias, layer.spec.stride, layer.spec.padding);
        break;
      case LayerKind::maxpool2d:
        y = ops::maxpool_forward(x, layer.spec.kernel, layer.spec.stride, argmax);
        break;
      case LayerKind::relu:
        y = ops::relu(x);
        break;
      case LayerKind::flatten:
        y = x.reshaped({x.dim(0), x.size() / x.dim(0)});
        break;
    }
    return y;
  }

  NetworkDef def_;
  std::vector<Layer> layers_;
  bool has_cache_ = false;
};

}  // namespace decade
