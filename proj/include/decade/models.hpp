#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "decade/network.hpp"

namespace decade {

inline constexpr std::size_t kCropSize = 32;
inline constexpr std::size_t kCropChannels = 3;
inline constexpr std::size_t kDecadeFeatureWidth = 14;
inline constexpr std::size_t kDisnetFeatureWidth = 6;

inline const std::string kPoseCnnName = "posecnn";
inline const std::string kDistMlpName = "distmlp";
inline const std::string kDisnetName = "disnet";

// 3x32x32 crop -> normalized effective orientation (degrees / 90).
inline NetworkDef build_posecnn() {
  NetworkDef def{kPoseCnnName, {kCropChannels, kCropSize, kCropSize}, {}};
  def.layers = {
      LayerSpec::conv2d(3, 16, 3, 1, 1),  LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
      LayerSpec::conv2d(16, 32, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
      LayerSpec::conv2d(32, 64, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
      LayerSpec::flatten(),
      LayerSpec::dense(1024, 77),         LayerSpec::relu(),
      LayerSpec::dense(77, 1),
  };
  infer_shapes(def);
  return def;
}

// Three hidden layers of 100 units with ReLU, one linear output neuron.
inline NetworkDef build_mlp(std::string name, std::size_t input_width) {
  NetworkDef def{std::move(name), {input_width}, {}};
  def.layers = {
      LayerSpec::dense(input_width, 100), LayerSpec::relu(),
      LayerSpec::dense(100, 100),         LayerSpec::relu(),
      LayerSpec::dense(100, 100),         LayerSpec::relu(),
      LayerSpec::dense(100, 1),
  };
  infer_shapes(def);
  return def;
}

// decade_v1 features -> distance in meters.
inline NetworkDef build_distmlp() { return build_mlp(kDistMlpName, kDecadeFeatureWidth); }

// disnet_v1 features -> distance in meters.
inline NetworkDef build_disnet() { return build_mlp(kDisnetName, kDisnetFeatureWidth); }

inline std::size_t count_params(const NetworkDef& def) {
  std::size_t n = 0;
  for (const auto& layer : def.layers) n += layer.parameter_count();
  return n;
}

// Multiply-accumulates (1 MAC = 1 FLOP) of dense and conv layers only.
inline std::uint64_t count_flops(const NetworkDef& def, std::size_t batch = 1) {
  const auto shapes = infer_shapes(def);
  std::uint64_t macs = 0;
  for (std::size_t i = 0; i < def.layers.size(); ++i) {
    const LayerSpec& l = def.layers[i];
    if (l.kind == LayerKind::dense) {
      macs += static_cast<std::uint64_t>(l.in) * l.out;
    } else if (l.kind == LayerKind::conv2d) {
      macs += static_cast<std::uint64_t>(l.kernel) * l.kernel * l.in * l.out * shapes[i][1] * shapes[i][2];
    }
  }
  return macs * batch;
}

inline NetworkDef build_by_name(const std::string& name) {
  if (name == kPoseCnnName) return build_posecnn();
  if (name == kDistMlpName) return build_distmlp();
  if (name == kDisnetName) return build_disnet();
  throw ConfigError("unknown network '" + name + "' (expected posecnn, distmlp or disnet)");
}

}  // namespace decade
