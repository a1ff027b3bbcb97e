#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "decade/errors.hpp"
#include "decade/network.hpp"

// Binary checkpoint layout (all integers unsigned 32-bit little-endian):
//
//   "DCDE" | version | name length | name bytes | layer count
//   per layer: kind byte | kind-specific dims | float32 LE weights, biases
//     dense:     in, out
//     conv2d:    in, out, kernel, stride, padding
//     maxpool2d: window, stride
//     relu, flatten: no dims, no parameters
//   metadata length | metadata text ("key=value" lines: seed, epochs, input_shape)
namespace decade {

inline constexpr std::array<char, 4> kCheckpointMagic = {'D', 'C', 'D', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint64_t epochs = 0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  Network<float> network;
  CheckpointMeta meta;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  void set_context(std::string context) { context_ = std::move(context); }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointTruncatedError("checkpoint truncated while reading " + context_ + " (need " +
                                     std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                                     " left)");
    }
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string context_ = "header";
};

inline std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > UINT32_MAX) throw ConfigError(std::string("checkpoint: ") + what + " exceeds 32 bits");
  return static_cast<std::uint32_t>(v);
}

inline std::string format_meta(const CheckpointMeta& meta, const Shape& input_shape) {
  std::ostringstream os;
  os << "seed=" << meta.seed << "\nepochs=" << meta.epochs << "\ninput_shape=";
  for (std::size_t i = 0; i < input_shape.size(); ++i) os << (i ? "," : "") << input_shape[i];
  os << "\n";
  return os.str();
}

inline std::map<std::string, std::string> parse_meta(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("checkpoint metadata line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

inline std::uint64_t meta_u64(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw CheckpointError("checkpoint metadata lacks '" + key + "'");
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint metadata '" + key + "' is not an integer: " + it->second);
  }
}

}  // namespace detail

inline std::vector<char> serialize_checkpoint(const Network<float>& net, const CheckpointMeta& meta) {
  detail::ByteWriter w;
  for (char c : kCheckpointMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kCheckpointVersion);
  w.u32(detail::narrow(net.name().size(), "name length"));
  w.raw(net.name());
  const auto& layers = net.def().layers;
  w.u32(detail::narrow(layers.size(), "layer count"));
  auto params = net.parameters();
  std::size_t p = 0;
  for (const LayerSpec& l : layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    switch (l.kind) {
      case LayerKind::dense:
        w.u32(detail::narrow(l.in, "dim"));
        w.u32(detail::narrow(l.out, "dim"));
        break;
      case LayerKind::conv2d:
        for (std::size_t d : {l.in, l.out, l.kernel, l.stride, l.padding}) w.u32(detail::narrow(d, "dim"));
        break;
      case LayerKind::maxpool2d:
        w.u32(detail::narrow(l.kernel, "dim"));
        w.u32(detail::narrow(l.stride, "dim"));
        break;
      case LayerKind::relu:
      case LayerKind::flatten:
        break;
    }
    if (l.has_parameters()) {
      for (int k = 0; k < 2; ++k, ++p) {
        for (float v : params[p]->values()) w.f32(v);
      }
    }
  }
  const std::string text = detail::format_meta(meta, net.def().input_shape);
  w.u32(detail::narrow(text.size(), "metadata length"));
  w.raw(text);
  return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::vector<char> bytes) {
  detail::ByteReader r(std::move(bytes));
  r.set_context("magic");
  const std::string magic = r.raw(4);
  if (std::memcmp(magic.data(), kCheckpointMagic.data(), 4) != 0) {
    throw CheckpointVersionError("not a checkpoint: bad magic bytes");
  }
  r.set_context("version");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  r.set_context("name");
  const std::string name = r.raw(r.u32());
  r.set_context("layer count");
  const std::uint32_t layer_count = r.u32();

  NetworkDef def{name, {}, {}};
  std::vector<std::vector<float>> buffers;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    r.set_context("layer " + std::to_string(i));
    const std::uint8_t tag = r.u8();
    LayerSpec l;
    switch (tag) {
      case static_cast<std::uint8_t>(LayerKind::dense): {
        const std::uint32_t in = r.u32(), out = r.u32();
        l = LayerSpec::dense(in, out);
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::conv2d): {
        const std::uint32_t in = r.u32(), out = r.u32(), k = r.u32(), s = r.u32(), pad = r.u32();
        l = LayerSpec::conv2d(in, out, k, s, pad);
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::maxpool2d): {
        const std::uint32_t window = r.u32(), stride = r.u32();
        l = LayerSpec::maxpool2d(window, stride);
        break;
      }
      case static_cast<std::uint8_t>(LayerKind::relu): l = LayerSpec::relu(); break;
      case static_cast<std::uint8_t>(LayerKind::flatten): l = LayerSpec::flatten(); break;
      default:
        throw CheckpointError("layer " + std::to_string(i) + " has unknown kind tag " + std::to_string(tag));
    }
    r.set_context("layer " + std::to_string(i) + " (" + to_string(l.kind) + ") parameters");
    if (l.has_parameters()) {
      for (const Shape& s : {l.weight_shape(), l.bias_shape()}) {
        const std::size_t n = shape_size(s);
        if (n > r.remaining() / 4) {
          throw CheckpointTruncatedError("checkpoint truncated in layer " + std::to_string(i) + " (" +
                                         to_string(l.kind) + "): needs " + std::to_string(n) + " floats");
        }
        std::vector<float> buf(n);
        for (float& v : buf) v = r.f32();
        buffers.push_back(std::move(buf));
      }
    }
    def.layers.push_back(l);
  }
  r.set_context("metadata");
  const std::string text = r.raw(r.u32());
  if (r.remaining() != 0) {
    throw CheckpointError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  const auto kv = detail::parse_meta(text);
  Checkpoint ckpt;
  ckpt.meta.seed = detail::meta_u64(kv, "seed");
  ckpt.meta.epochs = detail::meta_u64(kv, "epochs");
  const auto shape_it = kv.find("input_shape");
  if (shape_it == kv.end()) throw CheckpointError("checkpoint metadata lacks 'input_shape'");
  std::istringstream dims(shape_it->second);
  for (std::string d; std::getline(dims, d, ',');) def.input_shape.push_back(std::stoull(d));

  try {
    ckpt.network = Network<float>(def);
  } catch (const Error& e) {
    throw CheckpointShapeError(std::string("checkpoint layers do not conform: ") + e.what());
  }
  auto params = ckpt.network.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    *params[k] = Tensor<float>(params[k]->shape(), std::move(buffers[k]));
  }
  return ckpt;
}

inline void save_checkpoint(const Network<float>& net, const std::filesystem::path& path,
                            const CheckpointMeta& meta = {}) {
  const auto bytes = serialize_checkpoint(net, meta);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(std::move(bytes));
}

// Loads and checks that the stored topology equals `expected`.
inline Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkDef& expected) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!(ckpt.network.def() == expected)) {
    throw CheckpointShapeError("checkpoint " + path.string() + " holds network '" + ckpt.network.name() +
                               "' whose layers differ from the expected '" + expected.name + "'");
  }
  return ckpt;
}

}  // namespace decade
