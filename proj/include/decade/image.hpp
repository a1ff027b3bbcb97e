#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "decade/errors.hpp"
#include "decade/kitti.hpp"
#include "decade/tensor.hpp"

// 8-bit RGB image files <-> float tensors of shape 3xHxW in [0,1],
// and the fixed-size detection crop fed to the pose network.
namespace decade {

inline constexpr std::size_t kCropExtent = 32;

namespace detail {

inline float byte_to_unit(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

inline std::uint8_t unit_to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

inline Tensor<float> from_interleaved(const std::vector<std::uint8_t>& rgb, std::size_t h, std::size_t w) {
  Tensor<float> img({3, h, w});
  float* out = img.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out[(c * h + y) * w + x] = byte_to_unit(rgb[(y * w + x) * 3 + c]);
    }
  }
  return img;
}

inline std::vector<std::uint8_t> to_interleaved(const Tensor<float>& img) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw DimensionError("image tensor must be 3xHxW, got " + shape_string(img.shape()));
  }
  const std::size_t h = img.dim(1), w = img.dim(2);
  std::vector<std::uint8_t> rgb(h * w * 3);
  const float* in = img.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) rgb[(y * w + x) * 3 + c] = unit_to_byte(in[(c * h + y) * w + x]);
    }
  }
  return rgb;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

inline std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

}  // namespace detail

inline Tensor<float> read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image " + path.string());
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_stdio(&image, fp.get())) {
    throw ParseError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw ParseError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return detail::from_interleaved(rgb, image.height, image.width);
}

inline void write_png(const std::filesystem::path& path, const Tensor<float>& img) {
  const auto rgb = detail::to_interleaved(img);
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.dim(2));
  image.height = static_cast<png_uint_32>(img.dim(1));
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

// Binary PPM (P6, maxval 255).
inline Tensor<float> read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  auto token = [&]() {
    std::string t;
    char c = 0;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(c);
    }
    return t;
  };
  if (token() != "P6") throw ParseError(path.string() + ": not a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw ParseError(path.string() + ": malformed PPM header");
  }
  if (w == 0 || h == 0 || maxval != 255) throw ParseError(path.string() + ": unsupported PPM geometry or maxval");
  std::vector<std::uint8_t> rgb(w * h * 3);
  in.read(reinterpret_cast<char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(rgb.size())) throw ParseError(path.string() + ": truncated PPM");
  return detail::from_interleaved(rgb, h, w);
}

inline void write_ppm(const std::filesystem::path& path, const Tensor<float>& img) {
  const auto rgb = detail::to_interleaved(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << img.dim(2) << ' ' << img.dim(1) << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

inline Tensor<float> read_image(const std::filesystem::path& path) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm") return read_ppm(path);
  throw ConfigError("unsupported image extension '" + ext + "' for " + path.string());
}

inline void write_image(const std::filesystem::path& path, const Tensor<float>& img) {
  const std::string ext = detail::lower_extension(path);
  if (ext == ".png") return write_png(path, img);
  if (ext == ".ppm") return write_ppm(path, img);
  throw ConfigError("unsupported image extension '" + ext + "' for " + path.string());
}

// Finds <dir>/<id>.png or <dir>/<id>.ppm.
inline std::filesystem::path find_image(const std::filesystem::path& dir, const std::string& image_id) {
  for (const char* ext : {".png", ".ppm", ".PNG"}) {
    auto p = dir / (image_id + ext);
    if (std::filesystem::exists(p)) return p;
  }
  throw IoError("no image for id '" + image_id + "' in " + dir.string());
}

inline ImageMeta image_meta(const std::string& image_id, const Tensor<float>& img) {
  return {image_id, static_cast<int>(img.dim(2)), static_cast<int>(img.dim(1))};
}

inline Box clamp_box(const Box& box, double width, double height) {
  return {std::clamp(box.left, 0.0, width), std::clamp(box.top, 0.0, height), std::clamp(box.right, 0.0, width),
          std::clamp(box.bottom, 0.0, height)};
}

// Clamps the box to the image and resamples it to 3x32x32. Pixel i covers
// [i, i+1) in image coordinates; sample centres follow the half-pixel
// convention and edge samples replicate the border.
inline Tensor<float> extract_crop(const Tensor<float>& img, const Box& box, std::size_t extent = kCropExtent) {
  if (img.rank() != 3 || img.dim(0) != 3) {
    throw DimensionError("image tensor must be 3xHxW, got " + shape_string(img.shape()));
  }
  const std::size_t H = img.dim(1), W = img.dim(2);
  const Box b = clamp_box(box, static_cast<double>(W), static_cast<double>(H));
  if (!(b.width() > 0.0) || !(b.height() > 0.0)) {
    throw DegenerateBoxError("box (" + detail::format_number(box.left) + "," + detail::format_number(box.top) + "," +
                             detail::format_number(box.right) + "," + detail::format_number(box.bottom) +
                             ") has zero area inside the " + std::to_string(W) + "x" + std::to_string(H) + " image");
  }
  const double sx = b.width() / static_cast<double>(extent);
  const double sy = b.height() / static_cast<double>(extent);

  struct Tap {
    std::size_t i0, i1;
    float f;
  };
  auto taps = [](double origin, double scale, std::size_t n, std::size_t limit) {
    std::vector<Tap> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      double src = origin + (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(limit - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(src));
      const std::size_t i1 = std::min(i0 + 1, limit - 1);
      out[i] = {i0, i1, static_cast<float>(src - static_cast<double>(i0))};
    }
    return out;
  };
  const auto tx = taps(b.left, sx, extent, W);
  const auto ty = taps(b.top, sy, extent, H);

  Tensor<float> crop({3, extent, extent});
  const float* in = img.data();
  float* out = crop.data();
  for (std::size_t c = 0; c < 3; ++c) {
    const float* plane = in + c * H * W;
    for (std::size_t y = 0; y < extent; ++y) {
      const float* r0 = plane + ty[y].i0 * W;
      const float* r1 = plane + ty[y].i1 * W;
      const float fy = ty[y].f;
      for (std::size_t x = 0; x < extent; ++x) {
        const float fx = tx[x].f;
        const float top = r0[tx[x].i0] + fx * (r0[tx[x].i1] - r0[tx[x].i0]);
        const float bot = r1[tx[x].i0] + fx * (r1[tx[x].i1] - r1[tx[x].i0]);
        out[(c * extent + y) * extent + x] = std::clamp(top + fy * (bot - top), 0.0f, 1.0f);
      }
    }
  }
  return crop;
}

}  // namespace decade
