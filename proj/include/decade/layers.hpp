#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "decade/errors.hpp"
#include "decade/tensor.hpp"

// Forward and backward kernels for the five layer kinds. Image tensors are
// channels-first (batch x C x H x W), row-major. Convolution is
// cross-correlation with zero padding.
namespace decade::ops {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

inline void require_rank(const Shape& shape, std::size_t rank, const char* op, const char* what) {
  if (shape.size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                         ", got " + shape_string(shape));
  }
}

inline void require_axis(std::size_t got, std::size_t want, const char* op, const std::string& axis) {
  if (got != want) {
    throw DimensionError(std::string(op) + ": " + axis + " is " + std::to_string(got) + ", expected " +
                         std::to_string(want));
  }
}

// ---------------------------------------------------------------------------
// dense

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  require_rank(input.shape(), 2, "dense_forward", "input");
  require_rank(weights.shape(), 2, "dense_forward", "weights");
  require_rank(bias.shape(), 1, "dense_forward", "bias");
  const std::size_t batch = input.dim(0), in = weights.dim(0), out = weights.dim(1);
  require_axis(input.dim(1), in, "dense_forward", "input axis 1 (features)");
  require_axis(bias.dim(0), out, "dense_forward", "bias axis 0 (outputs)");

  Tensor<T> output({batch, out});
  ConstMatrixMap<T> x(input.data(), batch, in);
  ConstMatrixMap<T> w(weights.data(), in, out);
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.data(), out);
  MatrixMap<T> y(output.data(), batch, out);
  y.noalias() = x * w;
  y.rowwise() += b;
  return output;
}

// Writes parameter gradients into weights.grad()/bias.grad() (overwriting)
// and returns the gradient with respect to the input.
template <typename T>
Tensor<T> dense_backward(const Tensor<T>& input, Tensor<T>& weights, Tensor<T>& bias,
                         const Tensor<T>& grad_output) {
  const std::size_t batch = input.dim(0), in = weights.dim(0), out = weights.dim(1);
  require_axis(grad_output.dim(0), batch, "dense_backward", "grad axis 0 (batch)");
  require_axis(grad_output.dim(1), out, "dense_backward", "grad axis 1 (outputs)");
  if (!weights.has_grad()) weights.zero_grad();
  if (!bias.has_grad()) bias.zero_grad();

  ConstMatrixMap<T> x(input.data(), batch, in);
  ConstMatrixMap<T> w(weights.data(), in, out);
  ConstMatrixMap<T> dy(grad_output.data(), batch, out);
  MatrixMap<T> dw(weights.grad().data(), in, out);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias.grad().data(), out);
  dw.noalias() = x.transpose() * dy;
  db = dy.colwise().sum();

  Tensor<T> grad_input({batch, in});
  MatrixMap<T> dx(grad_input.data(), batch, in);
  dx.noalias() = dy * w.transpose();
  return grad_input;
}

// ---------------------------------------------------------------------------
// conv2d

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel, stride, padding;
  std::size_t out_height, out_width;

  std::size_t patch_size() const { return channels * kernel * kernel; }
  std::size_t out_area() const { return out_height * out_width; }
};

inline std::size_t conv_output_extent(std::size_t extent, std::size_t kernel, std::size_t stride,
                                      std::size_t padding, const char* axis) {
  if (kernel == 0 || stride == 0) throw ConfigError("conv2d: kernel and stride must be positive");
  const std::size_t padded = extent + 2 * padding;
  if (padded < kernel) {
    throw ConfigError(std::string("conv2d: kernel ") + std::to_string(kernel) + " exceeds padded " + axis +
                      " " + std::to_string(padded));
  }
  if ((padded - kernel) % stride != 0) {
    throw ConfigError(std::string("conv2d: non-integer output ") + axis + " for extent " +
                      std::to_string(extent) + ", kernel " + std::to_string(kernel) + ", stride " +
                      std::to_string(stride) + ", padding " + std::to_string(padding));
  }
  return (padded - kernel) / stride + 1;
}

inline ConvGeometry conv_geometry(std::size_t channels, std::size_t height, std::size_t width,
                                  std::size_t kernel, std::size_t stride, std::size_t padding) {
  return {channels, height, width, kernel, stride, padding,
          conv_output_extent(height, kernel, stride, padding, "height"),
          conv_output_extent(width, kernel, stride, padding, "width")};
}

// Unfolds one C x H x W image into a (C*k*k) x (H'*W') patch matrix.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* columns) {
  const std::size_t area = g.out_area();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = columns + ((c * g.kernel + ky) * g.kernel + kx) * area;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          T* dst = row + oy * g.out_width;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_width, T{0});
            continue;
          }
          const T* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) ? T{0}
                                                                             : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters patch-matrix gradients back onto the image.
template <typename T>
void col2im(const T* columns, const ConvGeometry& g, T* image) {
  const std::size_t area = g.out_area();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = columns + ((c * g.kernel + ky) * g.kernel + kx) * area;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const T* src = row + oy * g.out_width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) dst[static_cast<std::size_t>(ix)] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
ConvGeometry check_conv(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                        std::size_t stride, std::size_t padding, const char* op) {
  require_rank(input.shape(), 4, op, "input");
  require_rank(kernels.shape(), 4, op, "kernels");
  require_rank(bias.shape(), 1, op, "bias");
  require_axis(input.dim(1), kernels.dim(1), op, "input axis 1 (channels)");
  require_axis(kernels.dim(3), kernels.dim(2), op, "kernels axis 3 (square kernel width)");
  require_axis(bias.dim(0), kernels.dim(0), op, "bias axis 0 (output channels)");
  return conv_geometry(input.dim(1), input.dim(2), input.dim(3), kernels.dim(2), stride, padding);
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias,
                         std::size_t stride, std::size_t padding) {
  const ConvGeometry g = check_conv(input, kernels, bias, stride, padding, "conv2d_forward");
  const std::size_t batch = input.dim(0), out_channels = kernels.dim(0);
  const std::size_t in_plane = g.channels * g.height * g.width;
  const std::size_t out_plane = out_channels * g.out_area();

  Tensor<T> output({batch, out_channels, g.out_height, g.out_width});
  AlignedVector<T> columns(g.patch_size() * g.out_area());
  ConstMatrixMap<T> w(kernels.data(), out_channels, g.patch_size());
  ConstMatrixMap<T> col(columns.data(), g.patch_size(), g.out_area());
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.data(), out_channels);
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(input.data() + n * in_plane, g, columns.data());
    MatrixMap<T> y(output.data() + n * out_plane, out_channels, g.out_area());
    y.noalias() = w * col;
    y.colwise() += b;
  }
  return output;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, Tensor<T>& kernels, Tensor<T>& bias,
                          const Tensor<T>& grad_output, std::size_t stride, std::size_t padding) {
  const ConvGeometry g = check_conv(input, kernels, bias, stride, padding, "conv2d_backward");
  const std::size_t batch = input.dim(0), out_channels = kernels.dim(0);
  require_axis(grad_output.size(), batch * out_channels * g.out_area(), "conv2d_backward",
               "grad element count");
  const std::size_t in_plane = g.channels * g.height * g.width;
  const std::size_t out_plane = out_channels * g.out_area();
  kernels.zero_grad();
  bias.zero_grad();

  Tensor<T> grad_input(input.shape());
  AlignedVector<T> columns(g.patch_size() * g.out_area());
  AlignedVector<T> grad_columns(columns.size());
  ConstMatrixMap<T> w(kernels.data(), out_channels, g.patch_size());
  MatrixMap<T> dw(kernels.grad().data(), out_channels, g.patch_size());
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bias.grad().data(), out_channels);
  MatrixMap<T> col(columns.data(), g.patch_size(), g.out_area());
  MatrixMap<T> dcol(grad_columns.data(), g.patch_size(), g.out_area());
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(input.data() + n * in_plane, g, columns.data());
    ConstMatrixMap<T> dy(grad_output.data() + n * out_plane, out_channels, g.out_area());
    dw.noalias() += dy * col.transpose();
    db += dy.rowwise().sum();
    dcol.noalias() = w.transpose() * dy;
    col2im(grad_columns.data(), g, grad_input.data() + n * in_plane);
  }
  return grad_input;
}

// ---------------------------------------------------------------------------
// maxpool2d

struct PoolGeometry {
  std::size_t channels, height, width, window, stride, out_height, out_width;
};

inline PoolGeometry pool_geometry(const Shape& shape, std::size_t window, std::size_t stride) {
  require_rank(shape, 4, "maxpool", "input");
  if (window == 0 || stride == 0) throw ConfigError("maxpool: window and stride must be positive");
  const std::size_t h = shape[2], w = shape[3];
  if (window > h || window > w) {
    throw ConfigError("maxpool: window " + std::to_string(window) + " larger than input " +
                      std::to_string(h) + "x" + std::to_string(w));
  }
  if ((h - window) % stride != 0 || (w - window) % stride != 0) {
    throw ConfigError("maxpool: input " + std::to_string(h) + "x" + std::to_string(w) +
                      " not tiled by window " + std::to_string(window) + " stride " + std::to_string(stride));
  }
  return {shape[1], h, w, window, stride, (h - window) / stride + 1, (w - window) / stride + 1};
}

// argmax receives, per output cell, the flat input index of its maximum
// (first occurrence on ties).
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& input, std::size_t window, std::size_t stride,
                          std::vector<std::size_t>* argmax = nullptr) {
  const PoolGeometry g = pool_geometry(input.shape(), window, stride);
  const std::size_t batch = input.dim(0);
  Tensor<T> output({batch, g.channels, g.out_height, g.out_width});
  if (argmax != nullptr) argmax->resize(output.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < batch * g.channels; ++plane) {
    const std::size_t base = plane * g.height * g.width;
    for (std::size_t oy = 0; oy < g.out_height; ++oy) {
      for (std::size_t ox = 0; ox < g.out_width; ++ox, ++o) {
        std::size_t best = base + (oy * g.stride) * g.width + ox * g.stride;
        for (std::size_t ky = 0; ky < g.window; ++ky) {
          for (std::size_t kx = 0; kx < g.window; ++kx) {
            const std::size_t idx = base + (oy * g.stride + ky) * g.width + ox * g.stride + kx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        output[o] = input[best];
        if (argmax != nullptr) (*argmax)[o] = best;
      }
    }
  }
  return output;
}

template <typename T>
Tensor<T> maxpool_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                           const Tensor<T>& grad_output) {
  require_axis(grad_output.size(), argmax.size(), "maxpool_backward", "grad element count");
  Tensor<T> grad_input(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_input[argmax[o]] += grad_output[o];
  return grad_input;
}

// ---------------------------------------------------------------------------
// relu

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> output = input;
  for (T& v : output.values()) v = v > T{0} ? v : T{0};
  return output;
}

// Gradient is zero wherever the pre-activation was not strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  require_axis(grad_output.size(), input.size(), "relu_backward", "grad element count");
  Tensor<T> grad_input = grad_output.reshaped(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!(input[i] > T{0})) grad_input[i] = T{0};
  }
  return grad_input;
}

}  // namespace decade::ops
