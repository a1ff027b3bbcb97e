#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "decade/errors.hpp"

namespace decade {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Buffers start on the widest SIMD boundary so vectorized reductions peel the
// same way on every allocation; without it training is not bit-reproducible.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

// Dense row-major n-d array with an optional gradient buffer of equal length.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), values_(shape_size(shape_), fill) {
    check_shape();
  }

  Tensor(Shape shape, const std::vector<T>& values)
      : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    check_values();
  }

  Tensor(Shape shape, std::initializer_list<T> values)
      : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    check_values();
  }

  Tensor(Shape shape, AlignedVector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    check_values();
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<T> grad() { return grad_; }
  std::span<const T> grad() const { return grad_; }

  // Allocates (zeroed) or clears the gradient buffer.
  void zero_grad() { grad_.assign(values_.size(), T{0}); }
  void drop_grad() { grad_.clear(); }

  // Same buffer, new shape of equal element count.
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != values_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), values_);
  }

  template <typename U>
  Tensor<U> cast() const {
    AlignedVector<U> out(values_.size());
    std::transform(values_.begin(), values_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  void check_shape() const {
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] == 0) {
        throw DimensionError("tensor axis " + std::to_string(i) + " has zero extent in " +
                             shape_string(shape_));
      }
    }
  }

  void check_values() const {
    check_shape();
    if (values_.size() != shape_size(shape_)) {
      throw DimensionError("tensor of shape " + shape_string(shape_) + " needs " +
                           std::to_string(shape_size(shape_)) + " values, got " +
                           std::to_string(values_.size()));
    }
  }

  Shape shape_;
  AlignedVector<T> values_;
  AlignedVector<T> grad_;
};

}  // namespace decade
