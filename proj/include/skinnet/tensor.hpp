#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "skinnet/error.hpp"

namespace skinnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major n-dimensional array. `float` is the production element
/// type; `double` is used by the gradient-check tests.
template <typename T>
class TensorT {
 public:
  using value_type = T;

  TensorT() = default;
  explicit TensorT(Shape shape, T fill = T(0));
  TensorT(Shape shape, std::vector<T> data);

  static TensorT scalar(T v) { return TensorT(Shape{1}, std::vector<T>{v}); }
  static TensorT from(std::initializer_list<T> values) {
    return TensorT(Shape{values.size()}, std::vector<T>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 2-D and 4-D element access, row-major.
  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  /// Same data, new shape. Element count must be preserved.
  TensorT reshaped(Shape shape) const&;
  TensorT reshaped(Shape shape) &&;

  void fill(T v);
  bool all_finite() const noexcept;

  template <typename U>
  TensorT<U> cast() const {
    return TensorT<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const TensorT& a, const TensorT& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

/// Throws a kNumeric error naming `where` if `t` holds NaN or Inf.
template <typename T>
void require_finite(const TensorT<T>& t, const char* where);

/// Throws a kShape error if the two shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* where);

extern template class TensorT<float>;
extern template class TensorT<double>;

}  // namespace skinnet
