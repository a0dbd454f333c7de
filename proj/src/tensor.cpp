#include "skinnet/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace skinnet {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
TensorT<T>::TensorT(Shape shape, T fill) : shape_(std::move(shape)) {
  for (auto d : shape_)
    if (d == 0) fail(ErrorKind::kShape, "tensor dimensions must be positive, got " + shape_str(shape_));
  data_.assign(shape_size(shape_), fill);
}

template <typename T>
TensorT<T>::TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_)
    if (d == 0) fail(ErrorKind::kShape, "tensor dimensions must be positive, got " + shape_str(shape_));
  if (shape_size(shape_) != data_.size())
    fail(ErrorKind::kShape, "shape " + shape_str(shape_) + " does not match " +
                                std::to_string(data_.size()) + " elements");
}

template <typename T>
TensorT<T> TensorT<T>::reshaped(Shape shape) const& {
  return TensorT(std::move(shape), data_);
}

template <typename T>
TensorT<T> TensorT<T>::reshaped(Shape shape) && {
  return TensorT(std::move(shape), std::move(data_));
}

template <typename T>
void TensorT<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool TensorT<T>::all_finite() const noexcept {
  for (T v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

template <typename T>
void require_finite(const TensorT<T>& t, const char* where) {
  if (!t.all_finite()) fail(ErrorKind::kNumeric, std::string(where) + ": non-finite value");
}

void require_same_shape(const Shape& a, const Shape& b, const char* where) {
  if (a != b) fail(ErrorKind::kShape, std::string(where) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

template class TensorT<float>;
template class TensorT<double>;
template void require_finite(const TensorT<float>&, const char*);
template void require_finite(const TensorT<double>&, const char*);

}  // namespace skinnet
