#include "histream/tensor.hpp"

#include <cmath>
#include <utility>

namespace histream {

std::size_t element_count(const Dims& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string dims_to_string(const Dims& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

namespace {

void check_dims(const Dims& dims) {
  if (dims.empty()) throw ShapeError("tensor must have rank >= 1");
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("tensor extent must be >= 1, got " + dims_to_string(dims));
  }
}

}  // namespace

template <class T>
BasicTensor<T>::BasicTensor(Dims dims) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(element_count(dims_), T(0));
}

template <class T>
BasicTensor<T>::BasicTensor(Dims dims, std::vector<T> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (element_count(dims_) != data_.size()) {
    throw ShapeError("payload of " + std::to_string(data_.size()) +
                     " elements does not match extents " + dims_to_string(dims_));
  }
}

template <class T>
BasicTensor<T> BasicTensor<T>::filled(Dims dims, T value) {
  BasicTensor t(std::move(dims));
  for (auto& v : t.data_) v = value;
  return t;
}

template <class T>
BasicTensor<T> BasicTensor<T>::reshaped(Dims dims) const {
  return BasicTensor(std::move(dims), data_);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

template <class T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template bool all_finite<float>(std::span<const float>);
template bool all_finite<double>(std::span<const double>);

}  // namespace histream
