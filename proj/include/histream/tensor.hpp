#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "histream/error.hpp"

namespace histream {

using Dims = std::vector<std::size_t>;

std::size_t element_count(const Dims& dims);
std::string dims_to_string(const Dims& dims);

/// Dense row-major array with the innermost extent last.
///
/// The forward path uses `Tensor` (32-bit floats). The double instantiation
/// exists so gradient checks can run the same model code in 64-bit.
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Dims dims);
  BasicTensor(Dims dims, std::vector<T> data);

  static BasicTensor filled(Dims dims, T value);

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Same payload, different extents; the element count must match.
  BasicTensor reshaped(Dims dims) const;

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(dims_, std::move(out));
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

/// True when every element is finite.
template <class T>
bool all_finite(std::span<const T> values);

}  // namespace histream
