#pragma once

// Per-row bodies shared by the serial and OpenMP kernels. Keeping one
// definition is what makes the two paths bit-identical.

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace histream::kernels::detail {

template <class T>
inline void softmax_row(T* row, std::size_t cols) {
  T mx = row[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
  T sum = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  const T inv = T(1) / sum;
  for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
}

template <class T>
inline T layernorm_row(const T* x, T* y, std::size_t cols, T eps) {
  T sum = 0;
  for (std::size_t j = 0; j < cols; ++j) sum += x[j];
  const T mean = sum / T(cols);
  T var = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    const T d = x[j] - mean;
    var += d * d;
  }
  var /= T(cols);
  const T rstd = T(1) / std::sqrt(var + eps);
  for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mean) * rstd;
  return rstd;
}

template <class T>
inline void downsample_plane(const T* x, T* y, std::size_t h, std::size_t w) {
  const std::size_t ho = h / 2, wo = w / 2;
  for (std::size_t i = 0; i < ho; ++i) {
    const T* r0 = x + (2 * i) * w;
    const T* r1 = r0 + w;
    for (std::size_t j = 0; j < wo; ++j) {
      // Pairwise sums keep constant blocks exact: (c+c)+(c+c) = 4c.
      y[i * wo + j] = ((r0[2 * j] + r0[2 * j + 1]) + (r1[2 * j] + r1[2 * j + 1])) * T(0.25);
    }
  }
}

/// Source sample pair and weight for output index `o` of a 2x upsample over
/// `n` inputs, half-pixel centers.
struct LerpTap {
  std::size_t i0;
  std::size_t i1;
  double w;
};

inline LerpTap upsample_tap(std::size_t o, std::size_t n) {
  double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
  if (src < 0) src = 0;
  const double maxi = static_cast<double>(n - 1);
  if (src > maxi) src = maxi;
  const auto i0 = static_cast<std::size_t>(src);
  const std::size_t i1 = std::min(i0 + 1, n - 1);
  return {i0, i1, src - static_cast<double>(i0)};
}

/// a + w (b - a), clamped to the closed interval spanned by a and b.
template <class T>
inline T lerp_clamped(T a, T b, T w) {
  const T v = a + w * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

template <class T>
inline void upsample_plane(const T* x, T* y, std::size_t h, std::size_t w) {
  const std::size_t ho = 2 * h, wo = 2 * w;
  for (std::size_t i = 0; i < ho; ++i) {
    const LerpTap ty = upsample_tap(i, h);
    const T wy = static_cast<T>(ty.w);
    const T* r0 = x + ty.i0 * w;
    const T* r1 = x + ty.i1 * w;
    for (std::size_t j = 0; j < wo; ++j) {
      const LerpTap tx = upsample_tap(j, w);
      const T wx = static_cast<T>(tx.w);
      const T top = lerp_clamped(r0[tx.i0], r0[tx.i1], wx);
      const T bot = lerp_clamped(r1[tx.i0], r1[tx.i1], wx);
      y[i * wo + j] = lerp_clamped(top, bot, wy);
    }
  }
}

}  // namespace histream::kernels::detail
