#include <omp.h>

#include <algorithm>

#include "histream/kernels.hpp"
#include "kernel_rows.hpp"

namespace histream::kernels::parallel {

namespace {

// Signed loop bounds for OpenMP worksharing.
inline std::ptrdiff_t sz(std::size_t v) { return static_cast<std::ptrdiff_t>(v); }

}  // namespace

template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  const T* A = a.data();
  const T* B = b.data();
  T* C = c.data();
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t i = 0; i < sz(m); ++i) {
    T* ci = C + i * sz(n);
    std::fill(ci, ci + n, T(0));
    const T* ai = A + i * sz(k);
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = B + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <class T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t j = 0; j < sz(cols); ++j)
    for (std::size_t i = 0; i < rows; ++i) out[j * rows + i] = in[i * cols + j];
}

template <class T>
void softmax_rows(std::span<T> x, std::size_t rows, std::size_t cols) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t r = 0; r < sz(rows); ++r) detail::softmax_row(x.data() + r * cols, cols);
}

template <class T>
void layernorm_rows(std::span<const T> x, std::span<T> y, std::span<T> rstd, std::size_t rows,
                    std::size_t cols, T eps) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t r = 0; r < sz(rows); ++r) {
    const T s = detail::layernorm_row(x.data() + r * cols, y.data() + r * cols, cols, eps);
    if (!rstd.empty()) rstd[r] = s;
  }
}

template <class T>
void downsample_avg2(std::span<const T> x, std::span<T> y, std::size_t planes, std::size_t h,
                     std::size_t w) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t p = 0; p < sz(planes); ++p)
    detail::downsample_plane(x.data() + p * h * w, y.data() + p * (h / 2) * (w / 2), h, w);
}

template <class T>
void upsample_bilinear2(std::span<const T> x, std::span<T> y, std::size_t planes, std::size_t h,
                        std::size_t w) {
#pragma omp parallel for schedule(static) num_threads(num_threads())
  for (std::ptrdiff_t p = 0; p < sz(planes); ++p)
    detail::upsample_plane(x.data() + p * h * w, y.data() + p * 4 * h * w, h, w);
}

#define HISTREAM_INSTANTIATE(T)                                                               \
  template void matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, \
                          std::size_t, std::size_t);                                          \
  template void transpose<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);     \
  template void softmax_rows<T>(std::span<T>, std::size_t, std::size_t);                      \
  template void layernorm_rows<T>(std::span<const T>, std::span<T>, std::span<T>,             \
                                  std::size_t, std::size_t, T);                               \
  template void downsample_avg2<T>(std::span<const T>, std::span<T>, std::size_t,             \
                                   std::size_t, std::size_t);                                 \
  template void upsample_bilinear2<T>(std::span<const T>, std::span<T>, std::size_t,          \
                                      std::size_t, std::size_t);

HISTREAM_INSTANTIATE(float)
HISTREAM_INSTANTIATE(double)

#undef HISTREAM_INSTANTIATE

}  // namespace histream::kernels::parallel
