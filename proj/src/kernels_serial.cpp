#include <algorithm>

#include "histream/kernels.hpp"
#include "kernel_rows.hpp"

namespace histream::kernels::serial {

template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c.data() + i * n;
    const T* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = ai[p];
      const T* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <class T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = in[i * cols + j];
}

template <class T>
void softmax_rows(std::span<T> x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) detail::softmax_row(x.data() + r * cols, cols);
}

template <class T>
void layernorm_rows(std::span<const T> x, std::span<T> y, std::span<T> rstd, std::size_t rows,
                    std::size_t cols, T eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T s = detail::layernorm_row(x.data() + r * cols, y.data() + r * cols, cols, eps);
    if (!rstd.empty()) rstd[r] = s;
  }
}

template <class T>
void downsample_avg2(std::span<const T> x, std::span<T> y, std::size_t planes, std::size_t h,
                     std::size_t w) {
  for (std::size_t p = 0; p < planes; ++p)
    detail::downsample_plane(x.data() + p * h * w, y.data() + p * (h / 2) * (w / 2), h, w);
}

template <class T>
void upsample_bilinear2(std::span<const T> x, std::span<T> y, std::size_t planes, std::size_t h,
                        std::size_t w) {
  for (std::size_t p = 0; p < planes; ++p)
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

}  // namespace histream::kernels::serial
