#include "histream/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace histream::kernels {

namespace {

int threads_from_env() {
  const char* env = std::getenv("HISTREAM_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{threads_from_env()};
  return cap;
}

void require_rank(const char* op, std::size_t rank, std::size_t want, const Dims& dims) {
  if (rank != want) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(want) + ", got " +
                     dims_to_string(dims));
  }
}

}  // namespace

int num_threads() { return thread_cap().load(std::memory_order_relaxed); }

void set_num_threads(int n) { thread_cap().store(n >= 1 ? n : 1, std::memory_order_relaxed); }

template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  if (num_threads() > 1)
    parallel::matmul(a, b, c, m, k, n);
  else
    serial::matmul(a, b, c, m, k, n);
}

template <class T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols) {
  if (num_threads() > 1)
    parallel::transpose(in, out, rows, cols);
  else
    serial::transpose(in, out, rows, cols);
}

template <class T>
void softmax_rows(std::span<T> x, std::size_t rows, std::size_t cols) {
  if (num_threads() > 1)
    parallel::softmax_rows(x, rows, cols);
  else
    serial::softmax_rows(x, rows, cols);
}

template <class T>
void layernorm_rows(std::span<const T> x, std::span<T> y, std::span<T> rstd, std::size_t rows,
                    std::size_t cols, T eps) {
  if (num_threads() > 1)
    parallel::layernorm_rows(x, y, rstd, rows, cols, eps);
  else
    serial::layernorm_rows(x, y, rstd, rows, cols, eps);
}

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank("matmul", a.rank(), 2, a.dims());
  require_rank("matmul", b.rank(), 2, b.dims());
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner extents differ, " + dims_to_string(a.dims()) + " x " +
                     dims_to_string(b.dims()));
  }
  BasicTensor<T> c({a.dim(0), b.dim(1)});
  matmul<T>(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1));
  return c;
}

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require_rank("transpose", a.rank(), 2, a.dims());
  BasicTensor<T> out({a.dim(1), a.dim(0)});
  transpose<T>(a.data(), out.data(), a.dim(0), a.dim(1));
  return out;
}

template <class T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x) {
  BasicTensor<T> y = x;
  const std::size_t cols = x.dims().back();
  softmax_rows<T>(y.data(), x.size() / cols, cols);
  return y;
}

template <class T>
BasicTensor<T> downsample_avg2(const BasicTensor<T>& x) {
  require_rank("downsample_avg2", x.rank(), 4, x.dims());
  const std::size_t h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("downsample_avg2: spatial extents must be even, got " +
                     dims_to_string(x.dims()));
  }
  BasicTensor<T> y({x.dim(0), x.dim(1), h / 2, w / 2});
  const std::size_t planes = x.dim(0) * x.dim(1);
  if (num_threads() > 1)
    parallel::downsample_avg2<T>(x.data(), y.data(), planes, h, w);
  else
    serial::downsample_avg2<T>(x.data(), y.data(), planes, h, w);
  return y;
}

template <class T>
BasicTensor<T> upsample_bilinear2(const BasicTensor<T>& x) {
  require_rank("upsample_bilinear2", x.rank(), 4, x.dims());
  const std::size_t h = x.dim(2), w = x.dim(3);
  BasicTensor<T> y({x.dim(0), x.dim(1), 2 * h, 2 * w});
  const std::size_t planes = x.dim(0) * x.dim(1);
  if (num_threads() > 1)
    parallel::upsample_bilinear2<T>(x.data(), y.data(), planes, h, w);
  else
    serial::upsample_bilinear2<T>(x.data(), y.data(), planes, h, w);
  return y;
}

#define HISTREAM_INSTANTIATE(T)                                                               \
  template void matmul<T>(std::span<const T>, std::span<const T>, std::span<T>, std::size_t, \
                          std::size_t, std::size_t);                                          \
  template void transpose<T>(std::span<const T>, std::span<T>, std::size_t, std::size_t);     \
  template void softmax_rows<T>(std::span<T>, std::size_t, std::size_t);                      \
  template void layernorm_rows<T>(std::span<const T>, std::span<T>, std::span<T>,             \
                                  std::size_t, std::size_t, T);                               \
  template BasicTensor<T> matmul<T>(const BasicTensor<T>&, const BasicTensor<T>&);            \
  template BasicTensor<T> transpose<T>(const BasicTensor<T>&);                                \
  template BasicTensor<T> softmax_lastdim<T>(const BasicTensor<T>&);                          \
  template BasicTensor<T> downsample_avg2<T>(const BasicTensor<T>&);                          \
  template BasicTensor<T> upsample_bilinear2<T>(const BasicTensor<T>&);

HISTREAM_INSTANTIATE(float)
HISTREAM_INSTANTIATE(double)

#undef HISTREAM_INSTANTIATE

}  // namespace histream::kernels
