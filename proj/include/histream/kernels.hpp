#pragma once

#include <cstddef>
#include <span>

#include "histream/tensor.hpp"

/// Dense numeric kernels.
///
/// Every kernel exists twice: `serial::` is the plain reference loop nest and
/// `parallel::` splits the outermost independent axis across OpenMP threads.
/// Both produce bit-identical results because no reduction is ever split:
/// matmul accumulates each output over k in ascending order, and row-wise
/// reductions (softmax, layer norm) stay inside one thread.
///
/// The unqualified functions dispatch on `num_threads()`.
namespace histream::kernels {

/// Thread cap for the parallel kernels. Defaults to HISTREAM_THREADS, else 1.
int num_threads();
void set_num_threads(int n);

namespace serial {

/// c[m x n] = a[m x k] * b[k x n]; overwrites c.
template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n);

/// out[cols x rows] = in[rows x cols]^T
template <class T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols);

/// In-place max-subtracted softmax over each contiguous row.
template <class T>
void softmax_rows(std::span<T> x, std::size_t rows, std::size_t cols);

/// Normalizes every row to zero mean and unit variance. `rstd`, when
/// non-empty, receives 1/sqrt(var + eps) per row.
template <class T>
void layernorm_rows(std::span<const T> x, std::span<T> y, std::span<T> rstd, std::size_t rows,
                    std::size_t cols, T eps);

/// planes x [h x w] -> planes x [h/2 x w/2] by 2x2 mean.
template <class T>
void downsample_avg2(std::span<const T> x, std::span<T> y, std::size_t planes, std::size_t h,
                     std::size_t w);

/// planes x [h x w] -> planes x [2h x 2w], bilinear, align_corners = false.
template <class T>
void upsample_bilinear2(std::span<const T> x, std::span<T> y, std::size_t planes, std::size_t h,
                        std::size_t w);

}  // namespace serial

namespace parallel {

template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n);
template <class T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols);
template <class T>
void softmax_rows(std::span<T> x, std::size_t rows, std::size_t cols);
template <class T>
void layernorm_rows(std::span<const T> x, std::span<T> y, std::span<T> rstd, std::size_t rows,
                    std::size_t cols, T eps);
template <class T>
void downsample_avg2(std::span<const T> x, std::span<T> y, std::size_t planes, std::size_t h,
                     std::size_t w);
template <class T>
void upsample_bilinear2(std::span<const T> x, std::span<T> y, std::size_t planes, std::size_t h,
                        std::size_t w);

}  // namespace parallel

template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n);
template <class T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows, std::size_t cols);
template <class T>
void softmax_rows(std::span<T> x, std::size_t rows, std::size_t cols);
template <class T>
void layernorm_rows(std::span<const T> x, std::span<T> y, std::span<T> rstd, std::size_t rows,
                    std::size_t cols, T eps);

// Tensor-level operations.

/// [m x k] * [k x n] -> [m x n]. Throws ShapeError unless both are rank 2
/// with matching inner extents.
template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <class T>
BasicTensor<T> transpose(const BasicTensor<T>& a);

template <class T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x);

/// [F x C x H x W] -> [F x C x H/2 x W/2]; H and W must be even.
template <class T>
BasicTensor<T> downsample_avg2(const BasicTensor<T>& x);

/// [F x C x H x W] -> [F x C x 2H x 2W].
template <class T>
BasicTensor<T> upsample_bilinear2(const BasicTensor<T>& x);

}  // namespace histream::kernels
