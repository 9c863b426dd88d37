#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "histream/error.hpp"
#include "histream/kernels.hpp"
#include "histream/rng.hpp"

using namespace histream;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t key) {
  const Tensor t = gaussian(Rng(11), stream_key(StreamTag::kTest, key), {n});
  return {t.data().begin(), t.data().end()};
}

// Restores the thread cap after a test changes it.
struct Threads {
  int saved = kernels::num_threads();
  explicit Threads(int n) { kernels::set_num_threads(n); }
  ~Threads() { kernels::set_num_threads(saved); }
};

}  // namespace

TEST(Kernels, MatmulMatchesDoubleReference) {
  const std::size_t m = 13, k = 29, n = 7;
  const auto a = noise(m * k, 1), b = noise(k * n, 2);
  std::vector<float> c(m * n);
  kernels::serial::matmul<float>(a, b, c, m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double ref = 0.0;
      for (std::size_t p = 0; p < k; ++p) ref += double(a[i * k + p]) * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], ref, 1e-4);
    }
}

TEST(Kernels, ParallelMatchesSerialBitExactly) {
  const Threads t(4);
  const std::size_t m = 67, k = 45, n = 33;
  const auto a = noise(m * k, 3), b = noise(k * n, 4);
  std::vector<float> s(m * n), p(m * n);
  kernels::serial::matmul<float>(a, b, s, m, k, n);
  kernels::parallel::matmul<float>(a, b, p, m, k, n);
  EXPECT_EQ(s, p);

  auto xs = noise(m * n, 5), xp = xs;
  kernels::serial::softmax_rows<float>(xs, m, n);
  kernels::parallel::softmax_rows<float>(xp, m, n);
  EXPECT_EQ(xs, xp);

  const auto x = noise(m * n, 6);
  std::vector<float> ys(m * n), yp(m * n), rs(m), rp(m);
  kernels::serial::layernorm_rows<float>(x, ys, rs, m, n, 1e-6f);
  kernels::parallel::layernorm_rows<float>(x, yp, rp, m, n, 1e-6f);
  EXPECT_EQ(ys, yp);
  EXPECT_EQ(rs, rp);

  const auto img = noise(5 * 8 * 12, 7);
  std::vector<float> ds(5 * 4 * 6), dp(5 * 4 * 6), us(5 * 16 * 24), up(5 * 16 * 24);
  kernels::serial::downsample_avg2<float>(img, ds, 5, 8, 12);
  kernels::parallel::downsample_avg2<float>(img, dp, 5, 8, 12);
  EXPECT_EQ(ds, dp);
  kernels::serial::upsample_bilinear2<float>(img, us, 5, 8, 12);
  kernels::parallel::upsample_bilinear2<float>(img, up, 5, 8, 12);
  EXPECT_EQ(us, up);
}

TEST(Kernels, SoftmaxRowsSumToOne) {
  auto x = noise(6 * 50, 8);
  for (float& v : x) v *= 20.0f;
  kernels::softmax_rows<float>(x, 6, 50);
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 50; ++c) {
      EXPECT_GE(x[r * 50 + c], 0.0f);
      s += x[r * 50 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Kernels, LayerNormZeroMeanUnitVariance) {
  const auto x = noise(4 * 64, 9);
  std::vector<float> y(x.size()), rstd(4);
  kernels::layernorm_rows<float>(x, y, rstd, 4, 64, 1e-6f);
  for (std::size_t r = 0; r < 4; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < 64; ++c) mean += y[r * 64 + c];
    mean /= 64;
    for (std::size_t c = 0; c < 64; ++c) var += (y[r * 64 + c] - mean) * (y[r * 64 + c] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-5);
    EXPECT_NEAR(var / 64, 1.0, 1e-4);
  }
}

TEST(Kernels, TransposeInvolution) {
  const Tensor a({3, 5}, noise(15, 10));
  EXPECT_EQ(kernels::transpose(kernels::transpose(a)), a);
  EXPECT_EQ(kernels::transpose(a).dim(0), 5u);
}

TEST(Kernels, ResamplePreservesConstants) {
  const Tensor c = Tensor::filled({2, 3, 4, 6}, 0.7f);
  const Tensor up = kernels::upsample_bilinear2(c);
  EXPECT_EQ(up.dims(), (Dims{2, 3, 8, 12}));
  for (float v : up.data()) EXPECT_EQ(v, 0.7f);
  const Tensor down = kernels::downsample_avg2(c);
  EXPECT_EQ(down.dims(), (Dims{2, 3, 2, 3}));
  for (float v : down.data()) EXPECT_EQ(v, 0.7f);
}

TEST(Kernels, DownsampleAveragesBlocks) {
  const Tensor x({1, 1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  const Tensor y = kernels::downsample_avg2(x);
  EXPECT_EQ(y[0], (1 + 2 + 5 + 6) / 4.0f);
  EXPECT_EQ(y[1], (3 + 4 + 7 + 8) / 4.0f);
}

TEST(Kernels, UpsampleHalfPixelWeights) {
  // align_corners=false: output 1 of a 2-wide row sits at 0.25 between the inputs.
  const Tensor x({1, 1, 1, 2}, {0.0f, 4.0f});
  const Tensor y = kernels::upsample_bilinear2(x);
  EXPECT_EQ(y.dims(), (Dims{1, 1, 2, 4}));
  const float row[4] = {0.0f, 1.0f, 3.0f, 4.0f};
  for (int r = 0; r < 2; ++r)
    for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(y[r * 4 + i], row[i]);
}

TEST(Kernels, DownsampleOfUpsampleIsCloseOnSmoothInput) {
  std::vector<float> v(8 * 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) v[y * 8 + x] = 0.1f * x + 0.2f * y;
  const Tensor t({1, 1, 8, 8}, v);
  const Tensor back = kernels::downsample_avg2(kernels::upsample_bilinear2(t));
  // Linear ramps survive exactly away from the clamped border.
  for (int y = 1; y < 7; ++y)
    for (int x = 1; x < 7; ++x) EXPECT_NEAR(back[y * 8 + x], v[y * 8 + x], 1e-5);
}

TEST(Kernels, ShapeErrors) {
  EXPECT_THROW(kernels::downsample_avg2(Tensor({1, 1, 3, 4})), ShapeError);
  EXPECT_THROW(kernels::downsample_avg2(Tensor({4, 4})), ShapeError);
  EXPECT_THROW(kernels::matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
}

TEST(Kernels, ThreadCap) {
  const Threads t(3);
  EXPECT_EQ(kernels::num_threads(), 3);
  kernels::set_num_threads(0);
  EXPECT_EQ(kernels::num_threads(), 1);
}
