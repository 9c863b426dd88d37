#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "histream/error.hpp"
#include "histream/tensor.hpp"

using namespace histream;

TEST(Tensor, ZeroInitialisedWithShape) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.size(), 24u);
  for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Tensor, RejectsWrongElementCount) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(Tensor, RejectsZeroExtent) { EXPECT_THROW(Tensor({2, 0}), ShapeError); }

TEST(Tensor, ReshapeKeepsData) {
  Tensor t = Tensor::filled({2, 3}, 1.5f);
  t[4] = 7.0f;
  const Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.dim(0), 3u);
  EXPECT_EQ(r[4], 7.0f);
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, CastRoundTrip) {
  Tensor t({3}, {0.25f, -1.0f, 3.5f});
  EXPECT_EQ(t.cast<double>().cast<float>(), t);
}

TEST(Tensor, AllFinite) {
  std::vector<float> v{1.0f, 2.0f};
  EXPECT_TRUE(all_finite<float>(v));
  v[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(all_finite<float>(v));
  v[1] = std::numeric_limits<float>::infinity();
  EXPECT_FALSE(all_finite<float>(v));
}

TEST(Tensor, DimsToString) { EXPECT_EQ(dims_to_string({3, 4, 8}), "[3x4x8]"); }
