#include <gtest/gtest.h>

#include <set>

#include "histream/error.hpp"
#include "histream/rng.hpp"

using namespace histream;

// Random123 known-answer vectors for philox4x32_10.
TEST(Philox, KnownAnswerZero) {
  const auto r = philox4x32_10({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(r[0], 0x6627e8d5u);
  EXPECT_EQ(r[1], 0xe169c58du);
  EXPECT_EQ(r[2], 0xbc57ac4cu);
  EXPECT_EQ(r[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerPi) {
  const auto r = philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                               {0xa4093822, 0x299f31d0});
  EXPECT_EQ(r[0], 0xd16cfe09u);
  EXPECT_EQ(r[1], 0x94fdccebu);
  EXPECT_EQ(r[2], 0x5001e420u);
  EXPECT_EQ(r[3], 0x24126ea1u);
}

TEST(Rng, SubstreamsAreDeterministicAndDistinct) {
  const Rng rng(42);
  RngStream a = rng.substream(stream_key(StreamTag::kTest, 1));
  RngStream b = rng.substream(stream_key(StreamTag::kTest, 1));
  RngStream c = rng.substream(stream_key(StreamTag::kTest, 2));
  std::set<std::uint32_t> seen;
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint32_t x = a.next_u32();
    EXPECT_EQ(x, b.next_u32());
    differs |= x != c.next_u32();
    seen.insert(x);
  }
  EXPECT_TRUE(differs);
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Rng, SeedChangesStream) {
  RngStream a = Rng(1).substream(0);
  RngStream b = Rng(2).substream(0);
  EXPECT_NE(a.next_u32(), b.next_u32());
}

TEST(Rng, UniformOpenInterval) {
  RngStream s = Rng(5).substream(stream_key(StreamTag::kTest, 3));
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = s.next_uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 20000, 0.5, 0.01);
}

TEST(Rng, GaussianMoments) {
  const Tensor g = gaussian(Rng(9), stream_key(StreamTag::kTest, 4), {200000});
  double m = 0.0, v = 0.0;
  for (float x : g.data()) m += x;
  m /= g.size();
  for (float x : g.data()) v += (x - m) * (x - m);
  v /= g.size();
  EXPECT_NEAR(m, 0.0, 0.01);
  EXPECT_NEAR(v, 1.0, 0.02);
}

TEST(Rng, GaussianDependsOnlyOnSeedKeyDims) {
  const Rng rng(77);
  const std::uint64_t k = stream_key(StreamTag::kInitialNoise, 3);
  EXPECT_EQ(gaussian(rng, k, {3, 4, 5}), gaussian(rng, k, {3, 4, 5}));
  // Odd sizes consume a prefix of the same pair sequence.
  const Tensor a = gaussian(rng, k, {7});
  const Tensor b = gaussian(rng, k, {8});
  for (std::size_t i = 0; i < 7; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Rng, StreamKeyPackingAndRange) {
  EXPECT_NE(stream_key(StreamTag::kRenoise, 1, 0), stream_key(StreamTag::kRenoise, 0, 1));
  EXPECT_NE(stream_key(StreamTag::kRenoise, 1), stream_key(StreamTag::kInitialNoise, 1));
  EXPECT_EQ(stream_key(StreamTag::kTest, 0, 0), std::uint64_t(6) << 56);
  EXPECT_THROW(stream_key(StreamTag::kTest, 1ull << 32), ContractError);
  EXPECT_THROW(stream_key(StreamTag::kTest, 0, 1ull << 24), ContractError);
}
