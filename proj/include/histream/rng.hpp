#pragma once

#include <array>
#include <cstdint>

#include "histream/tensor.hpp"

namespace histream {

/// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// What a substream is used for. Part of the substream key, so draws for
/// different purposes can never collide.
enum class StreamTag : std::uint8_t {
  kInitialNoise = 1,
  kRenoise = 2,
  kTrainSample = 3,
  kWeightInit = 4,
  kSynthetic = 5,
  kTest = 6,
};

/// Injective packing of (tag, a, b) into a 64-bit substream key.
/// `a` must be < 2^32 and `b` < 2^24.
std::uint64_t stream_key(StreamTag tag, std::uint64_t a, std::uint64_t b = 0);

/// One counter-based substream.
///
/// Block `n` of substream `key` under seed `s` is
/// philox4x32_10(counter = {n.lo, n.hi, key.lo, key.hi}, key = {s.lo, s.hi}).
/// Distinct keys give disjoint counter ranges, so substreams never overlap.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t key) : seed_(seed), key_(key) {}

  std::uint32_t next_u32();
  /// Uniform on the open interval (0, 1): (u + 0.5) / 2^32.
  double next_uniform();
  /// Box-Muller pair from two consecutive uniforms.
  std::array<double, 2> next_gaussian_pair();

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

/// Seeded root generator; hands out keyed substreams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t seed() const { return seed_; }
  RngStream substream(std::uint64_t key) const { return RngStream(seed_, key); }

 private:
  std::uint64_t seed_;
};

/// i.i.d. N(0, 1) tensor. Element 2i and 2i+1 come from the i-th Box-Muller
/// pair of the substream; the result depends only on (seed, key, dims).
Tensor gaussian(const Rng& rng, std::uint64_t key, const Dims& dims);

}  // namespace histream
