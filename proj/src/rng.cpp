#include "histream/rng.hpp"

#include <cmath>
#include <numbers>

namespace histream {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
  }
  return ctr;
}

std::uint64_t stream_key(StreamTag tag, std::uint64_t a, std::uint64_t b) {
  if (a >= (1ull << 32) || b >= (1ull << 24)) {
    throw ContractError("stream_key: component out of range");
  }
  return (static_cast<std::uint64_t>(tag) << 56) | (a << 24) | b;
}

std::uint32_t RngStream::next_u32() {
  if (pos_ == 4) {
    buf_ = philox4x32_10(
        {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
         static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32)},
        {static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)});
    ++block_;
    pos_ = 0;
  }
  return buf_[pos_++];
}

double RngStream::next_uniform() {
  return (static_cast<double>(next_u32()) + 0.5) * 0x1.0p-32;
}

std::array<double, 2> RngStream::next_gaussian_pair() {
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double phi = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(phi), r * std::sin(phi)};
}

Tensor gaussian(const Rng& rng, std::uint64_t key, const Dims& dims) {
  Tensor out(dims);
  RngStream s = rng.substream(key);
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); i += 2) {
    const auto z = s.next_gaussian_pair();
    data[i] = static_cast<float>(z[0]);
    if (i + 1 < data.size()) data[i + 1] = static_cast<float>(z[1]);
  }
  return out;
}

}  // namespace histream
