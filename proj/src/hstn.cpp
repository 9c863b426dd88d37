#include "histream/hstn.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace histream::hstn {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v), static_cast<char>(v >> 8),
                              static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw IoError("hstn: truncated header");
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

std::uint8_t get_u8(std::istream& in) {
  char c = 0;
  in.read(&c, 1);
  if (!in) throw IoError("hstn: truncated header");
  return static_cast<std::uint8_t>(c);
}

}  // namespace

void write(std::ostream& out, const Tensor& t) {
  if (t.rank() > std::numeric_limits<std::uint8_t>::max()) throw ShapeError("hstn: rank too large");
  out.write("HSTN", 4);
  put_u32(out, kVersion);
  out.put(static_cast<char>(kDtypeF32));
  out.put(static_cast<char>(t.rank()));
  for (std::size_t d : t.dims()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw ShapeError("hstn: extent too large");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  if (!out) throw IoError("hstn: write failed");
}

Tensor read(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "HSTN", 4) != 0) throw IoError("hstn: bad magic");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) throw IoError("hstn: unsupported version " + std::to_string(version));
  const std::uint8_t dtype = get_u8(in);
  if (dtype != kDtypeF32) throw IoError("hstn: unsupported dtype " + std::to_string(dtype));
  const std::uint8_t rank = get_u8(in);
  if (rank == 0) throw IoError("hstn: rank 0");
  Dims dims(rank);
  for (auto& d : dims) d = get_u32(in);
  std::vector<float> data(element_count(dims));
  for (auto& v : data) v = std::bit_cast<float>(get_u32(in));
  return Tensor(std::move(dims), std::move(data));
}

void save(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write(out, t);
}

Tensor load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return read(in);
}

}  // namespace histream::hstn
