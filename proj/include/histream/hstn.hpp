#pragma once

#include <filesystem>
#include <iosfwd>

#include "histream/tensor.hpp"

namespace histream::hstn {

// Layout (all integers little-endian):
//   "HSTN" | u32 version = 1 | u8 dtype (0 = f32) | u8 rank |
//   rank x u32 extents | row-major f32 payload

inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

void write(std::ostream& out, const Tensor& t);
Tensor read(std::istream& in);

void save(const std::filesystem::path& path, const Tensor& t);
Tensor load(const std::filesystem::path& path);

}  // namespace histream::hstn
