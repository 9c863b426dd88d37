#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "histream/tensor.hpp"

namespace histream {

/// Token position on the (frame, row, column) lattice.
struct Position3 {
  std::int64_t frame = 0;
  std::int64_t y = 0;
  std::int64_t x = 0;
};

/// 3D rotary embedding layout.
///
/// Each head vector is cut into three contiguous sub-blocks of
/// `axis_split = {d_t, d_y, d_x}` lanes. Inside a sub-block, lanes (2i, 2i+1)
/// form a rotation pair with angle pos_axis * base_axis^(-2i / d_axis).
/// The temporal base is always `base`; the spatial bases are NTK-rescaled by
/// `ntk_scale`.
struct RopeConfig {
  int head_dim = 32;
  std::array<int, 3> axis_split{8, 12, 12};
  double base = 10000.0;
  std::array<double, 2> ntk_scale{1.0, 1.0};

  /// head_dim/4 temporal lanes, the rest split evenly over y and x, all even.
  static std::array<int, 3> default_split(int head_dim);

  RopeConfig with_ntk_scale(double s) const {
    RopeConfig c = *this;
    c.ntk_scale = {s, s};
    return c;
  }

  /// Throws ConfigError on odd/negative sub-dims or mismatched sums.
  void validate() const;

  /// Effective base for axis 0 (t), 1 (y) or 2 (x).
  double axis_base(int axis) const;

  bool operator==(const RopeConfig&) const = default;
};

/// base * scale^(d_axis / (d_axis - 2)). Requires scale >= 1 and d_axis >= 4.
double ntk_rescaled_base(double base, double scale, int d_axis);

/// The head_dim/2 rotation angles for one position, in lane-pair order.
std::vector<double> rope_angles(const RopeConfig& cfg, Position3 pos);

/// Rotates every head_dim-long innermost vector of `v` to position `pos`.
template <class T>
BasicTensor<T> rope_rotate(const BasicTensor<T>& v, Position3 pos, const RopeConfig& cfg);

/// Precomputed cos/sin for a run of positions, head_dim/2 pairs each.
template <class T>
struct RopeTable {
  std::size_t pairs = 0;
  std::vector<T> cos;
  std::vector<T> sin;
};

template <class T>
RopeTable<T> make_rope_table(const RopeConfig& cfg, std::span<const Position3> positions);

/// Rotates rows laid out as [positions x heads x head_dim] in place.
/// `inverse` applies the transpose rotation (the backward pass).
template <class T>
void rope_apply(std::span<T> rows, const RopeTable<T>& table, std::size_t n_heads,
                bool inverse = false);

}  // namespace histream
