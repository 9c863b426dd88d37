#include "histream/rope.hpp"

#include <cmath>
#include <string>

#include "histream/error.hpp"

namespace histream {

std::array<int, 3> RopeConfig::default_split(int head_dim) {
  const int dt = (head_dim / 4) & ~1;
  const int rest = head_dim - dt;
  const int dy = (rest / 2) & ~1;
  return {dt, dy, rest - dy};
}

void RopeConfig::validate() const {
  if (head_dim <= 0 || head_dim % 2 != 0) {
    throw ConfigError("rope: head_dim must be positive and even, got " + std::to_string(head_dim));
  }
  int sum = 0;
  for (int d : axis_split) {
    if (d <= 0 || d % 2 != 0) throw ConfigError("rope: axis sub-dims must be positive and even");
    sum += d;
  }
  if (sum != head_dim) throw ConfigError("rope: axis split does not sum to head_dim");
  if (!(base > 0)) throw ConfigError("rope: base must be positive");
  for (double s : ntk_scale) {
    if (!(s > 0)) throw ConfigError("rope: ntk_scale must be positive");
  }
}

double RopeConfig::axis_base(int axis) const {
  if (axis == 0) return base;
  const double s = ntk_scale[static_cast<std::size_t>(axis - 1)];
  if (s == 1.0) return base;
  return ntk_rescaled_base(base, s, axis_split[static_cast<std::size_t>(axis)]);
}

double ntk_rescaled_base(double base, double scale, int d_axis) {
  if (d_axis < 4) throw ConfigError("ntk_rescaled_base: d_axis must be >= 4");
  if (!(scale >= 1.0)) throw ConfigError("ntk_rescaled_base: scale must be >= 1");
  if (scale == 1.0) return base;
  return base * std::pow(scale, static_cast<double>(d_axis) / (d_axis - 2));
}

std::vector<double> rope_angles(const RopeConfig& cfg, Position3 pos) {
  std::vector<double> angles;
  angles.reserve(static_cast<std::size_t>(cfg.head_dim / 2));
  const std::int64_t coord[3] = {pos.frame, pos.y, pos.x};
  for (int axis = 0; axis < 3; ++axis) {
    const int d = cfg.axis_split[static_cast<std::size_t>(axis)];
    const double b = cfg.axis_base(axis);
    for (int i = 0; i < d / 2; ++i) {
      const double inv_freq = std::pow(b, -2.0 * i / d);
      angles.push_back(static_cast<double>(coord[axis]) * inv_freq);
    }
  }
  return angles;
}

template <class T>
RopeTable<T> make_rope_table(const RopeConfig& cfg, std::span<const Position3> positions) {
  cfg.validate();
  RopeTable<T> table;
  table.pairs = static_cast<std::size_t>(cfg.head_dim / 2);
  table.cos.resize(positions.size() * table.pairs);
  table.sin.resize(positions.size() * table.pairs);

  // Per-axis inverse frequencies, shared by all positions.
  std::vector<double> inv_freq;
  std::vector<int> axis_of;
  for (int axis = 0; axis < 3; ++axis) {
    const int d = cfg.axis_split[static_cast<std::size_t>(axis)];
    const double b = cfg.axis_base(axis);
    for (int i = 0; i < d / 2; ++i) {
      inv_freq.push_back(std::pow(b, -2.0 * i / d));
      axis_of.push_back(axis);
    }
  }
  for (std::size_t p = 0; p < positions.size(); ++p) {
    const std::int64_t coord[3] = {positions[p].frame, positions[p].y, positions[p].x};
    for (std::size_t i = 0; i < table.pairs; ++i) {
      const double a = static_cast<double>(coord[axis_of[i]]) * inv_freq[i];
      table.cos[p * table.pairs + i] = static_cast<T>(std::cos(a));
      table.sin[p * table.pairs + i] = static_cast<T>(std::sin(a));
    }
  }
  return table;
}

template <class T>
void rope_apply(std::span<T> rows, const RopeTable<T>& table, std::size_t n_heads, bool inverse) {
  const std::size_t hd = 2 * table.pairs;
  const std::size_t n_pos = table.cos.size() / table.pairs;
  if (rows.size() != n_pos * n_heads * hd) throw ShapeError("rope_apply: row count mismatch");
  for (std::size_t p = 0; p < n_pos; ++p) {
    const T* c = table.cos.data() + p * table.pairs;
    const T* s = table.sin.data() + p * table.pairs;
    for (std::size_t h = 0; h < n_heads; ++h) {
      T* v = rows.data() + (p * n_heads + h) * hd;
      for (std::size_t i = 0; i < table.pairs; ++i) {
        const T sn = inverse ? -s[i] : s[i];
        const T a = v[2 * i], b = v[2 * i + 1];
        v[2 * i] = a * c[i] - b * sn;
        v[2 * i + 1] = a * sn + b * c[i];
      }
    }
  }
}

template <class T>
BasicTensor<T> rope_rotate(const BasicTensor<T>& v, Position3 pos, const RopeConfig& cfg) {
  if (v.dims().back() != static_cast<std::size_t>(cfg.head_dim)) {
    throw ShapeError("rope_rotate: innermost extent must equal head_dim");
  }
  const Position3 one[1] = {pos};
  const RopeTable<T> table = make_rope_table<T>(cfg, one);
  BasicTensor<T> out = v;
  rope_apply<T>(out.data(), table, v.size() / static_cast<std::size_t>(cfg.head_dim));
  return out;
}

template RopeTable<float> make_rope_table<float>(const RopeConfig&, std::span<const Position3>);
template RopeTable<double> make_rope_table<double>(const RopeConfig&, std::span<const Position3>);
template void rope_apply<float>(std::span<float>, const RopeTable<float>&, std::size_t, bool);
template void rope_apply<double>(std::span<double>, const RopeTable<double>&, std::size_t, bool);
template BasicTensor<float> rope_rotate<float>(const BasicTensor<float>&, Position3,
                                               const RopeConfig&);
template BasicTensor<double> rope_rotate<double>(const BasicTensor<double>&, Position3,
                                                 const RopeConfig&);

}  // namespace histream
