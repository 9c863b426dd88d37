#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "histream/mode.hpp"
#include "histream/model.hpp"
#include "histream/tensor.hpp"

namespace histream {

/// s*t / (1 + (s-1)*t). Fixes 0 and 1 and is strictly increasing on [0, 1];
/// s and 1/s are mutual inverses. Throws ContractError for t outside [0, 1]
/// or s <= 0.
double shift_timestep(double t, double s);

struct Phase {
  Resolution res = Resolution::kHigh;
  /// Shifted timesteps, strictly decreasing.
  std::vector<double> timesteps;
};

struct ChunkPlan {
  /// Low phase (if any) first, then the high phase.
  std::vector<Phase> phases;

  std::size_t steps(Resolution r) const;
  std::size_t total_steps() const;
};

struct DenoisePlan {
  Mode mode = Mode::kHistream;
  double shift = 7.0;
  std::vector<ChunkPlan> chunks;

  /// Model forwards across all chunks at one resolution.
  std::size_t forwards(Resolution r) const;
  std::size_t total_forwards() const;

  /// One row per (chunk, phase): "chunk phase resolution t..." for golden files.
  std::string to_table() const;
};

/// Four raw steps {1, 0.75, 0.5, 0.25} split 2 low / 2 high, or two raw steps
/// {1, 0.5} split 1 / 1, per mode; shifted by `shift`.
DenoisePlan make_plan(Mode mode, int n_chunks, double shift);

/// Rectified-flow renoising (1 - t) * x0 + t * eps.
template <class T>
BasicTensor<T> renoise_psi(const BasicTensor<T>& x0, const BasicTensor<T>& eps, T t);

}  // namespace histream
