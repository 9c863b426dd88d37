#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "histream/mode.hpp"
#include "histream/model.hpp"

namespace histream {

/// Per-layer key/value context at two resolutions.
///
/// Chunks are numbered from 0. Both resolutions always retain the same frame
/// set. Under `kAgsw` the set after every committed chunk is the anchor
/// (frame 0) plus the last M-1 frames of the newest chunk; under
/// `kFullHistory` it is every generated frame. Evicted frames are dropped
/// from storage, so `byte_size()` measures real memory.
class DualKVCache {
 public:
  /// `dual = false` keeps only the high-resolution side.
  DualKVCache(CachePolicy policy, int n_layers, bool dual = true);

  CachePolicy policy() const { return policy_; }
  bool dual() const { return dual_; }
  bool empty() const { return retained_.empty(); }

  /// Stores the whole first chunk. Throws StateError if anything is cached.
  void append_first_chunk(std::vector<LayerKV> kv_low, std::vector<LayerKV> kv_high);

  /// Anchor-guided sliding window: keep frame 0 and kv[1:M] of chunk
  /// `chunk_index` (>= 1), drop everything else.
  void agsw_update(std::vector<LayerKV> kv_low, std::vector<LayerKV> kv_high, int chunk_index);

  /// Full-history append of chunk `chunk_index` (>= 1).
  void append_history(std::vector<LayerKV> kv_low, std::vector<LayerKV> kv_high,
                      int chunk_index);

  /// append_first_chunk for chunk 0, otherwise the policy's update.
  void commit(int chunk_index, std::vector<LayerKV> kv_low, std::vector<LayerKV> kv_high);

  /// Retained entries in ascending frame order, one per layer; empty when
  /// nothing is cached yet.
  std::span<const LayerKV> context_for(Resolution res) const;

  /// Restricts the retained frames to `keep`. Frames in `keep` that were
  /// already evicted are ignored; frames never generated raise ContractError.
  void apply_retention_mask(const std::set<std::int64_t>& keep);

  const std::vector<std::int64_t>& retained_frames() const { return retained_; }
  std::int64_t frames_generated() const { return generated_; }

  std::size_t byte_size(Resolution res) const;
  std::size_t byte_size() const;

  /// "key: value" lines: policy, retained, bytes_low, bytes_high, bytes_total.
  std::string dump() const;

 private:
  void check_incoming(const std::vector<LayerKV>& kv, Resolution res, bool required) const;
  void retain(std::span<const std::int64_t> frames);

  CachePolicy policy_;
  int n_layers_;
  bool dual_;
  std::vector<LayerKV> low_;
  std::vector<LayerKV> high_;
  std::vector<std::int64_t> retained_;
  std::int64_t generated_ = 0;
};

}  // namespace histream
