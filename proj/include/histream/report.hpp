#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "histream/mode.hpp"
#include "histream/model.hpp"

namespace histream {

struct ChunkStats {
  int chunk = 0;
  /// Wall clock for the chunk's denoise loop and cache write, excluding I/O.
  double latency_ms = 0.0;
  std::size_t forwards_low = 0;
  std::size_t forwards_high = 0;
  std::size_t kv_passes = 0;
  /// Matrix-product FLOPs counted inside the model during this chunk.
  std::uint64_t flops = 0;
  /// Cache bytes after this chunk was committed.
  std::size_t cache_bytes = 0;
};

/// Benchmark record for one generation run.
struct RunReport {
  Mode mode = Mode::kHistream;
  std::uint64_t config_hash = 0;
  std::vector<ChunkStats> chunks;

  std::size_t forwards(Resolution r) const;
  std::size_t total_forwards() const;
  std::uint64_t total_flops() const;
  double total_latency_ms() const;

  /// "key: value" lines.
  std::string to_text() const;
  /// Header "mode,chunk,latency_ms,forwards_low,forwards_high,flops,cache_bytes".
  std::string to_csv(bool header = true) const;
};

}  // namespace histream
