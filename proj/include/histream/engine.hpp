#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>

#include "histream/cache.hpp"
#include "histream/model.hpp"
#include "histream/report.hpp"
#include "histream/schedule.hpp"

namespace histream {

/// Returns the frames to keep before chunk `chunk_index` (>= 1) is denoised,
/// given how many frames exist so far.
using RetentionRule =
    std::function<std::set<std::int64_t>(int chunk_index, std::int64_t frames_generated)>;

/// Passed to `on_commit` once a chunk's output is final and the cache updated.
struct ChunkCommit {
  int chunk = 0;
  const LatentChunk& output;
  const DualKVCache& cache;
};

struct GenerationRequest {
  Mode mode = Mode::kHistream;
  int n_chunks = 1;
  std::uint64_t seed = 0;
  /// d_cond entries.
  Tensor cond;
  double shift = 7.0;
  std::optional<double> attn_scale_first_chunk;
  std::optional<double> attn_scale_rest;

  RetentionRule retention;
  /// Attention weights of every denoising forward (not cache passes).
  std::function<void(const AttentionView<float>&, int chunk, Resolution res)> on_attention;
  std::function<void(const ChunkCommit&)> on_commit;
};

struct GenerationResult {
  /// One high-resolution chunk per request chunk, frames contiguous from 0.
  std::vector<LatentChunk> chunks;
  RunReport report;
};

/// Chunk-wise autoregressive generation with dual-resolution caching,
/// anchor-guided sliding window and asymmetric step counts, per `req.mode`.
///
/// Per chunk: draw noise at the first phase's resolution, denoise the low
/// phase against the low cache, upsample x0_hat and renoise into the high
/// phase, denoise against the high cache, then write both caches from the
/// final high-resolution x0_hat (the low side through 2x2 average pooling).
/// Throws NumericError naming chunk and step on a non-finite x0_hat.
GenerationResult generate(const DiT& model, const GenerationRequest& req);

enum class ExportFormat { kHstn, kPgm };

ExportFormat parse_export_format(const std::string& name);

/// hstn: chunk_NNNN.hstn per chunk. pgm: frame_NNNN.pgm per frame, channel 0
/// min-max normalized per frame to 8 bits (constant frames map to 0).
void export_frames(const GenerationResult& result, const std::filesystem::path& dir,
                   ExportFormat format);

}  // namespace histream
