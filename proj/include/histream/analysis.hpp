#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "histream/engine.hpp"

namespace histream {

/// Closed-form matrix-product FLOPs for one chunk, matching the counters in
/// the model: 2*m*k*n per linear, 2*q*kv*d each for attention scores and the
/// value mix, plus the cache-write passes.
std::vector<std::uint64_t> analytic_flops(const ModelConfig& cfg, const DenoisePlan& plan);

/// FLOPs of one denoising forward at `res` with `context_frames` cached frames.
std::uint64_t forward_flops(const ModelConfig& cfg, Resolution res, std::size_t context_frames);

/// FLOPs of one cache-write pass.
std::uint64_t kv_pass_flops(const ModelConfig& cfg, Resolution res, std::size_t context_frames);

/// Attention score FLOPs (q k^T only, all layers) of one forward.
std::uint64_t attention_score_flops(const ModelConfig& cfg, Resolution res,
                                    std::size_t context_frames);

/// Attention mass per (layer, head, query frame) onto each key frame,
/// averaged over query tokens and over every recorded forward. Rows sum to 1.
class AttnStats {
 public:
  struct Row {
    int layer;
    int head;
    std::int64_t query_frame;
    std::int64_t context_frame;
    double mass;
  };

  void record(const AttentionView<float>& view);
  /// Mean-aggregated rows sorted by (layer, head, query_frame, context_frame).
  std::vector<Row> rows() const;
  /// Key frames ordered by mean mass over all rows, largest first.
  std::vector<std::pair<std::int64_t, double>> frame_ranking() const;
  /// Header "layer,head,query_frame,context_frame,mass".
  std::string to_csv() const;

 private:
  struct Acc {
    std::vector<std::int64_t> frames;
    std::vector<double> sums;
    std::size_t count = 0;
  };
  std::vector<std::pair<std::array<std::int64_t, 3>, Acc>> acc_;
};

/// Runs `n_chunks` of `mode` and records attention of every denoising
/// forward. Throws ContractError for modes with anchor + window retention,
/// which hide the intermediate frames the statistic compares against.
AttnStats attn_sink_stats(const DiT& model, Mode mode, int n_chunks, std::uint64_t seed,
                          const Tensor& cond, double shift = 7.0);

/// Named retention masks for the frame-drop ablation.
///  keep_all     every generated frame
///  drop_anchor  everything except frame 0
///  drop_mid     everything except frame 1
///  agsw         frame 0 plus the last M-1 generated frames
RetentionRule retention_mask(const std::string& id, const ModelConfig& cfg);

struct DropRow {
  std::string mask_id;
  int chunk;
  double mse;
};

/// Generates under full history with and without each mask applied before
/// every chunk, and reports per-chunk latent MSE against the unmasked run.
std::vector<DropRow> frame_drop_ablation(const DiT& model, std::uint64_t seed, int n_chunks,
                                         const std::vector<std::string>& masks,
                                         const Tensor& cond, double shift = 7.0);

/// Header "mask_id,chunk,mse".
std::string drop_csv(const std::vector<DropRow>& rows);

struct BenchConfig {
  std::vector<Mode> modes{Mode::kBaselineFull, Mode::kHistream, Mode::kHistreamPlus};
  int n_chunks = 7;
  int repeats = 3;
  /// Discarded runs before timing.
  int warmup = 1;

  void validate() const;
  bool operator==(const BenchConfig&) const = default;
};

struct BenchResult {
  /// One report per mode; latency is the per-chunk median over repeats.
  std::vector<RunReport> reports;
  /// bench.csv content.
  std::string csv() const;
  /// Per-mode totals with speedups against baseline_full when present.
  std::string table() const;
};

BenchResult bench(const DiT& model, const BenchConfig& bc, std::uint64_t seed,
                  const Tensor& cond, double shift = 7.0);

}  // namespace histream
