#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "histream/model.hpp"
#include "histream/rng.hpp"

namespace histream {

/// Procedural latent video: one Gaussian blob in channel 0 moving at constant
/// velocity and reflecting off the borders. Geometry lives in the unit
/// square, so the same video renders at either resolution.
struct SyntheticVideoSpec {
  int channels = 4;
  int low_h = 8;
  int low_w = 8;
  int chunk_frames = 3;
  int d_cond = 8;
  /// Per-axis velocity bound, unit square per frame.
  double speed_max = 0.08;
  /// Blob standard deviation range, unit square.
  double sigma_min = 0.10;
  double sigma_max = 0.16;
  double amplitude = 1.0;

  void validate() const;
  static SyntheticVideoSpec for_model(const ModelConfig& cfg);
  bool operator==(const SyntheticVideoSpec&) const = default;
};

struct BlobParams {
  double cx, cy, vx, vy, sigma;
};

/// Video parameters for `seed`. Centers start in [0.3, 0.7].
BlobParams blob_params(const SyntheticVideoSpec& spec, std::uint64_t seed);

/// Blob center at `frame`, folded back into [0, 1] on both axes.
std::array<double, 2> blob_center(const BlobParams& p, std::int64_t frame);

/// One frame [C x H x W] at the given resolution.
Tensor render_frame(const SyntheticVideoSpec& spec, const BlobParams& p, std::int64_t frame,
                    Resolution res);

struct SyntheticChunk {
  LatentChunk clean;
  /// d_cond entries: vx, vy, sigma (each scaled to about [-1, 1]), 1, then zeros.
  Tensor cond;
};

/// Frames [i*M, (i+1)*M) of video `seed`.
SyntheticChunk synth_chunk(const SyntheticVideoSpec& spec, std::uint64_t seed, int chunk_index,
                           Resolution res = Resolution::kLow);

enum class LossMode { kFm, kEps };

LossMode parse_loss_mode(const std::string& name);
const char* to_string(LossMode mode);

/// Noise draw for one training sample.
template <class T>
struct FlowSample {
  T t = T(0);
  BasicTensor<T> eps;
};

/// t ~ U(0, 1), redrawn while below `t_min`, then shifted; eps ~ N(0, I).
template <class T>
FlowSample<T> sample_flow(RngStream& rng, const Dims& dims, double shift, double t_min = 0.0);

/// Mean squared error between the displacement head and x0 - x_t, where
/// x_t = (1 - t) x0 + t eps. Adds parameter gradients into `grads` if given.
template <class T>
T fm_loss(const BasicDiT<T>& model, const BasicLatentChunk<T>& x0, std::span<const T> cond,
          std::span<const BasicLayerKV<T>> context, T attn_scale, const FlowSample<T>& sample,
          ModelParams<T>* grads);

/// Mean squared error between eps_hat = (x_t - (1 - t) x0_hat) / t and eps.
/// Requires t > 0.
template <class T>
T eps_loss(const BasicDiT<T>& model, const BasicLatentChunk<T>& x0, std::span<const T> cond,
           std::span<const BasicLayerKV<T>> context, T attn_scale, const FlowSample<T>& sample,
           ModelParams<T>* grads);

struct TrainConfig {
  int steps = 500;
  int batch = 2;
  double lr = 2e-3;
  LossMode loss = LossMode::kFm;
  double shift = 5.0;
  double t_min = 0.05;
  /// Training chunks are drawn from [0, max_chunk).
  int max_chunk = 4;
  /// Every n-th step is a high-resolution batch; 0 disables.
  int high_res_every = 10;
  double ema_decay = 0.9;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

class Adam {
 public:
  Adam(const ModelConfig& cfg, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ModelParams<float>& params, const ModelParams<float>& grads, double lr);
  int steps_taken() const { return t_; }

 private:
  double b1_, b2_, eps_;
  int t_ = 0;
  ModelParams<float> m_, v_;
};

struct LossPoint {
  int step = 0;
  double loss = 0.0;
  /// Bias-corrected exponential moving average.
  double ema = 0.0;
};

struct TrainResult {
  std::vector<LossPoint> curve;
  /// EMA after the first min(10, steps) steps.
  double initial_smoothed() const;
  double final_smoothed() const;
};

/// Adam on synthetic chunks. Sample b of step k draws everything from the
/// substream (kTrainSample, k, b). Chunks past the first see teacher-forced
/// context built from clean earlier chunks. Throws NumericError with the
/// step index on a non-finite loss.
TrainResult train(DiT& model, const TrainConfig& tc, const SyntheticVideoSpec& spec,
                  std::uint64_t seed, const std::function<void(const LossPoint&)>& on_step = {});

/// "step,loss,ema" rows.
std::string loss_csv(const std::vector<LossPoint>& curve);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t checked = 0;
};

/// Compares hand-written gradients of `mode`'s loss against f64 central
/// differences over every parameter element of a dense-initialised model.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(LossMode mode, const ModelConfig& cfg, std::uint64_t seed,
                           double h = 1e-4, double floor = 1e-6);

}  // namespace histream
