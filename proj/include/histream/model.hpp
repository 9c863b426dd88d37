#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "histream/rope.hpp"
#include "histream/tensor.hpp"

namespace histream {

enum class Resolution : std::uint8_t { kLow = 0, kHigh = 1 };

const char* to_string(Resolution r);

/// Shape and hyper-parameters of the toy denoiser.
struct ModelConfig {
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int mlp_hidden = 512;
  int latent_channels = 4;
  int low_h = 8;
  int low_w = 8;
  int chunk_frames = 3;
  int d_cond = 8;
  int t_embed_dim = 64;
  /// Low-resolution RoPE layout; `rope.ntk_scale` is the low-res scale.
  RopeConfig rope{};
  /// Spatial NTK factor used whenever the model runs at high resolution.
  double ntk_scale_high = 2.0;
  double attn_scale_first_chunk = 2.0;
  double attn_scale_rest = 1.0;

  int head_dim() const { return d_model / n_heads; }
  int high_h() const { return 2 * low_h; }
  int high_w() const { return 2 * low_w; }
  int height(Resolution r) const { return r == Resolution::kHigh ? high_h() : low_h; }
  int width(Resolution r) const { return r == Resolution::kHigh ? high_w() : low_w; }
  std::size_t tokens_per_frame(Resolution r) const {
    return static_cast<std::size_t>(height(r)) * static_cast<std::size_t>(width(r));
  }
  RopeConfig rope_for(Resolution r) const;
  Dims chunk_dims(Resolution r) const;

  void validate() const;

  /// d_model 128, 4 layers, 4 heads, C = 4, 8x8 -> 16x16, M = 3, d_cond = 8.
  static ModelConfig toy_default();
  /// Two-layer miniature used by gradient checks and fast unit tests.
  static ModelConfig micro();

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct BlockParams {
  BasicTensor<T> mod_w, mod_b;  // [d x 6d], [6d]: shift1 scale1 gate1 shift2 scale2 gate2
  BasicTensor<T> wq, bq, wk, bk, wv, bv, wo, bo;
  BasicTensor<T> mlp_w1, mlp_b1, mlp_w2, mlp_b2;

  bool operator==(const BlockParams&) const = default;
};

/// Every learnable tensor of the denoiser. Linear maps are stored [in x out].
template <class T>
struct ModelParams {
  BasicTensor<T> embed_w, embed_b;
  BasicTensor<T> temb_w1, temb_b1, temb_w2, temb_b2;
  std::vector<BlockParams<T>> blocks;
  BasicTensor<T> final_mod_w, final_mod_b;  // [d x 2d]: shift scale
  BasicTensor<T> head_w, head_b;

  static ModelParams zeros(const ModelConfig& cfg);

  /// Calls f(name, tensor) in a fixed order; names are checkpoint file stems.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  template <class U>
  ModelParams<U> cast() const;

  std::size_t parameter_count() const;
  bool operator==(const ModelParams&) const = default;

 private:
  template <class Self, class F>
  static void visit(Self& p, F& f) {
    f(std::string("embed.w"), p.embed_w);
    f(std::string("embed.b"), p.embed_b);
    f(std::string("temb.w1"), p.temb_w1);
    f(std::string("temb.b1"), p.temb_b1);
    f(std::string("temb.w2"), p.temb_w2);
    f(std::string("temb.b2"), p.temb_b2);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
      auto& b = p.blocks[l];
      const std::string pre = "blocks." + std::to_string(l) + ".";
      f(pre + "mod.w", b.mod_w);
      f(pre + "mod.b", b.mod_b);
      f(pre + "wq", b.wq);
      f(pre + "bq", b.bq);
      f(pre + "wk", b.wk);
      f(pre + "bk", b.bk);
      f(pre + "wv", b.wv);
      f(pre + "bv", b.bv);
      f(pre + "wo", b.wo);
      f(pre + "bo", b.bo);
      f(pre + "mlp.w1", b.mlp_w1);
      f(pre + "mlp.b1", b.mlp_b1);
      f(pre + "mlp.w2", b.mlp_w2);
      f(pre + "mlp.b2", b.mlp_b2);
    }
    f(std::string("final.mod.w"), p.final_mod_w);
    f(std::string("final.mod.b"), p.final_mod_b);
    f(std::string("head.w"), p.head_w);
    f(std::string("head.b"), p.head_b);
  }
};

enum class InitMode {
  /// Scaled-normal projections with zeroed modulation and output head, so
  /// every block starts as the identity and the head predicts zero.
  kAdaLnZero,
  /// Every tensor random; exercises all gradient paths.
  kDense,
};

ModelParams<float> init_params(const ModelConfig& cfg, std::uint64_t seed,
                               InitMode mode = InitMode::kAdaLnZero);

/// M consecutive latent frames at one resolution.
template <class T>
struct BasicLatentChunk {
  BasicTensor<T> frames;  // [M x C x H x W]
  Resolution res = Resolution::kLow;
  std::int64_t start_frame = 0;

  std::size_t frame_count() const { return frames.dim(0); }
};
using LatentChunk = BasicLatentChunk<float>;

/// Cached keys (post-RoPE) and values of one layer for a run of frames.
/// Keys and values are [frames x tokens_per_frame x n_heads x head_dim].
template <class T>
struct BasicLayerKV {
  Resolution res = Resolution::kLow;
  BasicTensor<T> keys;
  BasicTensor<T> values;
  std::vector<std::int64_t> frames;

  bool empty() const { return frames.empty(); }
  std::size_t frame_count() const { return frames.size(); }
  std::size_t tokens_per_frame() const { return empty() ? 0 : keys.dim(1); }
  std::size_t token_count() const { return frame_count() * tokens_per_frame(); }
  std::size_t byte_size() const { return (keys.size() + values.size()) * sizeof(T); }

  /// Entries for `keep` (a subset of `frames`), in the order given.
  BasicLayerKV select(std::span<const std::int64_t> keep) const;
  /// Frames of `a` followed by frames of `b`.
  static BasicLayerKV concat(const BasicLayerKV& a, const BasicLayerKV& b);

  bool operator==(const BasicLayerKV&) const = default;
};
using LayerKV = BasicLayerKV<float>;

/// Softmax weights of one (layer, head) attention. Row q is query token q of
/// the current chunk; column k is key token k of [context | chunk]. Token
/// `i` of either side belongs to frame `frames[i / tokens_per_frame]`.
template <class T>
struct AttentionView {
  int layer = 0;
  int head = 0;
  std::span<const T> weights;
  std::size_t n_query = 0;
  std::size_t n_key = 0;
  std::size_t tokens_per_frame = 0;
  std::span<const std::int64_t> query_frames;
  std::span<const std::int64_t> key_frames;
};

/// Optional instrumentation for a forward pass.
template <class T>
struct ForwardProbe {
  /// Incremented by 2*m*k*n at every matrix product the pass performs.
  std::uint64_t* flops = nullptr;
  std::function<void(const AttentionView<T>&)> on_attention;
  /// Receives the chunk's own per-layer keys/values as computed inside forward.
  std::vector<BasicLayerKV<T>>* chunk_kv = nullptr;
};

/// Tokens of a chunk after the 1x1 patch embedding.
template <class T>
struct TokenSequence {
  BasicTensor<T> features;  // [M*H*W x d_model]
  std::vector<Position3> positions;
};

/// The toy denoiser: chunk-attention transformer with adaLN conditioning,
/// 3D RoPE and a displacement head (x0_hat = x_t + displacement).
template <class T>
class BasicDiT {
 public:
  BasicDiT(ModelConfig cfg, ModelParams<T> params);

  const ModelConfig& config() const { return cfg_; }
  const ModelParams<T>& params() const { return params_; }
  ModelParams<T>& params() { return params_; }

  TokenSequence<T> tokenize(const BasicLatentChunk<T>& chunk) const;

  /// x0_hat for a noisy chunk. Queries come from the chunk; keys and values
  /// are [context | chunk]. `context` holds one entry per layer, or is empty.
  BasicLatentChunk<T> forward(const BasicLatentChunk<T>& x_t, T t, std::span<const T> cond,
                              std::span<const BasicLayerKV<T>> context, T attn_scale,
                              ForwardProbe<T>* probe = nullptr) const;

  /// Raw displacement head output, [M x C x H x W].
  BasicTensor<T> displacement(const BasicLatentChunk<T>& x_t, T t, std::span<const T> cond,
                              std::span<const BasicLayerKV<T>> context, T attn_scale,
                              ForwardProbe<T>* probe = nullptr) const;

  /// Per-layer keys/values of a finished chunk, run at t = 0 with unit
  /// attention scale. Stops after the last layer's key/value projections.
  std::vector<BasicLayerKV<T>> forward_kv(const BasicLatentChunk<T>& clean,
                                          std::span<const T> cond,
                                          std::span<const BasicLayerKV<T>> context,
                                          ForwardProbe<T>* probe = nullptr) const;

  /// Receives the displacement and must return the scalar loss, filling
  /// `d_displacement` with dLoss/dDisplacement (same layout).
  using LossFn = std::function<T(const BasicTensor<T>& displacement,
                                 BasicTensor<T>& d_displacement)>;

  /// One forward/backward pass. Context is treated as a constant. Parameter
  /// gradients are added into `grads`; returns the loss.
  T loss_and_grad(const BasicLatentChunk<T>& x_t, T t, std::span<const T> cond,
                  std::span<const BasicLayerKV<T>> context, T attn_scale, const LossFn& loss,
                  ModelParams<T>& grads) const;

 private:
  struct Tape;
  BasicTensor<T> run(const BasicLatentChunk<T>& x, T t, std::span<const T> cond,
                     std::span<const BasicLayerKV<T>> context, T attn_scale,
                     ForwardProbe<T>* probe, Tape* tape,
                     std::vector<BasicLayerKV<T>>* kv_out) const;
  void check_context(const BasicLatentChunk<T>& x,
                     std::span<const BasicLayerKV<T>> context) const;

  ModelConfig cfg_;
  ModelParams<T> params_;
};

using DiT = BasicDiT<float>;

extern template class BasicDiT<float>;
extern template class BasicDiT<double>;

}  // namespace histream
