#include "histream/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "histream/error.hpp"
#include "histream/kernels.hpp"
#include "histream/rng.hpp"

namespace histream {

const char* to_string(Resolution r) { return r == Resolution::kHigh ? "high" : "low"; }

// ---------------------------------------------------------------------------
// ModelConfig

RopeConfig ModelConfig::rope_for(Resolution r) const {
  return r == Resolution::kHigh ? rope.with_ntk_scale(ntk_scale_high) : rope;
}

Dims ModelConfig::chunk_dims(Resolution r) const {
  return {static_cast<std::size_t>(chunk_frames), static_cast<std::size_t>(latent_channels),
          static_cast<std::size_t>(height(r)), static_cast<std::size_t>(width(r))};
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(mlp_hidden, "mlp_hidden");
  positive(latent_channels, "latent_channels");
  positive(low_h, "low_h");
  positive(low_w, "low_w");
  positive(d_cond, "d_cond");
  positive(t_embed_dim, "t_embed_dim");
  if (d_model % n_heads != 0) throw ConfigError("model.d_model must be divisible by n_heads");
  if (chunk_frames < 2) throw ConfigError("model.chunk_frames must be >= 2");
  if (t_embed_dim % 2 != 0) throw ConfigError("model.t_embed_dim must be even");
  if (rope.head_dim != head_dim()) throw ConfigError("model.rope.head_dim must equal d_model/n_heads");
  rope.validate();
  if (rope.axis_split[1] < 4 || rope.axis_split[2] < 4) {
    throw ConfigError("model.rope: spatial sub-dims must be >= 4 for NTK rescaling");
  }
  if (!(ntk_scale_high >= 1.0)) throw ConfigError("model.ntk_scale_high must be >= 1");
  if (!(attn_scale_first_chunk > 0) || !(attn_scale_rest > 0)) {
    throw ConfigError("model attention scales must be positive");
  }
}

ModelConfig ModelConfig::toy_default() {
  ModelConfig c;
  c.rope.head_dim = c.head_dim();
  c.rope.axis_split = RopeConfig::default_split(c.rope.head_dim);
  return c;
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.d_model = 32;
  c.n_layers = 2;
  c.n_heads = 2;
  c.mlp_hidden = 32;
  c.latent_channels = 2;
  c.low_h = 2;
  c.low_w = 2;
  c.chunk_frames = 2;
  c.d_cond = 3;
  c.t_embed_dim = 8;
  c.rope.head_dim = c.head_dim();
  c.rope.axis_split = RopeConfig::default_split(c.rope.head_dim);
  return c;
}

// ---------------------------------------------------------------------------
// ModelParams

template <class T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto c = static_cast<std::size_t>(cfg.latent_channels);
  const auto hid = static_cast<std::size_t>(cfg.mlp_hidden);
  const auto zin = static_cast<std::size_t>(cfg.t_embed_dim + cfg.d_cond);
  ModelParams p;
  p.embed_w = BasicTensor<T>({c, d});
  p.embed_b = BasicTensor<T>({d});
  p.temb_w1 = BasicTensor<T>({zin, d});
  p.temb_b1 = BasicTensor<T>({d});
  p.temb_w2 = BasicTensor<T>({d, d});
  p.temb_b2 = BasicTensor<T>({d});
  p.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& b : p.blocks) {
    b.mod_w = BasicTensor<T>({d, 6 * d});
    b.mod_b = BasicTensor<T>({6 * d});
    for (auto* w : {&b.wq, &b.wk, &b.wv, &b.wo}) *w = BasicTensor<T>({d, d});
    for (auto* v : {&b.bq, &b.bk, &b.bv, &b.bo}) *v = BasicTensor<T>({d});
    b.mlp_w1 = BasicTensor<T>({d, hid});
    b.mlp_b1 = BasicTensor<T>({hid});
    b.mlp_w2 = BasicTensor<T>({hid, d});
    b.mlp_b2 = BasicTensor<T>({d});
  }
  p.final_mod_w = BasicTensor<T>({d, 2 * d});
  p.final_mod_b = BasicTensor<T>({2 * d});
  p.head_w = BasicTensor<T>({d, c});
  p.head_b = BasicTensor<T>({c});
  return p;
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  out.blocks.resize(blocks.size());
  std::vector<const BasicTensor<T>*> src;
  for_each([&](const std::string&, const BasicTensor<T>& t) { src.push_back(&t); });
  std::size_t i = 0;
  out.for_each([&](const std::string&, BasicTensor<U>& t) { t = src[i++]->template cast<U>(); });
  return out;
}

template <class T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const BasicTensor<T>& t) { n += t.size(); });
  return n;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;

ModelParams<float> init_params(const ModelConfig& cfg, std::uint64_t seed, InitMode mode) {
  ModelParams<float> p = ModelParams<float>::zeros(cfg);
  const Rng rng(seed);
  std::uint64_t index = 0;
  p.for_each([&](const std::string& name, Tensor& t) {
    const std::uint64_t key = stream_key(StreamTag::kWeightInit, index++);
    const bool is_bias = t.rank() == 1;
    const bool zero_init = name.find("mod.") != std::string::npos || name.rfind("head.", 0) == 0;
    float std = 0.0f;
    if (mode == InitMode::kDense) {
      std = is_bias ? 0.1f : 1.0f / std::sqrt(static_cast<float>(t.dim(0)));
    } else if (!is_bias && !zero_init) {
      std = 1.0f / std::sqrt(static_cast<float>(t.dim(0)));
    }
    if (std == 0.0f) return;
    const Tensor z = gaussian(rng, key, t.dims());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std * z[i];
  });
  return p;
}

// ---------------------------------------------------------------------------
// LayerKV

template <class T>
BasicLayerKV<T> BasicLayerKV<T>::select(std::span<const std::int64_t> keep) const {
  BasicLayerKV out;
  out.res = res;
  if (keep.empty()) return out;
  const std::size_t row = keys.size() / frames.size();
  std::vector<T> k, v;
  k.reserve(row * keep.size());
  v.reserve(row * keep.size());
  for (std::int64_t f : keep) {
    const auto it = std::find(frames.begin(), frames.end(), f);
    if (it == frames.end()) {
      throw ContractError("LayerKV::select: frame " + std::to_string(f) + " is not cached");
    }
    const auto i = static_cast<std::size_t>(it - frames.begin());
    k.insert(k.end(), keys.storage().begin() + i * row, keys.storage().begin() + (i + 1) * row);
    v.insert(v.end(), values.storage().begin() + i * row,
             values.storage().begin() + (i + 1) * row);
    out.frames.push_back(f);
  }
  Dims dims = keys.dims();
  dims[0] = keep.size();
  out.keys = BasicTensor<T>(dims, std::move(k));
  out.values = BasicTensor<T>(dims, std::move(v));
  return out;
}

template <class T>
BasicLayerKV<T> BasicLayerKV<T>::concat(const BasicLayerKV& a, const BasicLayerKV& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.res != b.res || a.keys.dim(1) != b.keys.dim(1)) {
    throw ContractError("LayerKV::concat: resolution mismatch");
  }
  BasicLayerKV out;
  out.res = a.res;
  out.frames = a.frames;
  out.frames.insert(out.frames.end(), b.frames.begin(), b.frames.end());
  auto join = [](const BasicTensor<T>& x, const BasicTensor<T>& y) {
    std::vector<T> data(x.storage());
    data.insert(data.end(), y.storage().begin(), y.storage().end());
    Dims dims = x.dims();
    dims[0] += y.dim(0);
    return BasicTensor<T>(dims, std::move(data));
  };
  out.keys = join(a.keys, b.keys);
  out.values = join(a.values, b.values);
  return out;
}

template struct BasicLayerKV<float>;
template struct BasicLayerKV<double>;

// ---------------------------------------------------------------------------
// Denoiser

namespace {

template <class T>
using Buf = std::vector<T>;

template <class T>
std::span<const T> cspan(const Buf<T>& v) {
  return {v.data(), v.size()};
}

template <class T>
T silu(T x) {
  return x / (T(1) + std::exp(-x));
}

template <class T>
T silu_grad(T x) {
  const T s = T(1) / (T(1) + std::exp(-x));
  return s * (T(1) + x * (T(1) - s));
}

constexpr double kGeluK = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

template <class T>
T gelu(T x) {
  const T inner = T(kGeluK) * (x + T(kGeluC) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(inner));
}

template <class T>
T gelu_grad(T x) {
  const T inner = T(kGeluK) * (x + T(kGeluC) * x * x * x);
  const T th = std::tanh(inner);
  return T(0.5) * (T(1) + th) +
         T(0.5) * x * (T(1) - th * th) * T(kGeluK) * (T(1) + T(3 * kGeluC) * x * x);
}

void add_flops(std::uint64_t* counter, std::size_t m, std::size_t k, std::size_t n) {
  if (counter) *counter += 2ull * m * k * n;
}

/// y[rows x out] = x[rows x in] * W + b
template <class T>
Buf<T> linear(std::span<const T> x, const BasicTensor<T>& w, const BasicTensor<T>& b,
              std::size_t rows, std::uint64_t* flops) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  Buf<T> y(rows * out);
  kernels::matmul<T>(x, w.data(), y, rows, in, out);
  add_flops(flops, rows, in, out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < out; ++j) y[r * out + j] += b[j];
  return y;
}

/// Accumulates dW += x^T dy and db += colsum(dy); returns dy W^T when asked.
template <class T>
Buf<T> linear_backward(std::span<const T> x, const BasicTensor<T>& w, std::span<const T> dy,
                       std::size_t rows, BasicTensor<T>& dw, BasicTensor<T>& db, bool want_dx) {
  const std::size_t in = w.dim(0), out = w.dim(1);
  Buf<T> xt(in * rows), g(in * out);
  kernels::transpose<T>(x, xt, rows, in);
  kernels::matmul<T>(cspan(xt), dy, g, in, rows, out);
  for (std::size_t i = 0; i < in * out; ++i) dw[i] += g[i];
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < out; ++j) db[j] += dy[r * out + j];
  if (!want_dx) return {};
  Buf<T> wt(out * in), dx(rows * in);
  kernels::transpose<T>(w.data(), wt, in, out);
  kernels::matmul<T>(dy, cspan(wt), dx, rows, out, in);
  return dx;
}

/// y = n * (1 + scale) + shift, broadcast over rows.
template <class T>
Buf<T> modulate(const Buf<T>& n, const T* shift, const T* scale, std::size_t rows,
                std::size_t d) {
  Buf<T> y(rows * d);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j)
      y[r * d + j] = n[r * d + j] * (T(1) + scale[j]) + shift[j];
  return y;
}

/// Backward of `modulate`: accumulates dshift/dscale, returns dn.
template <class T>
Buf<T> modulate_backward(const Buf<T>& dy, const Buf<T>& n, const T* scale, T* dshift,
                         T* dscale, std::size_t rows, std::size_t d) {
  Buf<T> dn(rows * d);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      const T g = dy[r * d + j];
      dshift[j] += g;
      dscale[j] += g * n[r * d + j];
      dn[r * d + j] = g * (T(1) + scale[j]);
    }
  return dn;
}

/// Backward of row-wise layer norm given normalized output and 1/std.
template <class T>
void layernorm_backward_add(const Buf<T>& dn, const Buf<T>& n, const Buf<T>& rstd,
                            std::size_t rows, std::size_t d, Buf<T>& dx) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* g = dn.data() + r * d;
    const T* nr = n.data() + r * d;
    T mg = 0, mgn = 0;
    for (std::size_t j = 0; j < d; ++j) {
      mg += g[j];
      mgn += g[j] * nr[j];
    }
    mg /= T(d);
    mgn /= T(d);
    for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += rstd[r] * (g[j] - mg - nr[j] * mgn);
  }
}

/// Lays a [M x C x H x W] chunk out as [M*H*W x C] token rows with positions.
template <class T>
void gather_tokens(const ModelConfig& cfg, const BasicLatentChunk<T>& chunk, Buf<T>& x_in,
                   std::vector<Position3>& positions) {
  const Dims want = cfg.chunk_dims(chunk.res);
  if (chunk.frames.dims() != want) {
    throw ShapeError("chunk extents " + dims_to_string(chunk.frames.dims()) + " do not match " +
                     to_string(chunk.res) + "-res config " + dims_to_string(want));
  }
  const std::size_t m = want[0], c = want[1], h = want[2], w = want[3];
  x_in.assign(m * h * w * c, T(0));
  positions.clear();
  positions.reserve(m * h * w);
  for (std::size_t f = 0; f < m; ++f)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t tok = (f * h + y) * w + x;
        for (std::size_t ch = 0; ch < c; ++ch)
          x_in[tok * c + ch] = chunk.frames[((f * c + ch) * h + y) * w + x];
        positions.push_back({chunk.start_frame + static_cast<std::int64_t>(f),
                             static_cast<std::int64_t>(y), static_cast<std::int64_t>(x)});
      }
}

}  // namespace

template <class T>
struct BasicDiT<T>::Tape {
  struct Block {
    Buf<T> n1, rstd1, a, qr, kr, v, probs, attn, o, n2, rstd2, b, u, g, m;
  };
  Buf<T> x_in, z0, c1, a1, c_emb, s, fmod, nf, rstdf, af;
  std::vector<Buf<T>> mods;
  std::vector<Block> blocks;
  RopeTable<T> rope;
  std::size_t n_tokens = 0;
  std::size_t n_ctx = 0;
};

template <class T>
BasicDiT<T>::BasicDiT(ModelConfig cfg, ModelParams<T> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  if (params_.blocks.size() != static_cast<std::size_t>(cfg_.n_layers)) {
    throw ConfigError("model parameters do not match n_layers");
  }
  const ModelParams<T> ref = ModelParams<T>::zeros(cfg_);
  std::vector<Dims> want;
  ref.for_each([&](const std::string&, const BasicTensor<T>& t) { want.push_back(t.dims()); });
  std::size_t i = 0;
  params_.for_each([&](const std::string& name, const BasicTensor<T>& t) {
    if (t.dims() != want[i++]) {
      throw ConfigError("parameter " + name + " has extents " + dims_to_string(t.dims()));
    }
  });
}

template <class T>
TokenSequence<T> BasicDiT<T>::tokenize(const BasicLatentChunk<T>& chunk) const {
  Buf<T> x_in;
  TokenSequence<T> seq;
  gather_tokens(cfg_, chunk, x_in, seq.positions);
  const std::size_t n = seq.positions.size();
  Buf<T> feats = linear<T>(cspan(x_in), params_.embed_w, params_.embed_b, n, nullptr);
  seq.features = BasicTensor<T>({n, static_cast<std::size_t>(cfg_.d_model)}, std::move(feats));
  return seq;
}

template <class T>
void BasicDiT<T>::check_context(const BasicLatentChunk<T>& x,
                                std::span<const BasicLayerKV<T>> context) const {
  if (context.empty()) return;
  if (context.size() != static_cast<std::size_t>(cfg_.n_layers)) {
    throw ContractError("context must hold one LayerKV per layer");
  }
  const std::vector<std::int64_t>& frames = context[0].frames;
  for (const auto& kv : context) {
    if (kv.frames != frames) throw ContractError("context layers disagree on cached frames");
    if (kv.empty()) continue;
    if (kv.res != x.res) {
      throw ContractError(std::string("context resolution ") + to_string(kv.res) +
                          " does not match chunk resolution " + to_string(x.res));
    }
    if (kv.tokens_per_frame() != cfg_.tokens_per_frame(x.res)) {
      throw ContractError("context tokens per frame do not match the chunk");
    }
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i] <= frames[i - 1]) throw ContractError("context frames must be increasing");
  }
  if (!frames.empty() && frames.back() >= x.start_frame) {
    throw ContractError("context frames must precede the chunk");
  }
}

template <class T>
BasicTensor<T> BasicDiT<T>::run(const BasicLatentChunk<T>& x, T t, std::span<const T> cond,
                                std::span<const BasicLayerKV<T>> context, T attn_scale,
                                ForwardProbe<T>* probe, Tape* tape,
                                std::vector<BasicLayerKV<T>>* kv_out) const {
  check_context(x, context);
  if (cond.size() != static_cast<std::size_t>(cfg_.d_cond)) {
    throw ShapeError("condition vector must have d_cond entries");
  }
  const ModelParams<T>& P = params_;
  const bool kv_only = kv_out != nullptr;
  std::uint64_t* flops = probe ? probe->flops : nullptr;

  const std::size_t d = static_cast<std::size_t>(cfg_.d_model);
  const std::size_t heads = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t hd = static_cast<std::size_t>(cfg_.head_dim());
  const std::size_t layers = static_cast<std::size_t>(cfg_.n_layers);
  const std::size_t hid = static_cast<std::size_t>(cfg_.mlp_hidden);
  const std::size_t ch = static_cast<std::size_t>(cfg_.latent_channels);
  const std::size_t m = x.frame_count();
  const std::size_t tpf = cfg_.tokens_per_frame(x.res);
  const std::size_t n = m * tpf;
  const std::size_t n_ctx = context.empty() ? 0 : context[0].token_count();
  const std::size_t n_key = n_ctx + n;

  // Token embedding (1x1 patches).
  Buf<T> x_in;
  std::vector<Position3> positions;
  gather_tokens(cfg_, x, x_in, positions);
  const Dims want = cfg_.chunk_dims(x.res);
  const std::size_t hh = want[2], ww = want[3];
  Buf<T> h = linear<T>(cspan(x_in), P.embed_w, P.embed_b, n, flops);

  // Timestep + condition embedding; s = silu(c_emb) drives every modulation.
  const std::size_t te = static_cast<std::size_t>(cfg_.t_embed_dim);
  Buf<T> z0(te + cond.size());
  for (std::size_t k = 0; k < te / 2; ++k) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / (te / 2));
    const double arg = 1000.0 * static_cast<double>(t) * freq;
    z0[k] = static_cast<T>(std::cos(arg));
    z0[te / 2 + k] = static_cast<T>(std::sin(arg));
  }
  std::copy(cond.begin(), cond.end(), z0.begin() + static_cast<std::ptrdiff_t>(te));
  Buf<T> c1 = linear<T>(cspan(z0), P.temb_w1, P.temb_b1, 1, flops);
  Buf<T> a1(d);
  for (std::size_t j = 0; j < d; ++j) a1[j] = silu(c1[j]);
  Buf<T> c_emb = linear<T>(cspan(a1), P.temb_w2, P.temb_b2, 1, flops);
  Buf<T> s(d);
  for (std::size_t j = 0; j < d; ++j) s[j] = silu(c_emb[j]);

  const RopeTable<T> rope = make_rope_table<T>(cfg_.rope_for(x.res), positions);
  const T logit_scale = attn_scale / std::sqrt(static_cast<T>(hd));

  std::vector<std::int64_t> query_frames(m);
  for (std::size_t f = 0; f < m; ++f) query_frames[f] = x.start_frame + static_cast<std::int64_t>(f);
  std::vector<std::int64_t> key_frames = context.empty() ? std::vector<std::int64_t>{}
                                                         : context[0].frames;
  key_frames.insert(key_frames.end(), query_frames.begin(), query_frames.end());

  if (tape) {
    tape->blocks.resize(layers);
    tape->mods.resize(layers);
    tape->n_tokens = n;
    tape->n_ctx = n_ctx;
  }
  const Dims kv_dims{m, tpf, heads, hd};

  Buf<T> qh(n * hd), kt(hd * n_key), vh(n_key * hd), scores(n * n_key), oh(n * hd);
  for (std::size_t l = 0; l < layers; ++l) {
    const BlockParams<T>& B = P.blocks[l];
    Buf<T> mod = linear<T>(cspan(s), B.mod_w, B.mod_b, 1, flops);
    const T* shift1 = mod.data();
    const T* scale1 = mod.data() + d;
    const T* gate1 = mod.data() + 2 * d;
    const T* shift2 = mod.data() + 3 * d;
    const T* scale2 = mod.data() + 4 * d;
    const T* gate2 = mod.data() + 5 * d;

    Buf<T> n1(n * d), rstd1(n);
    kernels::layernorm_rows<T>(cspan(h), n1, rstd1, n, d, T(1e-6));
    Buf<T> a = modulate(n1, shift1, scale1, n, d);

    Buf<T> k = linear<T>(cspan(a), B.wk, B.bk, n, flops);
    Buf<T> v = linear<T>(cspan(a), B.wv, B.bv, n, flops);
    rope_apply<T>(k, rope, heads);

    if (kv_out || (probe && probe->chunk_kv)) {
      BasicLayerKV<T> kv;
      kv.res = x.res;
      kv.keys = BasicTensor<T>(kv_dims, k);
      kv.values = BasicTensor<T>(kv_dims, v);
      kv.frames = query_frames;
      if (probe && probe->chunk_kv) probe->chunk_kv->push_back(kv);
      if (kv_out) kv_out->push_back(std::move(kv));
    }
    if (kv_only && l + 1 == layers) break;

    Buf<T> q = linear<T>(cspan(a), B.wq, B.bq, n, flops);
    rope_apply<T>(q, rope, heads);

    // Attention: queries from the chunk, keys/values over [context | chunk].
    Buf<T> attn(n * d);
    Buf<T> probs_all;
    if (tape) probs_all.resize(heads * n * n_key);
    const T* ctx_k = n_ctx ? context[l].keys.data().data() : nullptr;
    const T* ctx_v = n_ctx ? context[l].values.data().data() : nullptr;
    for (std::size_t hix = 0; hix < heads; ++hix) {
      const std::size_t off = hix * hd;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hd; ++j) qh[i * hd + j] = q[i * d + off + j];
      for (std::size_t i = 0; i < n_ctx; ++i)
        for (std::size_t j = 0; j < hd; ++j) {
          kt[j * n_key + i] = ctx_k[i * d + off + j];
          vh[i * hd + j] = ctx_v[i * d + off + j];
        }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hd; ++j) {
          kt[j * n_key + n_ctx + i] = k[i * d + off + j];
          vh[(n_ctx + i) * hd + j] = v[i * d + off + j];
        }
      kernels::matmul<T>(cspan(qh), cspan(kt), scores, n, hd, n_key);
      add_flops(flops, n, hd, n_key);
      for (T& sc : scores) sc *= logit_scale;
      kernels::softmax_rows<T>(scores, n, n_key);
      if (probe && probe->on_attention) {
        AttentionView<T> view;
        view.layer = static_cast<int>(l);
        view.head = static_cast<int>(hix);
        view.weights = cspan(scores);
        view.n_query = n;
        view.n_key = n_key;
        view.tokens_per_frame = tpf;
        view.query_frames = query_frames;
        view.key_frames = key_frames;
        probe->on_attention(view);
      }
      if (tape) std::copy(scores.begin(), scores.end(), probs_all.begin() + hix * n * n_key);
      kernels::matmul<T>(cspan(scores), cspan(vh), oh, n, n_key, hd);
      add_flops(flops, n, n_key, hd);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hd; ++j) attn[i * d + off + j] = oh[i * hd + j];
    }

    Buf<T> o = linear<T>(cspan(attn), B.wo, B.bo, n, flops);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) h[i * d + j] += gate1[j] * o[i * d + j];

    Buf<T> n2(n * d), rstd2(n);
    kernels::layernorm_rows<T>(cspan(h), n2, rstd2, n, d, T(1e-6));
    Buf<T> bm = modulate(n2, shift2, scale2, n, d);
    Buf<T> u = linear<T>(cspan(bm), B.mlp_w1, B.mlp_b1, n, flops);
    Buf<T> g(n * hid);
    for (std::size_t i = 0; i < n * hid; ++i) g[i] = gelu(u[i]);
    Buf<T> mo = linear<T>(cspan(g), B.mlp_w2, B.mlp_b2, n, flops);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) h[i * d + j] += gate2[j] * mo[i * d + j];

    if (tape) {
      auto& tb = tape->blocks[l];
      tb.n1 = std::move(n1);
      tb.rstd1 = std::move(rstd1);
      tb.a = std::move(a);
      tb.qr = std::move(q);
      tb.kr = std::move(k);
      tb.v = std::move(v);
      tb.probs = std::move(probs_all);
      tb.attn = std::move(attn);
      tb.o = std::move(o);
      tb.n2 = std::move(n2);
      tb.rstd2 = std::move(rstd2);
      tb.b = std::move(bm);
      tb.u = std::move(u);
      tb.g = std::move(g);
      tb.m = std::move(mo);
      tape->mods[l] = std::move(mod);
    }
  }
  if (kv_only) return {};

  Buf<T> fmod = linear<T>(cspan(s), P.final_mod_w, P.final_mod_b, 1, flops);
  Buf<T> nf(n * d), rstdf(n);
  kernels::layernorm_rows<T>(cspan(h), nf, rstdf, n, d, T(1e-6));
  Buf<T> af = modulate(nf, fmod.data(), fmod.data() + d, n, d);
  Buf<T> disp_tok = linear<T>(cspan(af), P.head_w, P.head_b, n, flops);

  BasicTensor<T> disp(want);
  for (std::size_t f = 0; f < m; ++f)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < hh; ++y)
        for (std::size_t xx = 0; xx < ww; ++xx)
          disp[((f * ch + c) * hh + y) * ww + xx] = disp_tok[((f * hh + y) * ww + xx) * ch + c];

  if (tape) {
    tape->x_in = std::move(x_in);
    tape->z0 = std::move(z0);
    tape->c1 = std::move(c1);
    tape->a1 = std::move(a1);
    tape->c_emb = std::move(c_emb);
    tape->s = std::move(s);
    tape->fmod = std::move(fmod);
    tape->nf = std::move(nf);
    tape->rstdf = std::move(rstdf);
    tape->af = std::move(af);
    tape->rope = rope;
  }
  return disp;
}

template <class T>
BasicTensor<T> BasicDiT<T>::displacement(const BasicLatentChunk<T>& x_t, T t,
                                         std::span<const T> cond,
                                         std::span<const BasicLayerKV<T>> context, T attn_scale,
                                         ForwardProbe<T>* probe) const {
  return run(x_t, t, cond, context, attn_scale, probe, nullptr, nullptr);
}

template <class T>
BasicLatentChunk<T> BasicDiT<T>::forward(const BasicLatentChunk<T>& x_t, T t,
                                         std::span<const T> cond,
                                         std::span<const BasicLayerKV<T>> context, T attn_scale,
                                         ForwardProbe<T>* probe) const {
  if (!(t >= T(0) && t <= T(1))) throw ContractError("forward: t must lie in [0, 1]");
  BasicTensor<T> disp = run(x_t, t, cond, context, attn_scale, probe, nullptr, nullptr);
  for (std::size_t i = 0; i < disp.size(); ++i) disp[i] += x_t.frames[i];
  return {std::move(disp), x_t.res, x_t.start_frame};
}

template <class T>
std::vector<BasicLayerKV<T>> BasicDiT<T>::forward_kv(const BasicLatentChunk<T>& clean,
                                                     std::span<const T> cond,
                                                     std::span<const BasicLayerKV<T>> context,
                                                     ForwardProbe<T>* probe) const {
  std::vector<BasicLayerKV<T>> out;
  out.reserve(static_cast<std::size_t>(cfg_.n_layers));
  run(clean, T(0), cond, context, T(1), probe, nullptr, &out);
  return out;
}

template <class T>
T BasicDiT<T>::loss_and_grad(const BasicLatentChunk<T>& x_t, T t, std::span<const T> cond,
                             std::span<const BasicLayerKV<T>> context, T attn_scale,
                             const LossFn& loss_fn, ModelParams<T>& grads) const {
  Tape tape;
  const BasicTensor<T> disp = run(x_t, t, cond, context, attn_scale, nullptr, &tape, nullptr);
  BasicTensor<T> d_disp(disp.dims());
  const T loss = loss_fn(disp, d_disp);

  const ModelParams<T>& P = params_;
  const std::size_t d = static_cast<std::size_t>(cfg_.d_model);
  const std::size_t heads = static_cast<std::size_t>(cfg_.n_heads);
  const std::size_t hd = static_cast<std::size_t>(cfg_.head_dim());
  const std::size_t hid = static_cast<std::size_t>(cfg_.mlp_hidden);
  const std::size_t ch = static_cast<std::size_t>(cfg_.latent_channels);
  const std::size_t n = tape.n_tokens;
  const std::size_t n_ctx = tape.n_ctx;
  const std::size_t n_key = n_ctx + n;
  const std::size_t m = x_t.frame_count();
  const std::size_t hh = x_t.frames.dim(2), ww = x_t.frames.dim(3);
  const T logit_scale = attn_scale / std::sqrt(static_cast<T>(hd));

  Buf<T> dy(n * ch);
  for (std::size_t f = 0; f < m; ++f)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t y = 0; y < hh; ++y)
        for (std::size_t xx = 0; xx < ww; ++xx)
          dy[((f * hh + y) * ww + xx) * ch + c] = d_disp[((f * ch + c) * hh + y) * ww + xx];

  Buf<T> ds(d, T(0));

  // Output head and final modulation.
  Buf<T> daf = linear_backward<T>(cspan(tape.af), P.head_w, cspan(dy), n, grads.head_w,
                                  grads.head_b, true);
  Buf<T> dfmod(2 * d, T(0));
  Buf<T> dnf = modulate_backward(daf, tape.nf, tape.fmod.data() + d, dfmod.data(),
                                 dfmod.data() + d, n, d);
  Buf<T> dh(n * d, T(0));
  layernorm_backward_add(dnf, tape.nf, tape.rstdf, n, d, dh);
  {
    Buf<T> dsx = linear_backward<T>(cspan(tape.s), P.final_mod_w, cspan(dfmod), 1,
                                    grads.final_mod_w, grads.final_mod_b, true);
    for (std::size_t j = 0; j < d; ++j) ds[j] += dsx[j];
  }

  Buf<T> qh(n * hd), kh(n_key * hd), vt(hd * n_key), dOh(n * hd), dP(n * n_key),
      pt(n_key * n), dVh(n_key * hd), dQh(n * hd), dKh(n_key * hd), dSt(n_key * n);
  for (std::size_t li = static_cast<std::size_t>(cfg_.n_layers); li-- > 0;) {
    const BlockParams<T>& B = P.blocks[li];
    BlockParams<T>& G = grads.blocks[li];
    const auto& tb = tape.blocks[li];
    const Buf<T>& mod = tape.mods[li];
    Buf<T> dmod(6 * d, T(0));
    const T* gate1 = mod.data() + 2 * d;
    const T* scale2 = mod.data() + 4 * d;
    const T* gate2 = mod.data() + 5 * d;
    const T* scale1 = mod.data() + d;

    // MLP branch: h_out = h_mid + gate2 * m
    Buf<T> dm(n * d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        dmod[5 * d + j] += dh[i * d + j] * tb.m[i * d + j];
        dm[i * d + j] = dh[i * d + j] * gate2[j];
      }
    Buf<T> dg = linear_backward<T>(cspan(tb.g), B.mlp_w2, cspan(dm), n, G.mlp_w2, G.mlp_b2, true);
    for (std::size_t i = 0; i < n * hid; ++i) dg[i] *= gelu_grad(tb.u[i]);
    Buf<T> dbm = linear_backward<T>(cspan(tb.b), B.mlp_w1, cspan(dg), n, G.mlp_w1, G.mlp_b1, true);
    Buf<T> dn2 = modulate_backward(dbm, tb.n2, scale2, dmod.data() + 3 * d, dmod.data() + 4 * d,
                                   n, d);
    Buf<T> dh_mid = dh;
    layernorm_backward_add(dn2, tb.n2, tb.rstd2, n, d, dh_mid);

    // Attention branch: h_mid = h_in + gate1 * o
    Buf<T> d_o(n * d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        dmod[2 * d + j] += dh_mid[i * d + j] * tb.o[i * d + j];
        d_o[i * d + j] = dh_mid[i * d + j] * gate1[j];
      }
    Buf<T> d_attn = linear_backward<T>(cspan(tb.attn), B.wo, cspan(d_o), n, G.wo, G.bo, true);

    Buf<T> dq(n * d, T(0)), dk(n * d, T(0)), dv(n * d, T(0));
    const T* ctx_k = n_ctx ? context[li].keys.data().data() : nullptr;
    const T* ctx_v = n_ctx ? context[li].values.data().data() : nullptr;
    for (std::size_t hix = 0; hix < heads; ++hix) {
      const std::size_t off = hix * hd;
      const T* probs = tb.probs.data() + hix * n * n_key;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hd; ++j) {
          qh[i * hd + j] = tb.qr[i * d + off + j];
          dOh[i * hd + j] = d_attn[i * d + off + j];
        }
      for (std::size_t i = 0; i < n_ctx; ++i)
        for (std::size_t j = 0; j < hd; ++j) {
          kh[i * hd + j] = ctx_k[i * d + off + j];
          vt[j * n_key + i] = ctx_v[i * d + off + j];
        }
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hd; ++j) {
          kh[(n_ctx + i) * hd + j] = tb.kr[i * d + off + j];
          vt[j * n_key + n_ctx + i] = tb.v[i * d + off + j];
        }
      // dP = dO V^T ; dV = P^T dO
      kernels::matmul<T>(cspan(dOh), cspan(vt), dP, n, hd, n_key);
      kernels::transpose<T>(std::span<const T>(probs, n * n_key), pt, n, n_key);
      kernels::matmul<T>(cspan(pt), cspan(dOh), dVh, n_key, n, hd);
      // dS = P * (dP - rowsum(dP * P)), then the logit scale.
      for (std::size_t i = 0; i < n; ++i) {
        const T* pr = probs + i * n_key;
        T* g = dP.data() + i * n_key;
        T dot = 0;
        for (std::size_t j = 0; j < n_key; ++j) dot += g[j] * pr[j];
        for (std::size_t j = 0; j < n_key; ++j) g[j] = pr[j] * (g[j] - dot) * logit_scale;
      }
      kernels::matmul<T>(cspan(dP), cspan(kh), dQh, n, n_key, hd);
      kernels::transpose<T>(cspan(dP), dSt, n, n_key);
      kernels::matmul<T>(cspan(dSt), cspan(qh), dKh, n_key, n, hd);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < hd; ++j) {
          dq[i * d + off + j] = dQh[i * hd + j];
          dk[i * d + off + j] = dKh[(n_ctx + i) * hd + j];
          dv[i * d + off + j] = dVh[(n_ctx + i) * hd + j];
        }
    }
    rope_apply<T>(dq, tape.rope, heads, true);
    rope_apply<T>(dk, tape.rope, heads, true);

    Buf<T> da = linear_backward<T>(cspan(tb.a), B.wq, cspan(dq), n, G.wq, G.bq, true);
    {
      Buf<T> t1 = linear_backward<T>(cspan(tb.a), B.wk, cspan(dk), n, G.wk, G.bk, true);
      Buf<T> t2 = linear_backward<T>(cspan(tb.a), B.wv, cspan(dv), n, G.wv, G.bv, true);
      for (std::size_t i = 0; i < n * d; ++i) da[i] += t1[i] + t2[i];
    }
    Buf<T> dn1 = modulate_backward(da, tb.n1, scale1, dmod.data(), dmod.data() + d, n, d);
    dh = std::move(dh_mid);
    layernorm_backward_add(dn1, tb.n1, tb.rstd1, n, d, dh);

    Buf<T> dsx = linear_backward<T>(cspan(tape.s), B.mod_w, cspan(dmod), 1, G.mod_w, G.mod_b, true);
    for (std::size_t j = 0; j < d; ++j) ds[j] += dsx[j];
  }

  // Conditioning path.
  Buf<T> dc_emb(d);
  for (std::size_t j = 0; j < d; ++j) dc_emb[j] = ds[j] * silu_grad(tape.c_emb[j]);
  Buf<T> da1 = linear_backward<T>(cspan(tape.a1), P.temb_w2, cspan(dc_emb), 1, grads.temb_w2,
                                  grads.temb_b2, true);
  for (std::size_t j = 0; j < d; ++j) da1[j] *= silu_grad(tape.c1[j]);
  linear_backward<T>(cspan(tape.z0), P.temb_w1, cspan(da1), 1, grads.temb_w1, grads.temb_b1,
                     false);

  linear_backward<T>(cspan(tape.x_in), P.embed_w, cspan(dh), n, grads.embed_w, grads.embed_b,
                     false);
  return loss;
}

template class BasicDiT<float>;
template class BasicDiT<double>;

}  // namespace histream
