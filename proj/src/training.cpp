#include "histream/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "histream/error.hpp"
#include "histream/schedule.hpp"

namespace histream {

LossMode parse_loss_mode(const std::string& name) {
  if (name == "fm") return LossMode::kFm;
  if (name == "eps") return LossMode::kEps;
  throw ConfigError("unknown loss mode '" + name + "' (expected fm or eps)");
}

const char* to_string(LossMode mode) { return mode == LossMode::kFm ? "fm" : "eps"; }

template <class T>
FlowSample<T> sample_flow(RngStream& rng, const Dims& dims, double shift, double t_min) {
  double u = rng.next_uniform();
  while (u < t_min) u = rng.next_uniform();
  FlowSample<T> s;
  s.t = static_cast<T>(shift_timestep(u, shift));
  std::vector<T> eps(element_count(dims));
  for (std::size_t i = 0; i < eps.size(); i += 2) {
    const auto g = rng.next_gaussian_pair();
    eps[i] = static_cast<T>(g[0]);
    if (i + 1 < eps.size()) eps[i + 1] = static_cast<T>(g[1]);
  }
  s.eps = BasicTensor<T>(dims, std::move(eps));
  return s;
}

namespace {

template <class T>
BasicLatentChunk<T> noisy(const BasicLatentChunk<T>& x0, const FlowSample<T>& s) {
  if (s.eps.dims() != x0.frames.dims()) throw ShapeError("flow sample does not match chunk");
  return {renoise_psi(x0.frames, s.eps, s.t), x0.res, x0.start_frame};
}

}  // namespace

template <class T>
T fm_loss(const BasicDiT<T>& model, const BasicLatentChunk<T>& x0, std::span<const T> cond,
          std::span<const BasicLayerKV<T>> context, T attn_scale, const FlowSample<T>& sample,
          ModelParams<T>* grads) {
  const BasicLatentChunk<T> x_t = noisy(x0, sample);
  const std::size_t n = x0.frames.size();
  auto fn = [&](const BasicTensor<T>& disp, BasicTensor<T>& d_disp) {
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T r = disp[i] - (x0.frames[i] - x_t.frames[i]);
      loss += r * r;
      d_disp[i] = T(2) * r / static_cast<T>(n);
    }
    return loss / static_cast<T>(n);
  };
  if (grads) return model.loss_and_grad(x_t, sample.t, cond, context, attn_scale, fn, *grads);
  BasicTensor<T> disp = model.displacement(x_t, sample.t, cond, context, attn_scale);
  BasicTensor<T> scratch(disp.dims());
  return fn(disp, scratch);
}

template <class T>
T eps_loss(const BasicDiT<T>& model, const BasicLatentChunk<T>& x0, std::span<const T> cond,
           std::span<const BasicLayerKV<T>> context, T attn_scale, const FlowSample<T>& sample,
           ModelParams<T>* grads) {
  if (!(sample.t > T(0))) throw ContractError("eps_loss: t must be > 0");
  const BasicLatentChunk<T> x_t = noisy(x0, sample);
  const std::size_t n = x0.frames.size();
  const T t = sample.t;
  auto fn = [&](const BasicTensor<T>& disp, BasicTensor<T>& d_disp) {
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T xt = x_t.frames[i];
      const T x0_hat = xt + disp[i];
      const T r = (xt - (T(1) - t) * x0_hat) / t - sample.eps[i];
      loss += r * r;
      d_disp[i] = T(2) * r / static_cast<T>(n) * (-(T(1) - t) / t);
    }
    return loss / static_cast<T>(n);
  };
  if (grads) return model.loss_and_grad(x_t, t, cond, context, attn_scale, fn, *grads);
  BasicTensor<T> disp = model.displacement(x_t, t, cond, context, attn_scale);
  BasicTensor<T> scratch(disp.dims());
  return fn(disp, scratch);
}

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train: steps must be >= 1");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be finite and >= 0");
  if (!(shift > 0.0)) throw ConfigError("train: shift must be > 0");
  if (t_min < 0.0 || t_min >= 1.0) throw ConfigError("train: t_min must lie in [0, 1)");
  if (max_chunk < 1) throw ConfigError("train: max_chunk must be >= 1");
  if (high_res_every < 0) throw ConfigError("train: high_res_every must be >= 0");
  if (ema_decay < 0.0 || ema_decay >= 1.0) throw ConfigError("train: ema_decay must lie in [0, 1)");
}

Adam::Adam(const ModelConfig& cfg, double beta1, double beta2, double eps)
    : b1_(beta1), b2_(beta2), eps_(eps), m_(ModelParams<float>::zeros(cfg)),
      v_(ModelParams<float>::zeros(cfg)) {}

void Adam::step(ModelParams<float>& params, const ModelParams<float>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, t_);
  const double c2 = 1.0 - std::pow(b2_, t_);
  std::vector<Tensor*> ps, ms, vs;
  std::vector<const Tensor*> gs;
  params.for_each([&](const std::string&, Tensor& x) { ps.push_back(&x); });
  m_.for_each([&](const std::string&, Tensor& x) { ms.push_back(&x); });
  v_.for_each([&](const std::string&, Tensor& x) { vs.push_back(&x); });
  grads.for_each([&](const std::string&, const Tensor& x) { gs.push_back(&x); });
  for (std::size_t k = 0; k < ps.size(); ++k) {
    Tensor& p = *ps[k];
    Tensor& m = *ms[k];
    Tensor& v = *vs[k];
    const Tensor& g = *gs[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = b1_ * m[i] + (1.0 - b1_) * gi;
      const double vi = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double upd = lr * (mi / c1) / (std::sqrt(vi / c2) + eps_);
      p[i] = static_cast<float>(static_cast<double>(p[i]) - upd);
    }
  }
}

double TrainResult::initial_smoothed() const {
  if (curve.empty()) return 0.0;
  return curve[std::min<std::size_t>(9, curve.size() - 1)].ema;
}

double TrainResult::final_smoothed() const { return curve.empty() ? 0.0 : curve.back().ema; }

namespace {

std::uint64_t draw_u64(RngStream& r) {
  const std::uint64_t lo = r.next_u32();
  return lo | (static_cast<std::uint64_t>(r.next_u32()) << 32);
}

void add_into(ModelParams<float>& acc, const ModelParams<float>& g) {
  std::vector<const Tensor*> gs;
  g.for_each([&](const std::string&, const Tensor& x) { gs.push_back(&x); });
  std::size_t k = 0;
  acc.for_each([&](const std::string&, Tensor& x) {
    const Tensor& s = *gs[k++];
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += s[i];
  });
}

void scale_all(ModelParams<float>& p, float s) {
  p.for_each([&](const std::string&, Tensor& x) {
    for (float& v : x.data()) v *= s;
  });
}

// Context a chunk would see during generation under anchor + window
// retention, built from clean frames: the anchor frame of chunk 0 followed
// by the last M-1 frames of chunk i-1. The previous chunk is encoded against
// chunk 0 only, which keeps the cost at two cache passes per sample.
std::vector<LayerKV> teacher_context(const DiT& model, const SyntheticVideoSpec& spec,
                                     std::uint64_t video, int chunk, Resolution res,
                                     std::span<const float> cond) {
  if (chunk == 0) return {};
  const SyntheticChunk first = synth_chunk(spec, video, 0, res);
  std::vector<LayerKV> kv0 = model.forward_kv(first.clean, cond, {});
  if (chunk == 1) return kv0;
  const SyntheticChunk prev = synth_chunk(spec, video, chunk - 1, res);
  std::vector<LayerKV> kvp = model.forward_kv(prev.clean, cond, kv0);
  const std::int64_t anchor[1] = {0};
  std::vector<std::int64_t> recent(kvp[0].frames.begin() + 1, kvp[0].frames.end());
  std::vector<LayerKV> ctx;
  for (std::size_t l = 0; l < kv0.size(); ++l) {
    ctx.push_back(LayerKV::concat(kv0[l].select(anchor), kvp[l].select(recent)));
  }
  return ctx;
}

}  // namespace

TrainResult train(DiT& model, const TrainConfig& tc, const SyntheticVideoSpec& spec,
                  std::uint64_t seed, const std::function<void(const LossPoint&)>& on_step) {
  tc.validate();
  spec.validate();
  const ModelConfig& cfg = model.config();
  if (spec.channels != cfg.latent_channels || spec.low_h != cfg.low_h ||
      spec.low_w != cfg.low_w || spec.chunk_frames != cfg.chunk_frames ||
      spec.d_cond != cfg.d_cond) {
    throw ConfigError("train: synthetic spec does not match the model shape");
  }
  Adam opt(cfg);
  TrainResult result;
  double ema_raw = 0.0;
  double decay_pow = 1.0;
  const Rng rng(seed);

  for (int step = 0; step < tc.steps; ++step) {
    const bool high = tc.high_res_every > 0 && step % tc.high_res_every == tc.high_res_every - 1;
    const Resolution res = high ? Resolution::kHigh : Resolution::kLow;
    ModelParams<float> grads = ModelParams<float>::zeros(cfg);
    double loss = 0.0;
    for (int b = 0; b < tc.batch; ++b) {
      RngStream r = rng.substream(stream_key(StreamTag::kTrainSample,
                                             static_cast<std::uint64_t>(step),
                                             static_cast<std::uint64_t>(b)));
      const std::uint64_t video = draw_u64(r);
      const int chunk = static_cast<int>(r.next_u32() % static_cast<std::uint32_t>(tc.max_chunk));
      const SyntheticChunk sc = synth_chunk(spec, video, chunk, res);
      const std::span<const float> cond = sc.cond.data();
      const std::vector<LayerKV> ctx = teacher_context(model, spec, video, chunk, res, cond);
      const float scale = static_cast<float>(chunk == 0 ? cfg.attn_scale_first_chunk
                                                        : cfg.attn_scale_rest);
      const FlowSample<float> fs = sample_flow<float>(
          r, sc.clean.frames.dims(), tc.shift, tc.loss == LossMode::kEps ? tc.t_min : 0.0);
      ModelParams<float> g = ModelParams<float>::zeros(cfg);
      const float l = tc.loss == LossMode::kFm ? fm_loss<float>(model, sc.clean, cond, ctx, scale, fs, &g)
                                               : eps_loss<float>(model, sc.clean, cond, ctx, scale, fs, &g);
      add_into(grads, g);
      loss += l;
    }
    loss /= tc.batch;
    if (!std::isfinite(loss)) {
      throw NumericError("training diverged at step " + std::to_string(step));
    }
    scale_all(grads, 1.0f / static_cast<float>(tc.batch));
    opt.step(model.params(), grads, tc.lr);

    ema_raw = tc.ema_decay * ema_raw + (1.0 - tc.ema_decay) * loss;
    decay_pow *= tc.ema_decay;
    const LossPoint pt{step, loss, ema_raw / (1.0 - decay_pow)};
    result.curve.push_back(pt);
    if (on_step) on_step(pt);
  }
  return result;
}

std::string loss_csv(const std::vector<LossPoint>& curve) {
  std::ostringstream out;
  out.precision(9);
  out << "step,loss,ema\n";
  for (const LossPoint& p : curve) out << p.step << ',' << p.loss << ',' << p.ema << '\n';
  return out.str();
}

GradCheckResult grad_check(LossMode mode, const ModelConfig& cfg, std::uint64_t seed, double h,
                           double floor) {
  const BasicDiT<double> model(cfg, init_params(cfg, seed, InitMode::kDense).cast<double>());
  SyntheticVideoSpec spec = SyntheticVideoSpec::for_model(cfg);
  const SyntheticChunk prev = synth_chunk(spec, seed, 0);
  const SyntheticChunk cur = synth_chunk(spec, seed, 1);
  const BasicTensor<double> cond = cur.cond.cast<double>();
  const BasicLatentChunk<double> x0{cur.clean.frames.cast<double>(), cur.clean.res,
                                    cur.clean.start_frame};
  const BasicLatentChunk<double> x_prev{prev.clean.frames.cast<double>(), prev.clean.res, 0};
  const std::vector<BasicLayerKV<double>> ctx = model.forward_kv(x_prev, cond.data(), {});
  RngStream r = Rng(seed).substream(stream_key(StreamTag::kTest, 0));
  const FlowSample<double> fs = sample_flow<double>(r, x0.frames.dims(), 5.0, 0.05);
  const double scale = 2.0;

  auto loss = [&](const BasicDiT<double>& m, ModelParams<double>* g) {
    return mode == LossMode::kFm ? fm_loss<double>(m, x0, cond.data(), ctx, scale, fs, g)
                                 : eps_loss<double>(m, x0, cond.data(), ctx, scale, fs, g);
  };
  ModelParams<double> grads = ModelParams<double>::zeros(cfg);
  loss(model, &grads);

  BasicDiT<double> probe = model;
  std::vector<BasicTensor<double>*> ps;
  std::vector<std::string> names;
  probe.params().for_each([&](const std::string& n, BasicTensor<double>& x) {
    ps.push_back(&x);
    names.push_back(n);
  });
  std::vector<const BasicTensor<double>*> gs;
  grads.for_each([&](const std::string&, const BasicTensor<double>& x) { gs.push_back(&x); });

  GradCheckResult out;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    BasicTensor<double>& p = *ps[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = loss(probe, nullptr);
      p[i] = orig - h;
      const double dn = loss(probe, nullptr);
      p[i] = orig;
      const double num = (up - dn) / (2.0 * h);
      const double ana = (*gs[k])[i];
      const double err =
          std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor});
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst_param = names[k] + "[" + std::to_string(i) + "]";
      }
      ++out.checked;
    }
  }
  return out;
}

template FlowSample<float> sample_flow<float>(RngStream&, const Dims&, double, double);
template FlowSample<double> sample_flow<double>(RngStream&, const Dims&, double, double);
#define HISTREAM_LOSSES(T)                                                                     \
  template T fm_loss<T>(const BasicDiT<T>&, const BasicLatentChunk<T>&, std::span<const T>,    \
                        std::span<const BasicLayerKV<T>>, T, const FlowSample<T>&,             \
                        ModelParams<T>*);                                                      \
  template T eps_loss<T>(const BasicDiT<T>&, const BasicLatentChunk<T>&, std::span<const T>,   \
                         std::span<const BasicLayerKV<T>>, T, const FlowSample<T>&,            \
                         ModelParams<T>*);
HISTREAM_LOSSES(float)
HISTREAM_LOSSES(double)
#undef HISTREAM_LOSSES

}  // namespace histream
