#include <cmath>

#include "histream/error.hpp"
#include "histream/training.hpp"

namespace histream {

void SyntheticVideoSpec::validate() const {
  if (channels < 1 || low_h < 1 || low_w < 1 || chunk_frames < 1 || d_cond < 1) {
    throw ConfigError("synthetic spec: extents must be >= 1");
  }
  if (speed_max < 0.0) throw ConfigError("synthetic spec: speed_max must be >= 0");
  if (!(sigma_min > 0.0) || sigma_max < sigma_min) {
    throw ConfigError("synthetic spec: need 0 < sigma_min <= sigma_max");
  }
}

SyntheticVideoSpec SyntheticVideoSpec::for_model(const ModelConfig& cfg) {
  SyntheticVideoSpec s;
  s.channels = cfg.latent_channels;
  s.low_h = cfg.low_h;
  s.low_w = cfg.low_w;
  s.chunk_frames = cfg.chunk_frames;
  s.d_cond = cfg.d_cond;
  return s;
}

BlobParams blob_params(const SyntheticVideoSpec& spec, std::uint64_t seed) {
  RngStream r = Rng(seed).substream(stream_key(StreamTag::kSynthetic, 0));
  BlobParams p;
  p.cx = 0.3 + 0.4 * r.next_uniform();
  p.cy = 0.3 + 0.4 * r.next_uniform();
  p.vx = spec.speed_max * (2.0 * r.next_uniform() - 1.0);
  p.vy = spec.speed_max * (2.0 * r.next_uniform() - 1.0);
  p.sigma = spec.sigma_min + (spec.sigma_max - spec.sigma_min) * r.next_uniform();
  return p;
}

namespace {

// Triangle wave: reflection off the walls at 0 and 1.
double fold(double x) {
  double q = std::fmod(x, 2.0);
  if (q < 0.0) q += 2.0;
  return q > 1.0 ? 2.0 - q : q;
}

}  // namespace

std::array<double, 2> blob_center(const BlobParams& p, std::int64_t frame) {
  const double f = static_cast<double>(frame);
  return {fold(p.cx + p.vx * f), fold(p.cy + p.vy * f)};
}

Tensor render_frame(const SyntheticVideoSpec& spec, const BlobParams& p, std::int64_t frame,
                    Resolution res) {
  const int scale = res == Resolution::kHigh ? 2 : 1;
  const std::size_t h = static_cast<std::size_t>(spec.low_h * scale);
  const std::size_t w = static_cast<std::size_t>(spec.low_w * scale);
  Tensor out({static_cast<std::size_t>(spec.channels), h, w});
  const auto [cx, cy] = blob_center(p, frame);
  const double inv = 1.0 / (2.0 * p.sigma * p.sigma);
  for (std::size_t y = 0; y < h; ++y) {
    const double py = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
    for (std::size_t x = 0; x < w; ++x) {
      const double px = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
      const double r2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
      out[y * w + x] = static_cast<float>(spec.amplitude * std::exp(-r2 * inv));
    }
  }
  return out;
}

SyntheticChunk synth_chunk(const SyntheticVideoSpec& spec, std::uint64_t seed, int chunk_index,
                           Resolution res) {
  spec.validate();
  if (chunk_index < 0) throw ContractError("synth_chunk: chunk_index must be >= 0");
  const BlobParams p = blob_params(spec, seed);
  const std::size_t m = static_cast<std::size_t>(spec.chunk_frames);
  const std::int64_t start = static_cast<std::int64_t>(chunk_index) * spec.chunk_frames;

  std::vector<float> data;
  Dims frame_dims;
  for (std::size_t f = 0; f < m; ++f) {
    const Tensor fr = render_frame(spec, p, start + static_cast<std::int64_t>(f), res);
    frame_dims = fr.dims();
    data.insert(data.end(), fr.data().begin(), fr.data().end());
  }
  SyntheticChunk out;
  out.clean = {Tensor({m, frame_dims[0], frame_dims[1], frame_dims[2]}, std::move(data)), res,
               start};

  const double sm = spec.speed_max > 0.0 ? spec.speed_max : 1.0;
  const double half = 0.5 * (spec.sigma_max - spec.sigma_min);
  const double mid = 0.5 * (spec.sigma_max + spec.sigma_min);
  const double feats[4] = {p.vx / sm, p.vy / sm, half > 0.0 ? (p.sigma - mid) / half : 0.0, 1.0};
  out.cond = Tensor({static_cast<std::size_t>(spec.d_cond)});
  for (std::size_t i = 0; i < out.cond.size() && i < 4; ++i) {
    out.cond[i] = static_cast<float>(feats[i]);
  }
  return out;
}

}  // namespace histream
