#include "histream/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "histream/config.hpp"
#include "histream/error.hpp"
#include "histream/hstn.hpp"
#include "histream/kernels.hpp"
#include "histream/rng.hpp"

namespace histream {

GenerationResult generate(const DiT& model, const GenerationRequest& req) {
  const ModelConfig& cfg = model.config();
  if (req.n_chunks < 1) throw ConfigError("generate: n_chunks must be >= 1");
  if (req.cond.size() != static_cast<std::size_t>(cfg.d_cond)) {
    throw ShapeError("generate: condition vector must have d_cond entries");
  }
  const ModeTraits mt = traits(req.mode);
  const DenoisePlan plan = make_plan(req.mode, req.n_chunks, req.shift);
  const Rng rng(req.seed);
  const std::span<const float> cond = req.cond.data();
  const float scale_first =
      static_cast<float>(req.attn_scale_first_chunk.value_or(cfg.attn_scale_first_chunk));
  const float scale_rest = static_cast<float>(req.attn_scale_rest.value_or(cfg.attn_scale_rest));

  DualKVCache cache(mt.policy, cfg.n_layers, mt.dual_resolution);
  GenerationResult result;
  result.report.mode = req.mode;
  result.report.config_hash = config_hash(cfg);

  for (int i = 0; i < req.n_chunks; ++i) {
    if (i > 0 && req.retention) {
      cache.apply_retention_mask(req.retention(i, cache.frames_generated()));
    }
    const ChunkPlan& cp = plan.chunks[static_cast<std::size_t>(i)];
    const float attn_scale = i == 0 ? scale_first : scale_rest;
    const std::int64_t start = static_cast<std::int64_t>(i) * cfg.chunk_frames;
    ChunkStats stats;
    stats.chunk = i;

    ForwardProbe<float> probe;
    probe.flops = &stats.flops;
    Resolution current_res = cp.phases.front().res;
    if (req.on_attention) {
      probe.on_attention = [&](const AttentionView<float>& v) { req.on_attention(v, i, current_res); };
    }

    const auto t0 = std::chrono::steady_clock::now();
    LatentChunk x{gaussian(rng, stream_key(StreamTag::kInitialNoise, static_cast<std::uint64_t>(i)),
                           cfg.chunk_dims(current_res)),
                  current_res, start};
    LatentChunk x0;
    int step = 0;
    for (std::size_t p = 0; p < cp.phases.size(); ++p) {
      const Phase& phase = cp.phases[p];
      current_res = phase.res;
      const std::span<const LayerKV> ctx = cache.context_for(phase.res);
      for (std::size_t j = 0; j < phase.timesteps.size(); ++j, ++step) {
        x0 = model.forward(x, static_cast<float>(phase.timesteps[j]), cond, ctx, attn_scale, &probe);
        (phase.res == Resolution::kLow ? stats.forwards_low : stats.forwards_high) += 1;
        if (!all_finite<float>(x0.frames.data())) {
          throw NumericError("non-finite x0_hat at chunk " + std::to_string(i) + " step " +
                             std::to_string(step));
        }
        double next_t;
        if (j + 1 < phase.timesteps.size()) {
          next_t = phase.timesteps[j + 1];
        } else if (p + 1 < cp.phases.size()) {
          next_t = cp.phases[p + 1].timesteps.front();
          if (cp.phases[p + 1].res != phase.res) {
            x0 = {kernels::upsample_bilinear2(x0.frames), cp.phases[p + 1].res, start};
          }
        } else {
          continue;  // final step: x0 is the chunk output
        }
        const Tensor eps =
            gaussian(rng,
                     stream_key(StreamTag::kRenoise, static_cast<std::uint64_t>(i),
                                static_cast<std::uint64_t>(step)),
                     x0.frames.dims());
        x = {renoise_psi(x0.frames, eps, static_cast<float>(next_t)), x0.res, start};
      }
    }

    // Dual cache write from the final high-resolution estimate.
    ForwardProbe<float> kv_probe;
    kv_probe.flops = &stats.flops;
    std::vector<LayerKV> kv_high =
        model.forward_kv(x0, cond, cache.context_for(Resolution::kHigh), &kv_probe);
    std::vector<LayerKV> kv_low;
    ++stats.kv_passes;
    if (mt.dual_resolution) {
      const LatentChunk down{kernels::downsample_avg2(x0.frames), Resolution::kLow, start};
      kv_low = model.forward_kv(down, cond, cache.context_for(Resolution::kLow), &kv_probe);
      ++stats.kv_passes;
    }
    cache.commit(i, std::move(kv_low), std::move(kv_high));
    const auto t1 = std::chrono::steady_clock::now();

    stats.latency_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    stats.cache_bytes = cache.byte_size();
    result.report.chunks.push_back(stats);
    result.chunks.push_back(std::move(x0));
    if (req.on_commit) req.on_commit({i, result.chunks.back(), cache});
  }
  return result;
}

ExportFormat parse_export_format(const std::string& name) {
  if (name == "hstn") return ExportFormat::kHstn;
  if (name == "pgm") return ExportFormat::kPgm;
  throw ConfigError("unknown export format '" + name + "'");
}

namespace {

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.%s", stem, i, ext);
  return buf;
}

void write_pgm(const std::filesystem::path& path, const float* plane, std::size_t h,
               std::size_t w) {
  const auto [lo, hi] = std::minmax_element(plane, plane + h * w);
  const float mn = *lo, mx = *hi;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  for (std::size_t i = 0; i < h * w; ++i) {
    unsigned char v = 0;
    if (mx > mn) v = static_cast<unsigned char>(std::lround(255.0 * (plane[i] - mn) / (mx - mn)));
    out.put(static_cast<char>(v));
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void export_frames(const GenerationResult& result, const std::filesystem::path& dir,
                   ExportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  std::size_t frame = 0;
  for (std::size_t c = 0; c < result.chunks.size(); ++c) {
    const Tensor& t = result.chunks[c].frames;
    if (format == ExportFormat::kHstn) {
      hstn::save(dir / numbered("chunk", c, "hstn"), t);
      continue;
    }
    const std::size_t ch = t.dim(1), h = t.dim(2), w = t.dim(3);
    for (std::size_t f = 0; f < t.dim(0); ++f, ++frame) {
      write_pgm(dir / numbered("frame", frame, "pgm"), t.data().data() + f * ch * h * w, h, w);
    }
  }
}

}  // namespace histream
