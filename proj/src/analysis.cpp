#include "histream/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "histream/error.hpp"
#include "histream/kernels.hpp"

namespace histream {

// RunReport

std::size_t RunReport::forwards(Resolution r) const {
  std::size_t n = 0;
  for (const ChunkStats& c : chunks) n += r == Resolution::kLow ? c.forwards_low : c.forwards_high;
  return n;
}

std::size_t RunReport::total_forwards() const {
  return forwards(Resolution::kLow) + forwards(Resolution::kHigh);
}

std::uint64_t RunReport::total_flops() const {
  std::uint64_t n = 0;
  for (const ChunkStats& c : chunks) n += c.flops;
  return n;
}

double RunReport::total_latency_ms() const {
  double t = 0.0;
  for (const ChunkStats& c : chunks) t += c.latency_ms;
  return t;
}

std::string RunReport::to_text() const {
  std::ostringstream out;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  out << "mode: " << to_string(mode) << '\n';
  out << "config_hash: " << hash << '\n';
  out << "chunks: " << chunks.size() << '\n';
  out << "forwards_low: " << forwards(Resolution::kLow) << '\n';
  out << "forwards_high: " << forwards(Resolution::kHigh) << '\n';
  out << "forwards_total: " << total_forwards() << '\n';
  out << "flops_total: " << total_flops() << '\n';
  out << "latency_ms_total: " << total_latency_ms() << '\n';
  if (!chunks.empty()) out << "cache_bytes_final: " << chunks.back().cache_bytes << '\n';
  return out.str();
}

std::string RunReport::to_csv(bool header) const {
  std::ostringstream out;
  if (header) out << "mode,chunk,latency_ms,forwards_low,forwards_high,flops,cache_bytes\n";
  for (const ChunkStats& c : chunks) {
    out << to_string(mode) << ',' << c.chunk << ',' << c.latency_ms << ',' << c.forwards_low << ','
        << c.forwards_high << ',' << c.flops << ',' << c.cache_bytes << '\n';
  }
  return out.str();
}

// FLOP accounting

namespace {

using u64 = std::uint64_t;

struct Shape {
  u64 d, layers, hid, ch, te, dc, n, n_key;
};

Shape shape(const ModelConfig& cfg, Resolution res, std::size_t context_frames) {
  const u64 tpf = cfg.tokens_per_frame(res);
  const u64 n = static_cast<u64>(cfg.chunk_frames) * tpf;
  return {static_cast<u64>(cfg.d_model), static_cast<u64>(cfg.n_layers),
          static_cast<u64>(cfg.mlp_hidden), static_cast<u64>(cfg.latent_channels),
          static_cast<u64>(cfg.t_embed_dim), static_cast<u64>(cfg.d_cond), n,
          n + static_cast<u64>(context_frames) * tpf};
}

u64 prefix_flops(const Shape& s) {
  return 2 * s.n * s.ch * s.d + 2 * (s.te + s.dc) * s.d + 2 * s.d * s.d;
}

u64 full_block_flops(const Shape& s) {
  return 2 * s.d * 6 * s.d + 4 * 2 * s.n * s.d * s.d + 2 * 2 * s.n * s.n_key * s.d +
         2 * 2 * s.n * s.d * s.hid;
}

}  // namespace

std::uint64_t forward_flops(const ModelConfig& cfg, Resolution res, std::size_t context_frames) {
  const Shape s = shape(cfg, res, context_frames);
  return prefix_flops(s) + s.layers * full_block_flops(s) + 2 * s.d * 2 * s.d +
         2 * s.n * s.d * s.ch;
}

std::uint64_t kv_pass_flops(const ModelConfig& cfg, Resolution res, std::size_t context_frames) {
  const Shape s = shape(cfg, res, context_frames);
  return prefix_flops(s) + (s.layers - 1) * full_block_flops(s) + 2 * s.d * 6 * s.d +
         2 * 2 * s.n * s.d * s.d;
}

std::uint64_t attention_score_flops(const ModelConfig& cfg, Resolution res,
                                    std::size_t context_frames) {
  const Shape s = shape(cfg, res, context_frames);
  return s.layers * 2 * s.n * s.n_key * s.d;
}

std::vector<std::uint64_t> analytic_flops(const ModelConfig& cfg, const DenoisePlan& plan) {
  const ModeTraits mt = traits(plan.mode);
  const std::size_t m = static_cast<std::size_t>(cfg.chunk_frames);
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < plan.chunks.size(); ++i) {
    const std::size_t ctx = i == 0 ? 0 : mt.policy == CachePolicy::kAgsw ? m : i * m;
    std::uint64_t f = 0;
    for (const Phase& p : plan.chunks[i].phases) {
      f += p.timesteps.size() * forward_flops(cfg, p.res, ctx);
    }
    f += kv_pass_flops(cfg, Resolution::kHigh, ctx);
    if (mt.dual_resolution) f += kv_pass_flops(cfg, Resolution::kLow, ctx);
    out.push_back(f);
  }
  return out;
}

// Attention statistics

void AttnStats::record(const AttentionView<float>& v) {
  const std::size_t tpf = v.tokens_per_frame;
  const std::size_t n_kf = v.key_frames.size();
  for (std::size_t qf = 0; qf < v.query_frames.size(); ++qf) {
    const std::array<std::int64_t, 3> key{v.layer, v.head, v.query_frames[qf]};
    auto it = std::find_if(acc_.begin(), acc_.end(), [&](const auto& e) { return e.first == key; });
    if (it == acc_.end()) {
      acc_.push_back({key, Acc{}});
      it = acc_.end() - 1;
    }
    Acc& a = it->second;
    if (a.count == 0) {
      a.frames.assign(v.key_frames.begin(), v.key_frames.end());
      a.sums.assign(n_kf, 0.0);
    } else if (!std::equal(a.frames.begin(), a.frames.end(), v.key_frames.begin(),
                           v.key_frames.end())) {
      throw ContractError("AttnStats: key frames changed for a recorded query frame");
    }
    for (std::size_t q = qf * tpf; q < (qf + 1) * tpf; ++q) {
      const float* row = v.weights.data() + q * v.n_key;
      for (std::size_t kf = 0; kf < n_kf; ++kf) {
        double s = 0.0;
        for (std::size_t k = kf * tpf; k < (kf + 1) * tpf; ++k) s += row[k];
        a.sums[kf] += s;
      }
      ++a.count;
    }
  }
}

std::vector<AttnStats::Row> AttnStats::rows() const {
  std::vector<Row> out;
  for (const auto& [key, a] : acc_) {
    for (std::size_t kf = 0; kf < a.frames.size(); ++kf) {
      out.push_back({static_cast<int>(key[0]), static_cast<int>(key[1]), key[2], a.frames[kf],
                     a.sums[kf] / static_cast<double>(a.count)});
    }
  }
  std::sort(out.begin(), out.end(), [](const Row& x, const Row& y) {
    return std::tie(x.layer, x.head, x.query_frame, x.context_frame) <
           std::tie(y.layer, y.head, y.query_frame, y.context_frame);
  });
  return out;
}

std::vector<std::pair<std::int64_t, double>> AttnStats::frame_ranking() const {
  std::map<std::int64_t, std::pair<double, std::size_t>> by_frame;
  for (const Row& r : rows()) {
    auto& e = by_frame[r.context_frame];
    e.first += r.mass;
    ++e.second;
  }
  std::vector<std::pair<std::int64_t, double>> out;
  for (const auto& [f, e] : by_frame) out.emplace_back(f, e.first / static_cast<double>(e.second));
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

std::string AttnStats::to_csv() const {
  std::ostringstream out;
  out.precision(9);
  out << "layer,head,query_frame,context_frame,mass\n";
  for (const Row& r : rows()) {
    out << r.layer << ',' << r.head << ',' << r.query_frame << ',' << r.context_frame << ','
        << r.mass << '\n';
  }
  return out.str();
}

AttnStats attn_sink_stats(const DiT& model, Mode mode, int n_chunks, std::uint64_t seed,
                          const Tensor& cond, double shift) {
  if (traits(mode).policy == CachePolicy::kAgsw) {
    throw ContractError(std::string("attn_sink_stats needs full-history retention; mode ") +
                        to_string(mode) + " uses the anchor window");
  }
  AttnStats stats;
  GenerationRequest req;
  req.mode = mode;
  req.n_chunks = n_chunks;
  req.seed = seed;
  req.cond = cond;
  req.shift = shift;
  req.on_attention = [&](const AttentionView<float>& v, int, Resolution) { stats.record(v); };
  generate(model, req);
  return stats;
}

// Frame-drop ablation

RetentionRule retention_mask(const std::string& id, const ModelConfig& cfg) {
  const std::int64_t m = cfg.chunk_frames;
  auto all_but = [](std::int64_t drop) {
    return [drop](int, std::int64_t generated) {
      std::set<std::int64_t> keep;
      for (std::int64_t f = 0; f < generated; ++f) {
        if (f != drop) keep.insert(f);
      }
      return keep;
    };
  };
  if (id == "keep_all") return all_but(-1);
  if (id == "drop_anchor") return all_but(0);
  if (id == "drop_mid") return all_but(1);
  if (id == "agsw") {
    return [m](int, std::int64_t generated) {
      std::set<std::int64_t> keep{0};
      for (std::int64_t f = std::max<std::int64_t>(0, generated - (m - 1)); f < generated; ++f) {
        keep.insert(f);
      }
      return keep;
    };
  }
  throw ConfigError("unknown retention mask '" + id +
                    "' (expected keep_all, drop_anchor, drop_mid or agsw)");
}

namespace {

double chunk_mse(const LatentChunk& a, const LatentChunk& b) {
  if (a.frames.dims() != b.frames.dims()) throw ShapeError("chunk_mse: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    const double d = static_cast<double>(a.frames[i]) - b.frames[i];
    s += d * d;
  }
  return s / static_cast<double>(a.frames.size());
}

}  // namespace

std::vector<DropRow> frame_drop_ablation(const DiT& model, std::uint64_t seed, int n_chunks,
                                         const std::vector<std::string>& masks,
                                         const Tensor& cond, double shift) {
  std::vector<RetentionRule> rules;
  for (const std::string& id : masks) rules.push_back(retention_mask(id, model.config()));

  GenerationRequest req;
  req.mode = Mode::kNoAgsw;
  req.n_chunks = n_chunks;
  req.seed = seed;
  req.cond = cond;
  req.shift = shift;
  const GenerationResult base = generate(model, req);

  std::vector<DropRow> out;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    req.retention = rules[k];
    const GenerationResult r = generate(model, req);
    for (std::size_t c = 0; c < r.chunks.size(); ++c) {
      out.push_back({masks[k], static_cast<int>(c), chunk_mse(base.chunks[c], r.chunks[c])});
    }
  }
  return out;
}

std::string drop_csv(const std::vector<DropRow>& rows) {
  std::ostringstream out;
  out.precision(9);
  out << "mask_id,chunk,mse\n";
  for (const DropRow& r : rows) out << r.mask_id << ',' << r.chunk << ',' << r.mse << '\n';
  return out.str();
}

// Benchmark

void BenchConfig::validate() const {
  if (modes.empty()) throw ConfigError("bench: modes must not be empty");
  if (n_chunks < 1) throw ConfigError("bench: n_chunks must be >= 1");
  if (repeats < 1) throw ConfigError("bench: repeats must be >= 1");
  if (warmup < 0) throw ConfigError("bench: warmup must be >= 0");
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Restores the thread cap on scope exit.
struct ThreadPin {
  int saved = kernels::num_threads();
  ThreadPin() { kernels::set_num_threads(1); }
  ~ThreadPin() { kernels::set_num_threads(saved); }
};

}  // namespace

BenchResult bench(const DiT& model, const BenchConfig& bc, std::uint64_t seed, const Tensor& cond,
                  double shift) {
  bc.validate();
  const ThreadPin pin;
  GenerationRequest req;
  req.n_chunks = bc.n_chunks;
  req.seed = seed;
  req.cond = cond;
  req.shift = shift;

  BenchResult out;
  for (Mode mode : bc.modes) {
    req.mode = mode;
    for (int w = 0; w < bc.warmup; ++w) generate(model, req);
    std::vector<RunReport> runs;
    for (int r = 0; r < bc.repeats; ++r) runs.push_back(generate(model, req).report);
    RunReport rep = runs.front();
    for (std::size_t c = 0; c < rep.chunks.size(); ++c) {
      std::vector<double> lat;
      for (const RunReport& run : runs) lat.push_back(run.chunks[c].latency_ms);
      rep.chunks[c].latency_ms = median(lat);
    }
    out.reports.push_back(std::move(rep));
  }
  return out;
}

std::string BenchResult::csv() const {
  std::string s;
  for (std::size_t i = 0; i < reports.size(); ++i) s += reports[i].to_csv(i == 0);
  return s;
}

std::string BenchResult::table() const {
  const RunReport* base = nullptr;
  for (const RunReport& r : reports) {
    if (r.mode == Mode::kBaselineFull) base = &r;
  }
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %9s %16s %14s %12s %12s\n", "mode", "forwards", "flops",
                "latency_ms", "flop_ratio", "speedup");
  out << line;
  for (const RunReport& r : reports) {
    double flop_ratio = 0.0, speedup = 0.0;
    if (base) {
      flop_ratio = static_cast<double>(base->total_flops()) / static_cast<double>(r.total_flops());
      speedup = base->total_latency_ms() / r.total_latency_ms();
    }
    std::snprintf(line, sizeof line, "%-16s %9zu %16llu %14.3f %12.3f %12.3f\n", to_string(r.mode),
                  r.total_forwards(), static_cast<unsigned long long>(r.total_flops()),
                  r.total_latency_ms(), flop_ratio, speedup);
    out << line;
  }
  if (!base) out << "(no baseline_full row; ratio columns are 0)\n";
  return out.str();
}

}  // namespace histream
