#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>

#include <CLI11.hpp>

#include "histream/analysis.hpp"
#include "histream/checkpoint.hpp"
#include "histream/config.hpp"
#include "histream/error.hpp"

namespace histream {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

/// Conditioning for inference: the motion descriptor of synthetic video `seed`.
Tensor default_cond(const ModelConfig& cfg, std::uint64_t seed) {
  return synth_chunk(SyntheticVideoSpec::for_model(cfg), seed, 0).cond;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = std::min(s.find(',', pos), s.size());
    if (comma > pos) out.push_back(s.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

struct TrainArgs {
  std::string config, out;
  std::uint64_t seed = 0;
  int steps = 0;
};

struct GenerateArgs {
  std::string ckpt, mode = "histream", out, format = "hstn";
  int chunks = 7;
  std::uint64_t seed = 0;
  double shift = 7.0;
};

struct BenchArgs {
  std::string ckpt, modes = "baseline_full,histream,histream_plus", out;
  int chunks = 7, repeats = 3, warmup = 1;
  std::uint64_t seed = 0;
};

struct AnalyzeArgs {
  std::string ckpt, drop, out, mode = "no_agsw";
  bool attn = false;
  int chunks = 7;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  ConfigFile cfg = load_config(a.config);
  if (a.steps > 0) cfg.train.steps = a.steps;
  cfg.validate();
  const fs::path dir = a.out;
  make_dir(dir);
  DiT model(cfg.model, init_params(cfg.model, a.seed));
  const int every = std::max(1, cfg.train.steps / 10);
  const TrainResult r = train(model, cfg.train, cfg.data, a.seed, [&](const LossPoint& p) {
    if (p.step % every == 0 || p.step + 1 == cfg.train.steps) {
      out << "step " << p.step << " loss " << p.loss << " ema " << p.ema << '\n';
    }
  });
  save_checkpoint(dir / "ckpt", model);
  write_file(dir / "loss.csv", loss_csv(r.curve));
  write_file(dir / "config.json", to_json(cfg));
  out << "initial_ema " << r.initial_smoothed() << " final_ema " << r.final_smoothed() << '\n';
  out << "checkpoint " << (dir / "ckpt").string() << '\n';
  return kExitOk;
}

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  GenerationRequest req;
  req.mode = parse_mode(a.mode);
  const ExportFormat format = parse_export_format(a.format);
  const DiT model = load_checkpoint(a.ckpt);
  req.n_chunks = a.chunks;
  req.seed = a.seed;
  req.shift = a.shift;
  req.cond = default_cond(model.config(), a.seed);
  const GenerationResult r = generate(model, req);
  const fs::path dir = a.out;
  export_frames(r, dir / "frames", format);
  write_file(dir / "run_report.txt", r.report.to_text());
  write_file(dir / "run_report.csv", r.report.to_csv());
  std::size_t frames = 0;
  for (const LatentChunk& c : r.chunks) frames += c.frame_count();
  out << "frames " << frames << '\n' << r.report.to_text();
  return kExitOk;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  BenchConfig bc;
  bc.modes.clear();
  for (const std::string& m : split_list(a.modes)) bc.modes.push_back(parse_mode(m));
  bc.n_chunks = a.chunks;
  bc.repeats = a.repeats;
  bc.warmup = a.warmup;
  bc.validate();
  const DiT model = load_checkpoint(a.ckpt);
  const BenchResult r = bench(model, bc, a.seed, default_cond(model.config(), a.seed));
  const fs::path dir = a.out;
  make_dir(dir);
  write_file(dir / "bench.csv", r.csv());
  write_file(dir / "bench.txt", r.table());
  out << r.table();
  return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (a.attn == !a.drop.empty()) throw ConfigError("analyze: give exactly one of --attn or --drop");
  const Mode mode = parse_mode(a.mode);
  std::vector<std::string> masks;
  if (!a.attn) {
    masks = split_list(a.drop);
    if (masks.empty()) throw ConfigError("analyze: --drop needs at least one mask");
  }
  const DiT model = load_checkpoint(a.ckpt);
  for (const std::string& m : masks) retention_mask(m, model.config());
  const Tensor cond = default_cond(model.config(), a.seed);
  const fs::path dir = a.out;
  make_dir(dir);
  if (a.attn) {
    const AttnStats s = attn_sink_stats(model, mode, a.chunks, a.seed, cond);
    write_file(dir / "attn.csv", s.to_csv());
    out << "frame ranking by mean attention mass:\n";
    for (const auto& [frame, mass] : s.frame_ranking()) out << "  " << frame << ' ' << mass << '\n';
  } else {
    const std::vector<DropRow> rows = frame_drop_ablation(model, a.seed, a.chunks, masks, cond);
    write_file(dir / "drop.csv", drop_csv(rows));
    for (const std::string& m : masks) {
      double sum = 0.0;
      int n = 0;
      for (const DropRow& r : rows) {
        if (r.mask_id == m) sum += r.mse, ++n;
      }
      out << m << " mean_mse " << (n ? sum / n : 0.0) << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Streaming chunk-wise video latent generation with a toy diffusion transformer",
               "histream");
  app.require_subcommand(1);

  TrainArgs ta;
  CLI::App* train_cmd = app.add_subcommand("train", "Train the toy model on synthetic video");
  train_cmd->add_option("--config", ta.config, "JSON config file")->required();
  train_cmd->add_option("--seed", ta.seed, "Random seed");
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--steps", ta.steps, "Override train.steps");

  GenerateArgs ga;
  CLI::App* gen_cmd = app.add_subcommand("generate", "Generate latent video chunks");
  gen_cmd->add_option("--ckpt", ga.ckpt, "Checkpoint directory")->required();
  gen_cmd->add_option("--mode", ga.mode, "histream, histream_plus, baseline_full, no_drc, "
                                         "no_agsw or naive_two_step");
  gen_cmd->add_option("--chunks", ga.chunks, "Number of chunks");
  gen_cmd->add_option("--seed", ga.seed, "Random seed");
  gen_cmd->add_option("--shift", ga.shift, "Timestep shift");
  gen_cmd->add_option("--out", ga.out, "Output directory")->required();
  gen_cmd->add_option("--export", ga.format, "hstn or pgm");

  BenchArgs ba;
  CLI::App* bench_cmd = app.add_subcommand("bench", "Time modes against baseline_full");
  bench_cmd->add_option("--ckpt", ba.ckpt, "Checkpoint directory")->required();
  bench_cmd->add_option("--modes", ba.modes, "Comma-separated modes");
  bench_cmd->add_option("--chunks", ba.chunks, "Chunks per run");
  bench_cmd->add_option("--repeats", ba.repeats, "Timed runs per mode");
  bench_cmd->add_option("--warmup", ba.warmup, "Discarded runs per mode");
  bench_cmd->add_option("--seed", ba.seed, "Random seed");
  bench_cmd->add_option("--out", ba.out, "Output directory")->required();

  AnalyzeArgs aa;
  CLI::App* an_cmd = app.add_subcommand("analyze", "Attention-sink statistics or frame dropping");
  an_cmd->add_option("--ckpt", aa.ckpt, "Checkpoint directory")->required();
  an_cmd->add_flag("--attn", aa.attn, "Record attention mass per context frame");
  an_cmd->add_option("--drop", aa.drop, "Comma-separated masks: keep_all, drop_anchor, "
                                        "drop_mid, agsw");
  an_cmd->add_option("--mode", aa.mode, "Mode for --attn");
  an_cmd->add_option("--chunks", aa.chunks, "Number of chunks");
  an_cmd->add_option("--seed", aa.seed, "Random seed");
  an_cmd->add_option("--out", aa.out, "Output directory")->required();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(ta, out);
    if (gen_cmd->parsed()) return cmd_generate(ga, out);
    if (bench_cmd->parsed()) return cmd_bench(ba, out);
    return cmd_analyze(aa, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace histream
