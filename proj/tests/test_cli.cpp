#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "histream/hstn.hpp"

using namespace histream;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const fs::path& root() {
  static const fs::path r = [] {
    const fs::path d = fs::temp_directory_path() / "histream_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    std::ofstream(d / "small.json") << R"({
      "model": {"d_model": 32, "n_layers": 2, "n_heads": 2, "mlp_hidden": 64,
                "latent_channels": 2, "low_h": 2, "low_w": 2, "chunk_frames": 3,
                "d_cond": 4, "t_embed_dim": 8},
      "train": {"steps": 4, "batch": 2, "high_res_every": 2}
    })";
    return d;
  }();
  return r;
}

/// Trains the small model once and returns its checkpoint.
const fs::path& ckpt() {
  static const fs::path c = [] {
    const CliRun r = cli({"train", "--config", (root() / "small.json").string(), "--seed", "3",
                       "--out", (root() / "train_a").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return root() / "train_a" / "ckpt";
  }();
  return c;
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"fly"}).code, 2);
  EXPECT_EQ(cli({"generate", "--mode", "histream"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, MissingConfigExitsTwo) {
  const CliRun r = cli({"train", "--config", "/no/such.json", "--out", (root() / "x").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("/no/such.json"), std::string::npos);
}

TEST(Cli, BadModeAndMissingCheckpoint) {
  EXPECT_EQ(cli({"generate", "--ckpt", ckpt().string(), "--mode", "fast", "--out",
                 (root() / "g").string()})
                .code,
            2);
  EXPECT_EQ(cli({"generate", "--ckpt", (root() / "nope").string(), "--out",
                 (root() / "g").string()})
                .code,
            2);
}

TEST(Cli, TrainIsDeterministic) {
  ckpt();
  const CliRun r = cli({"train", "--config", (root() / "small.json").string(), "--seed", "3",
                     "--out", (root() / "train_b").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string a = slurp(root() / "train_a" / "loss.csv");
  EXPECT_EQ(a, slurp(root() / "train_b" / "loss.csv"));
  EXPECT_EQ(a.substr(0, a.find('\n')), "step,loss,ema");
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 5);
  EXPECT_TRUE(fs::exists(root() / "train_a" / "config.json"));
}

TEST(Cli, GenerateCountsAndSharedFirstChunk) {
  const fs::path h = root() / "gen_h", p = root() / "gen_p";
  const CliRun a = cli({"generate", "--ckpt", ckpt().string(), "--mode", "histream", "--chunks", "7",
                     "--seed", "1", "--out", h.string()});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("frames 21"), std::string::npos);
  EXPECT_NE(a.out.find("forwards_total: 28"), std::string::npos);
  const CliRun b = cli({"generate", "--ckpt", ckpt().string(), "--mode", "histream_plus",
                     "--chunks", "7", "--seed", "1", "--out", p.string()});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(b.out.find("forwards_total: 16"), std::string::npos);
  EXPECT_EQ(hstn::load(h / "frames" / "chunk_0000.hstn"), hstn::load(p / "frames" / "chunk_0000.hstn"));
  EXPECT_NE(hstn::load(h / "frames" / "chunk_0001.hstn"), hstn::load(p / "frames" / "chunk_0001.hstn"));
  EXPECT_TRUE(fs::exists(h / "run_report.csv"));
}

TEST(Cli, GeneratePgm) {
  const fs::path d = root() / "gen_pgm";
  ASSERT_EQ(cli({"generate", "--ckpt", ckpt().string(), "--chunks", "2", "--export", "pgm",
                 "--out", d.string()})
                .code,
            0);
  EXPECT_TRUE(fs::exists(d / "frames" / "frame_0005.pgm"));
  EXPECT_EQ(cli({"generate", "--ckpt", ckpt().string(), "--export", "png", "--out", d.string()})
                .code,
            2);
}

TEST(Cli, Bench) {
  const fs::path d = root() / "bench";
  const CliRun r = cli({"bench", "--ckpt", ckpt().string(), "--chunks", "3", "--repeats", "1",
                     "--warmup", "0", "--out", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = slurp(d / "bench.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 10);
  EXPECT_NE(slurp(d / "bench.txt").find("speedup"), std::string::npos);
}

TEST(Cli, AnalyzeDropAndAttn) {
  const fs::path d = root() / "an";
  const CliRun r = cli({"analyze", "--ckpt", ckpt().string(), "--drop", "keep_all,agsw", "--chunks",
                     "4", "--out", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("keep_all mean_mse 0\n"), std::string::npos);
  EXPECT_NE(slurp(d / "drop.csv").find("agsw,3,"), std::string::npos);

  const CliRun a = cli({"analyze", "--ckpt", ckpt().string(), "--attn", "--chunks", "3", "--out",
                     d.string()});
  ASSERT_EQ(a.code, 0) << a.err;
  std::istringstream csv(slurp(d / "attn.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "layer,head,query_frame,context_frame,mass");
  std::map<std::string, double> sums;
  while (std::getline(csv, line)) {
    const auto third = line.find(',', line.find(',', line.find(',') + 1) + 1);
    sums[line.substr(0, third)] += std::stod(line.substr(line.rfind(',') + 1));
  }
  EXPECT_FALSE(sums.empty());
  for (const auto& [k, v] : sums) EXPECT_NEAR(v, 1.0, 1e-5) << k;

  EXPECT_EQ(cli({"analyze", "--ckpt", ckpt().string(), "--attn", "--mode", "histream", "--out",
                 d.string()})
                .code,
            2);
  EXPECT_EQ(cli({"analyze", "--ckpt", ckpt().string(), "--out", d.string()}).code, 2);
  EXPECT_EQ(cli({"analyze", "--ckpt", ckpt().string(), "--drop", "bogus", "--out", d.string()})
                .code,
            2);
}
