#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "histream/checkpoint.hpp"
#include "histream/config.hpp"
#include "histream/error.hpp"

using namespace histream;

TEST(Config, EmptyObjectGivesDefaults) {
  const ConfigFile c = parse_config("{}");
  EXPECT_EQ(c, ConfigFile{});
  EXPECT_EQ(c.model, ModelConfig::toy_default());
}

TEST(Config, RoundTrip) {
  ConfigFile c;
  c.model = ModelConfig::micro();
  c.data = SyntheticVideoSpec::for_model(c.model);
  c.data.speed_max = 0.05;
  c.schedule.mode = Mode::kNoDrc;
  c.schedule.shift = 3.5;
  c.train.loss = LossMode::kEps;
  c.train.lr = 1e-3;
  c.bench.modes = {Mode::kHistream, Mode::kNaiveTwoStep};
  const ConfigFile back = parse_config(to_json(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, ShippedToyConfigParses) {
  const ConfigFile c = load_config(std::filesystem::path(HISTREAM_SOURCE_DIR) / "configs/toy.json");
  EXPECT_EQ(c.model, ModelConfig::toy_default());
  EXPECT_EQ(c.train.steps, 500);
}

TEST(Config, Rejections) {
  EXPECT_THROW(parse_config("{\"model\": {\"d_modle\": 64}}"), ConfigError);
  EXPECT_THROW(parse_config("{\"extra\": 1}"), ConfigError);
  EXPECT_THROW(parse_config("{\"train\": {\"lr\": \"fast\"}}"), ConfigError);
  EXPECT_THROW(parse_config("{\"train\": {\"loss\": \"l1\"}}"), ConfigError);
  EXPECT_THROW(parse_config("{\"schedule\": {\"mode\": \"turbo\"}}"), ConfigError);
  EXPECT_THROW(parse_config("{\"schedule\": {\"shift\": 0}}"), ConfigError);
  EXPECT_THROW(parse_config("{\"model\": {\"n_heads\": 5}}"), ConfigError);
  EXPECT_THROW(parse_config("{\"model\": "), ConfigError);
  EXPECT_THROW(parse_config("[]"), ConfigError);
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_config("/nonexistent/dir/cfg.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/cfg.json"), std::string::npos);
  }
}

TEST(Config, DataMustMatchModel) {
  ConfigFile c;
  c.data.low_h = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, HashTracksModel) {
  ModelConfig a = ModelConfig::micro();
  ModelConfig b = a;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.rope.base = 500.0;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(parse_model_config(model_to_json(b)), b);
}

TEST(Checkpoint, RoundTripAndErrors) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "histream_ckpt_test";
  fs::remove_all(dir);
  const ModelConfig cfg = ModelConfig::micro();
  const DiT model(cfg, init_params(cfg, 9, InitMode::kDense));
  save_checkpoint(dir, model);
  const DiT back = load_checkpoint(dir);
  EXPECT_EQ(back.config(), cfg);
  EXPECT_EQ(back.params(), model.params());

  EXPECT_THROW(load_checkpoint(dir / "missing"), IoError);
  fs::remove(dir / "head.w.hstn");
  EXPECT_THROW(load_checkpoint(dir), IoError);
  fs::remove_all(dir);
}
