#include "histream/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "histream/error.hpp"

namespace histream {

using nlohmann::json;

void ScheduleConfig::validate() const {
  if (n_chunks < 1) throw ConfigError("schedule.n_chunks must be >= 1");
  if (!(shift > 0.0)) throw ConfigError("schedule.shift must be > 0");
}

void ConfigFile::validate() const {
  model.validate();
  schedule.validate();
  train.validate();
  data.validate();
  bench.validate();
  if (data.channels != model.latent_channels || data.low_h != model.low_h ||
      data.low_w != model.low_w || data.chunk_frames != model.chunk_frames ||
      data.d_cond != model.d_cond) {
    throw ConfigError("train.data shape must match the model");
  }
}

namespace {

// Reads keys from one JSON object, rejecting anything it was not asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError("unknown key " + path_ + "." + k);
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_model(const json& j, ModelConfig& m) {
  Section s(j, "model");
  s.get("d_model", m.d_model);
  s.get("n_layers", m.n_layers);
  s.get("n_heads", m.n_heads);
  s.get("mlp_hidden", m.mlp_hidden);
  s.get("latent_channels", m.latent_channels);
  s.get("low_h", m.low_h);
  s.get("low_w", m.low_w);
  s.get("chunk_frames", m.chunk_frames);
  s.get("d_cond", m.d_cond);
  s.get("t_embed_dim", m.t_embed_dim);
  s.get("ntk_scale_high", m.ntk_scale_high);
  s.get("attn_scale_first_chunk", m.attn_scale_first_chunk);
  s.get("attn_scale_rest", m.attn_scale_rest);
  if (m.n_heads > 0) m.rope.head_dim = m.head_dim();
  m.rope.axis_split = RopeConfig::default_split(m.rope.head_dim);
  if (const json* r = s.child("rope")) {
    Section rs(*r, "model.rope");
    rs.get("axis_split", m.rope.axis_split);
    rs.get("base", m.rope.base);
    double low = m.rope.ntk_scale[0];
    rs.get("ntk_scale_low", low);
    m.rope.ntk_scale = {low, low};
    rs.finish();
  }
  s.finish();
}

json write_model(const ModelConfig& m) {
  return {{"d_model", m.d_model},
          {"n_layers", m.n_layers},
          {"n_heads", m.n_heads},
          {"mlp_hidden", m.mlp_hidden},
          {"latent_channels", m.latent_channels},
          {"low_h", m.low_h},
          {"low_w", m.low_w},
          {"chunk_frames", m.chunk_frames},
          {"d_cond", m.d_cond},
          {"t_embed_dim", m.t_embed_dim},
          {"ntk_scale_high", m.ntk_scale_high},
          {"attn_scale_first_chunk", m.attn_scale_first_chunk},
          {"attn_scale_rest", m.attn_scale_rest},
          {"rope",
           {{"axis_split", m.rope.axis_split},
            {"base", m.rope.base},
            {"ntk_scale_low", m.rope.ntk_scale[0]}}}};
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

ConfigFile parse_config(const std::string& text) {
  const json doc = parse_text(text);
  ConfigFile c;
  Section top(doc, "config");
  if (const json* m = top.child("model")) read_model(*m, c.model);
  c.data = SyntheticVideoSpec::for_model(c.model);

  if (const json* j = top.child("schedule")) {
    Section s(*j, "schedule");
    std::string mode = to_string(c.schedule.mode);
    s.get("mode", mode);
    c.schedule.mode = parse_mode(mode);
    s.get("n_chunks", c.schedule.n_chunks);
    s.get("shift", c.schedule.shift);
    s.finish();
  }
  if (const json* j = top.child("train")) {
    Section s(*j, "train");
    TrainConfig& t = c.train;
    s.get("steps", t.steps);
    s.get("batch", t.batch);
    s.get("lr", t.lr);
    std::string loss = to_string(t.loss);
    s.get("loss", loss);
    t.loss = parse_loss_mode(loss);
    s.get("shift", t.shift);
    s.get("t_min", t.t_min);
    s.get("max_chunk", t.max_chunk);
    s.get("high_res_every", t.high_res_every);
    s.get("ema_decay", t.ema_decay);
    if (const json* d = s.child("data")) {
      Section ds(*d, "train.data");
      ds.get("speed_max", c.data.speed_max);
      ds.get("sigma_min", c.data.sigma_min);
      ds.get("sigma_max", c.data.sigma_max);
      ds.get("amplitude", c.data.amplitude);
      ds.finish();
    }
    s.finish();
  }
  if (const json* j = top.child("bench")) {
    Section s(*j, "bench");
    if (s.has("modes")) {
      std::vector<std::string> names;
      s.get("modes", names);
      c.bench.modes.clear();
      for (const std::string& n : names) c.bench.modes.push_back(parse_mode(n));
    } else {
      s.child("modes");
    }
    s.get("n_chunks", c.bench.n_chunks);
    s.get("repeats", c.bench.repeats);
    s.get("warmup", c.bench.warmup);
    s.finish();
  }
  top.finish();
  c.validate();
  return c;
}

ConfigFile load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string to_json(const ConfigFile& c) {
  std::vector<std::string> modes;
  for (Mode m : c.bench.modes) modes.emplace_back(to_string(m));
  const json doc = {
      {"model", write_model(c.model)},
      {"schedule",
       {{"mode", to_string(c.schedule.mode)},
        {"n_chunks", c.schedule.n_chunks},
        {"shift", c.schedule.shift}}},
      {"train",
       {{"steps", c.train.steps},
        {"batch", c.train.batch},
        {"lr", c.train.lr},
        {"loss", to_string(c.train.loss)},
        {"shift", c.train.shift},
        {"t_min", c.train.t_min},
        {"max_chunk", c.train.max_chunk},
        {"high_res_every", c.train.high_res_every},
        {"ema_decay", c.train.ema_decay},
        {"data",
         {{"speed_max", c.data.speed_max},
          {"sigma_min", c.data.sigma_min},
          {"sigma_max", c.data.sigma_max},
          {"amplitude", c.data.amplitude}}}}},
      {"bench",
       {{"modes", modes},
        {"n_chunks", c.bench.n_chunks},
        {"repeats", c.bench.repeats},
        {"warmup", c.bench.warmup}}}};
  return doc.dump(2) + "\n";
}

std::string model_to_json(const ModelConfig& m) { return write_model(m).dump(2) + "\n"; }

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig m = ModelConfig::toy_default();
  read_model(parse_text(text), m);
  m.validate();
  return m;
}

std::uint64_t config_hash(const ModelConfig& m) {
  const std::string s = write_model(m).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace histream
