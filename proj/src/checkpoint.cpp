#include "histream/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "histream/config.hpp"
#include "histream/error.hpp"
#include "histream/hstn.hpp"

namespace histream {

void save_checkpoint(const std::filesystem::path& dir, const DiT& model) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  {
    std::ofstream out(dir / "config.json");
    if (!out) throw IoError("cannot write " + (dir / "config.json").string());
    out << model_to_json(model.config());
  }
  model.params().for_each(
      [&](const std::string& name, const Tensor& t) { hstn::save(dir / (name + ".hstn"), t); });
}

DiT load_checkpoint(const std::filesystem::path& dir) {
  const std::filesystem::path cfg_path = dir / "config.json";
  std::ifstream in(cfg_path);
  if (!in) throw IoError("checkpoint config not found: " + cfg_path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const ModelConfig cfg = parse_model_config(buf.str());
  ModelParams<float> params = ModelParams<float>::zeros(cfg);
  params.for_each([&](const std::string& name, Tensor& t) {
    Tensor loaded = hstn::load(dir / (name + ".hstn"));
    if (loaded.dims() != t.dims()) {
      throw ShapeError("checkpoint tensor " + name + " has shape " +
                       dims_to_string(loaded.dims()) + ", expected " + dims_to_string(t.dims()));
    }
    t = std::move(loaded);
  });
  return DiT(cfg, std::move(params));
}

}  // namespace histream
