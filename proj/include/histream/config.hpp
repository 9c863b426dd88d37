#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "histream/analysis.hpp"
#include "histream/model.hpp"
#include "histream/training.hpp"

namespace histream {

struct ScheduleConfig {
  Mode mode = Mode::kHistream;
  int n_chunks = 7;
  /// Inference timestep shift.
  double shift = 7.0;

  void validate() const;
  bool operator==(const ScheduleConfig&) const = default;
};

/// The JSON config document. Sections: model, schedule, train (with a nested
/// "data" object for the synthetic video), bench. Missing keys keep their
/// defaults; unknown keys are rejected.
struct ConfigFile {
  ModelConfig model = ModelConfig::toy_default();
  ScheduleConfig schedule;
  TrainConfig train;
  SyntheticVideoSpec data = SyntheticVideoSpec::for_model(ModelConfig::toy_default());
  BenchConfig bench;

  /// Checks every section and that `data` matches the model shape.
  void validate() const;
  bool operator==(const ConfigFile&) const = default;
};

/// Throws ConfigError on malformed JSON, wrong types, unknown keys or
/// invalid values.
ConfigFile parse_config(const std::string& json_text);
ConfigFile load_config(const std::filesystem::path& path);
/// Complete document; parse_config(to_json(c)) == c.
std::string to_json(const ConfigFile& c);
/// Model section alone, as stored in checkpoints.
std::string model_to_json(const ModelConfig& m);
ModelConfig parse_model_config(const std::string& json_text);

/// FNV-1a 64 of the canonical model JSON.
std::uint64_t config_hash(const ModelConfig& m);

}  // namespace histream
