#pragma once

#include <filesystem>

#include "histream/model.hpp"

namespace histream {

/// Writes config.json (model section) and one <name>.hstn per parameter.
void save_checkpoint(const std::filesystem::path& dir, const DiT& model);

/// Throws IoError for missing files, ConfigError for a bad config and
/// ShapeError when a tensor does not match the configured shape.
DiT load_checkpoint(const std::filesystem::path& dir);

}  // namespace histream
