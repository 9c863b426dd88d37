#pragma once

#include <span>
#include <string>
#include <string_view>

namespace histream {

/// Generation variants: the full method, its accelerated form, and the
/// ablations that switch one mechanism off.
enum class Mode {
  kHistream,       // low+high phases, dual cache, anchor + sliding window
  kHistreamPlus,   // as above, chunks after the first take the 2-step path
  kBaselineFull,   // all steps at high resolution, full history
  kNoDrc,          // all steps at high resolution, anchor + sliding window
  kNoAgsw,         // low+high phases, dual cache, full history
  kNaiveTwoStep,   // 2-step path for every chunk
};

enum class CachePolicy { kAgsw, kFullHistory };

struct ModeTraits {
  /// Runs a low-resolution phase and keeps a low-resolution cache.
  bool dual_resolution;
  CachePolicy policy;
};

ModeTraits traits(Mode mode);

/// Throws ConfigError on an unknown name.
Mode parse_mode(std::string_view name);
const char* to_string(Mode mode);
const char* to_string(CachePolicy policy);
std::span<const Mode> all_modes();

}  // namespace histream
