#include "histream/cache.hpp"

#include <sstream>

#include "histream/error.hpp"

namespace histream {

DualKVCache::DualKVCache(CachePolicy policy, int n_layers, bool dual)
    : policy_(policy), n_layers_(n_layers), dual_(dual) {
  if (n_layers < 1) throw ConfigError("cache: n_layers must be >= 1");
}

void DualKVCache::check_incoming(const std::vector<LayerKV>& kv, Resolution res,
                                 bool required) const {
  if (!required) {
    if (!kv.empty()) throw ContractError("cache: low-resolution entries given to a single cache");
    return;
  }
  if (kv.size() != static_cast<std::size_t>(n_layers_)) {
    throw ContractError("cache: expected one LayerKV per layer");
  }
  for (const LayerKV& l : kv) {
    if (l.res != res) throw ContractError("cache: LayerKV resolution mismatch");
    if (l.frames != kv[0].frames || l.empty()) {
      throw ContractError("cache: layers disagree on chunk frames");
    }
  }
  if (kv[0].frames.front() != generated_) {
    throw ContractError("cache: chunk must start at frame " + std::to_string(generated_));
  }
}

void DualKVCache::append_first_chunk(std::vector<LayerKV> kv_low, std::vector<LayerKV> kv_high) {
  if (!empty() || generated_ != 0) throw StateError("append_first_chunk: cache is not empty");
  check_incoming(kv_high, Resolution::kHigh, true);
  check_incoming(kv_low, Resolution::kLow, dual_);
  high_ = std::move(kv_high);
  low_ = std::move(kv_low);
  retained_ = high_[0].frames;
  generated_ = static_cast<std::int64_t>(retained_.size());
}

void DualKVCache::agsw_update(std::vector<LayerKV> kv_low, std::vector<LayerKV> kv_high,
                              int chunk_index) {
  if (chunk_index < 1) throw StateError("agsw_update: the first chunk uses append_first_chunk");
  if (empty()) throw StateError("agsw_update: cache not initialized by the first chunk");
  check_incoming(kv_high, Resolution::kHigh, true);
  check_incoming(kv_low, Resolution::kLow, dual_);

  const std::vector<std::int64_t>& chunk = kv_high[0].frames;
  const std::vector<std::int64_t> recent(chunk.begin() + 1, chunk.end());
  const std::int64_t anchor_frame[1] = {0};
  const bool has_anchor = retained_.front() == 0;
  const std::span<const std::int64_t> anchor =
      has_anchor ? std::span<const std::int64_t>(anchor_frame) : std::span<const std::int64_t>();
  auto slide = [&](std::vector<LayerKV>& side, const std::vector<LayerKV>& incoming) {
    for (std::size_t l = 0; l < side.size(); ++l) {
      side[l] = LayerKV::concat(side[l].select(anchor), incoming[l].select(recent));
    }
  };
  slide(high_, kv_high);
  if (dual_) slide(low_, kv_low);
  retained_ = high_[0].frames;
  generated_ = chunk.back() + 1;
}

void DualKVCache::append_history(std::vector<LayerKV> kv_low, std::vector<LayerKV> kv_high,
                                 int chunk_index) {
  if (chunk_index < 1) throw StateError("append_history: the first chunk uses append_first_chunk");
  if (generated_ == 0) throw StateError("append_history: cache not initialized");
  check_incoming(kv_high, Resolution::kHigh, true);
  check_incoming(kv_low, Resolution::kLow, dual_);
  for (std::size_t l = 0; l < high_.size(); ++l) high_[l] = LayerKV::concat(high_[l], kv_high[l]);
  if (dual_) {
    for (std::size_t l = 0; l < low_.size(); ++l) low_[l] = LayerKV::concat(low_[l], kv_low[l]);
  }
  retained_ = high_[0].frames;
  generated_ = kv_high[0].frames.back() + 1;
}

void DualKVCache::commit(int chunk_index, std::vector<LayerKV> kv_low,
                         std::vector<LayerKV> kv_high) {
  if (chunk_index == 0) {
    append_first_chunk(std::move(kv_low), std::move(kv_high));
  } else if (policy_ == CachePolicy::kAgsw) {
    agsw_update(std::move(kv_low), std::move(kv_high), chunk_index);
  } else {
    append_history(std::move(kv_low), std::move(kv_high), chunk_index);
  }
}

std::span<const LayerKV> DualKVCache::context_for(Resolution res) const {
  if (retained_.empty()) return {};
  if (res == Resolution::kLow) {
    if (!dual_) throw ContractError("context_for: cache holds no low-resolution side");
    return low_;
  }
  return high_;
}

void DualKVCache::retain(std::span<const std::int64_t> frames) {
  for (LayerKV& l : high_) l = l.select(frames);
  for (LayerKV& l : low_) l = l.select(frames);
  retained_.assign(frames.begin(), frames.end());
}

void DualKVCache::apply_retention_mask(const std::set<std::int64_t>& keep) {
  for (std::int64_t f : keep) {
    if (f < 0 || f >= generated_) {
      throw ContractError("apply_retention_mask: frame " + std::to_string(f) +
                          " was never generated");
    }
  }
  std::vector<std::int64_t> kept;
  for (std::int64_t f : retained_) {
    if (keep.count(f)) kept.push_back(f);
  }
  if (kept == retained_) return;
  retain(kept);
}

std::size_t DualKVCache::byte_size(Resolution res) const {
  std::size_t n = 0;
  for (const LayerKV& l : res == Resolution::kLow ? low_ : high_) n += l.byte_size();
  return n;
}

std::size_t DualKVCache::byte_size() const {
  return byte_size(Resolution::kLow) + byte_size(Resolution::kHigh);
}

std::string DualKVCache::dump() const {
  std::ostringstream out;
  out << "policy: " << to_string(policy_) << '\n';
  out << "frames_generated: " << generated_ << '\n';
  out << "retained:";
  for (std::int64_t f : retained_) out << ' ' << f;
  out << '\n';
  out << "bytes_low: " << byte_size(Resolution::kLow) << '\n';
  out << "bytes_high: " << byte_size(Resolution::kHigh) << '\n';
  out << "bytes_total: " << byte_size() << '\n';
  return out.str();
}

}  // namespace histream
