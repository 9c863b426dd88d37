#include <gtest/gtest.h>

#include "histream/cache.hpp"
#include "histream/error.hpp"

using namespace histream;

namespace {

constexpr int kLayers = 2;

// One chunk of fake per-layer entries; values encode (layer, frame).
std::vector<LayerKV> chunk_kv(std::int64_t start, int m, Resolution res) {
  const std::size_t tpf = res == Resolution::kHigh ? 16 : 4;
  std::vector<LayerKV> out;
  for (int l = 0; l < kLayers; ++l) {
    LayerKV kv;
    kv.res = res;
    kv.keys = Tensor({static_cast<std::size_t>(m), tpf, 2, 4});
    kv.values = kv.keys;
    for (int f = 0; f < m; ++f) {
      kv.frames.push_back(start + f);
      for (std::size_t i = 0; i < tpf * 8; ++i) {
        kv.keys[f * tpf * 8 + i] = static_cast<float>(100 * l + start + f);
        kv.values[f * tpf * 8 + i] = -static_cast<float>(100 * l + start + f);
      }
    }
    out.push_back(std::move(kv));
  }
  return out;
}

void commit(DualKVCache& c, int i, int m = 3) {
  c.commit(i, c.dual() ? chunk_kv(i * m, m, Resolution::kLow) : std::vector<LayerKV>{},
           chunk_kv(i * m, m, Resolution::kHigh));
}

}  // namespace

TEST(Cache, AgswRetainedSet) {
  DualKVCache c(CachePolicy::kAgsw, kLayers);
  EXPECT_TRUE(c.empty());
  EXPECT_TRUE(c.context_for(Resolution::kHigh).empty());
  commit(c, 0);
  EXPECT_EQ(c.retained_frames(), (std::vector<std::int64_t>{0, 1, 2}));
  commit(c, 1);
  EXPECT_EQ(c.retained_frames(), (std::vector<std::int64_t>{0, 4, 5}));
  commit(c, 2);
  EXPECT_EQ(c.retained_frames(), (std::vector<std::int64_t>{0, 7, 8}));
  EXPECT_EQ(c.frames_generated(), 9);
  for (Resolution r : {Resolution::kLow, Resolution::kHigh}) {
    const auto ctx = c.context_for(r);
    ASSERT_EQ(ctx.size(), 2u);
    EXPECT_EQ(ctx[1].frames, (std::vector<std::int64_t>{0, 7, 8}));
    EXPECT_EQ(ctx[1].res, r);
    const std::size_t tpf = ctx[1].tokens_per_frame();
    // Anchor entry is the one written by chunk 0.
    EXPECT_EQ(ctx[1].keys[0], 100.0f);
    EXPECT_EQ(ctx[1].keys[tpf * 8], 107.0f);
  }
}

TEST(Cache, AgswBytesConstantFullHistoryGrows) {
  DualKVCache a(CachePolicy::kAgsw, kLayers);
  DualKVCache f(CachePolicy::kFullHistory, kLayers);
  std::size_t prev_full = 0, agsw_bytes = 0;
  for (int i = 0; i < 10; ++i) {
    commit(a, i);
    commit(f, i);
    if (i == 0) agsw_bytes = a.byte_size();
    EXPECT_EQ(a.byte_size(), agsw_bytes);
    EXPECT_GT(f.byte_size(), prev_full);
    prev_full = f.byte_size();
  }
  EXPECT_EQ(f.retained_frames().size(), 30u);
  EXPECT_EQ(a.byte_size(Resolution::kHigh), 4 * a.byte_size(Resolution::kLow));
}

TEST(Cache, SingleResolution) {
  DualKVCache c(CachePolicy::kAgsw, kLayers, false);
  commit(c, 0);
  commit(c, 1);
  EXPECT_EQ(c.byte_size(Resolution::kLow), 0u);
  EXPECT_THROW(c.context_for(Resolution::kLow), ContractError);
  EXPECT_THROW(c.commit(2, chunk_kv(6, 3, Resolution::kLow), chunk_kv(6, 3, Resolution::kHigh)),
               ContractError);
}

TEST(Cache, StateErrors) {
  DualKVCache c(CachePolicy::kAgsw, kLayers);
  EXPECT_THROW(c.agsw_update(chunk_kv(0, 3, Resolution::kLow), chunk_kv(0, 3, Resolution::kHigh), 1),
               StateError);
  commit(c, 0);
  EXPECT_THROW(c.append_first_chunk(chunk_kv(0, 3, Resolution::kLow),
                                    chunk_kv(0, 3, Resolution::kHigh)),
               StateError);
  EXPECT_THROW(c.agsw_update(chunk_kv(3, 3, Resolution::kLow), chunk_kv(3, 3, Resolution::kHigh), 0),
               StateError);
}

TEST(Cache, ContractErrors) {
  DualKVCache c(CachePolicy::kAgsw, kLayers);
  commit(c, 0);
  // Wrong start frame.
  EXPECT_THROW(c.commit(1, chunk_kv(4, 3, Resolution::kLow), chunk_kv(4, 3, Resolution::kHigh)),
               ContractError);
  // Resolution swapped.
  EXPECT_THROW(c.commit(1, chunk_kv(3, 3, Resolution::kHigh), chunk_kv(3, 3, Resolution::kLow)),
               ContractError);
  auto one_layer = chunk_kv(3, 3, Resolution::kHigh);
  one_layer.pop_back();
  EXPECT_THROW(c.commit(1, chunk_kv(3, 3, Resolution::kLow), one_layer), ContractError);
  EXPECT_THROW(DualKVCache(CachePolicy::kAgsw, 0), ConfigError);
}

TEST(Cache, RetentionMask) {
  DualKVCache c(CachePolicy::kFullHistory, kLayers);
  commit(c, 0);
  commit(c, 1);
  c.apply_retention_mask({0, 2, 5});
  EXPECT_EQ(c.retained_frames(), (std::vector<std::int64_t>{0, 2, 5}));
  EXPECT_EQ(c.context_for(Resolution::kLow)[0].frames, (std::vector<std::int64_t>{0, 2, 5}));
  // Already evicted frames are ignored, never-generated ones rejected.
  c.apply_retention_mask({0, 1, 5});
  EXPECT_EQ(c.retained_frames(), (std::vector<std::int64_t>{0, 5}));
  EXPECT_THROW(c.apply_retention_mask({0, 6}), ContractError);
  commit(c, 2);
  EXPECT_EQ(c.retained_frames(), (std::vector<std::int64_t>{0, 5, 6, 7, 8}));
}

TEST(Cache, AgswWithoutAnchorAfterMask) {
  DualKVCache c(CachePolicy::kAgsw, kLayers);
  commit(c, 0);
  c.apply_retention_mask({1, 2});
  commit(c, 1);
  EXPECT_EQ(c.retained_frames(), (std::vector<std::int64_t>{4, 5}));
}

TEST(Cache, Dump) {
  DualKVCache c(CachePolicy::kAgsw, kLayers);
  commit(c, 0);
  commit(c, 1);
  const std::string d = c.dump();
  EXPECT_NE(d.find("policy: agsw"), std::string::npos);
  EXPECT_NE(d.find("retained: 0 4 5"), std::string::npos);
  EXPECT_NE(d.find("bytes_total: " + std::to_string(c.byte_size())), std::string::npos);
}
