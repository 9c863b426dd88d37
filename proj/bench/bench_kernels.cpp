// Serial reference vs OpenMP kernels. Range arg 0 is the problem size, arg 1
// the thread cap for the parallel variant.

#include <benchmark/benchmark.h>

#include <thread>

#include "histream/kernels.hpp"
#include "histream/model.hpp"
#include "histream/rng.hpp"

namespace {

using namespace histream;
namespace k = histream::kernels;

std::vector<float> randn(std::size_t n, std::uint64_t key) {
  const Tensor t = gaussian(Rng(1), key, {n});
  return {t.data().begin(), t.data().end()};
}

int max_threads() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

void thread_args(benchmark::internal::Benchmark* b, std::initializer_list<int> sizes) {
  for (int s : sizes) {
    b->Args({s, 0});
    for (int t = 1; t <= max_threads(); t *= 2) b->Args({s, t});
  }
  b->ArgNames({"n", "threads"});
}

/// threads == 0 runs the serial reference.
template <class Serial, class Parallel>
void run(benchmark::State& state, Serial serial, Parallel parallel) {
  const int threads = static_cast<int>(state.range(1));
  const int saved = k::num_threads();
  if (threads > 0) k::set_num_threads(threads);
  for (auto _ : state) {
    if (threads == 0) {
      serial();
    } else {
      parallel();
    }
    benchmark::ClobberMemory();
  }
  k::set_num_threads(saved);
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto a = randn(n * n, 1), b = randn(n * n, 2);
  std::vector<float> c(n * n);
  run(state, [&] { k::serial::matmul<float>(a, b, c, n, n, n); },
      [&] { k::parallel::matmul<float>(a, b, c, n, n, n); });
  state.counters["GFLOPS"] = benchmark::Counter(2.0 * n * n * n * state.iterations(),
                                                benchmark::Counter::kIsRate,
                                                benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Matmul)->Apply([](auto* b) { thread_args(b, {128, 384}); })->Unit(benchmark::kMicrosecond);

void BM_Softmax(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto src = randn(n * n, 3);
  std::vector<float> x = src;
  run(state, [&] { k::serial::softmax_rows<float>(x, n, n); },
      [&] { k::parallel::softmax_rows<float>(x, n, n); });
}
BENCHMARK(BM_Softmax)->Apply([](auto* b) { thread_args(b, {192, 768}); })->Unit(benchmark::kMicrosecond);

void BM_LayerNorm(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), cols = 128;
  const auto x = randn(rows * cols, 4);
  std::vector<float> y(x.size()), rstd(rows);
  run(state, [&] { k::serial::layernorm_rows<float>(x, y, rstd, rows, cols, 1e-6f); },
      [&] { k::parallel::layernorm_rows<float>(x, y, rstd, rows, cols, 1e-6f); });
}
BENCHMARK(BM_LayerNorm)->Apply([](auto* b) { thread_args(b, {192, 3072}); })->Unit(benchmark::kMicrosecond);

void BM_Resample(benchmark::State& state) {
  const std::size_t planes = static_cast<std::size_t>(state.range(0)), h = 16, w = 16;
  const auto x = randn(planes * h * w, 5);
  std::vector<float> up(planes * 4 * h * w), down(planes * h * w / 4);
  run(state,
      [&] {
        k::serial::upsample_bilinear2<float>(x, up, planes, h, w);
        k::serial::downsample_avg2<float>(x, down, planes, h, w);
      },
      [&] {
        k::parallel::upsample_bilinear2<float>(x, up, planes, h, w);
        k::parallel::downsample_avg2<float>(x, down, planes, h, w);
      });
}
BENCHMARK(BM_Resample)->Apply([](auto* b) { thread_args(b, {12, 384}); })->Unit(benchmark::kMicrosecond);

/// One high-resolution denoising forward of the toy model with a full
/// sliding-window context; threads == 0 means a cap of 1.
void BM_ToyForward(benchmark::State& state) {
  const ModelConfig cfg = ModelConfig::toy_default();
  const DiT model(cfg, init_params(cfg, 1, InitMode::kDense));
  const LatentChunk x{gaussian(Rng(2), 0, cfg.chunk_dims(Resolution::kHigh)), Resolution::kHigh, 3};
  const LatentChunk prev{gaussian(Rng(2), 1, cfg.chunk_dims(Resolution::kHigh)), Resolution::kHigh, 0};
  const std::vector<float> cond(static_cast<std::size_t>(cfg.d_cond), 0.5f);
  const auto ctx = model.forward_kv(prev, cond, {});
  const int saved = k::num_threads();
  k::set_num_threads(std::max<int>(1, static_cast<int>(state.range(1))));
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x, 0.5f, cond, ctx, 1.0f));
  k::set_num_threads(saved);
}
BENCHMARK(BM_ToyForward)->Apply([](auto* b) { thread_args(b, {1}); })->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
