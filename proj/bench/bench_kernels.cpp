// Fast kernels against the serial reference, plus whole-model and
// ground-truth timings. Run: build/bench/canopy_bench

#include <benchmark/benchmark.h>

#include <random>

#include "canopy/cli/pipeline.hpp"
#include "canopy/nn/kernels.hpp"
#include "canopy/nn/unet.hpp"
#include "canopy/synth/scene.hpp"

using namespace canopy;
using nn::Tensor;

namespace {

Tensor<float> random_tensor(nn::Shape s, std::uint64_t seed) {
  Tensor<float> t(std::move(s));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

// Args: batch, in channels, out channels, spatial size.
template <bool Fast>
void conv_forward(benchmark::State& state) {
  const auto n = std::size_t(state.range(0)), ci = std::size_t(state.range(1)), co = std::size_t(state.range(2)),
             hw = std::size_t(state.range(3));
  const auto x = random_tensor({n, ci, hw, hw}, 1), w = random_tensor({co, ci, 3, 3}, 2), b = random_tensor({co}, 3);
  Tensor<float> y;
  for (auto _ : state) {
    if constexpr (Fast) {
      nn::kernels::conv2d_forward(x, w, b, y);
    } else {
      nn::reference::conv2d_forward(x, w, b, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.counters["FLOPS"] =
      benchmark::Counter(2.0 * double(n * co * hw * hw * ci * 9), benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Fast>
void conv_backward(benchmark::State& state) {
  const auto n = std::size_t(state.range(0)), ci = std::size_t(state.range(1)), co = std::size_t(state.range(2)),
             hw = std::size_t(state.range(3));
  const auto x = random_tensor({n, ci, hw, hw}, 1), w = random_tensor({co, ci, 3, 3}, 2);
  const auto dy = random_tensor({n, co, hw, hw}, 4);
  Tensor<float> dx(x.shape()), dw(w.shape()), db({co});
  for (auto _ : state) {
    if constexpr (Fast) {
      nn::kernels::conv2d_backward(x, w, dy, &dx, dw, db);
    } else {
      nn::reference::conv2d_backward(x, w, dy, &dx, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

template <bool Fast>
void maxpool(benchmark::State& state) {
  const auto x = random_tensor({4, 32, 240, 240}, 5);
  Tensor<float> y;
  std::vector<std::uint32_t> arg;
  for (auto _ : state) {
    if constexpr (Fast) {
      nn::kernels::maxpool2_forward(x, y, arg);
    } else {
      nn::reference::maxpool2_forward(x, y, arg);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

void unet_forward(benchmark::State& state) {
  nn::UNetConfig cfg;
  cfg.depth = std::size_t(state.range(0));
  cfg.base_channels = std::size_t(state.range(1));
  const auto model = nn::init_params<float>(cfg, 0);
  const auto x = random_tensor({4, 14, 240, 240}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
}

void ground_truth(benchmark::State& state) {
  synth::SceneOptions o;
  o.width_m = o.height_m = std::size_t(state.range(0));
  o.n_trees = o.width_m * o.height_m / 2000;
  const auto scene = synth::generate_scene(o);
  cli::set_verbose(false);
  for (auto _ : state) benchmark::DoNotOptimize(cli::ground_truth(scene.cloud, scene.naip, {}));
  state.counters["points"] = double(scene.cloud.size());
}

}  // namespace

BENCHMARK(conv_forward<false>)->Name("conv2d_forward/reference")->Args({4, 16, 16, 120})->Unit(benchmark::kMillisecond);
BENCHMARK(conv_forward<true>)->Name("conv2d_forward/fast")->Args({4, 16, 16, 120})->Args({4, 14, 32, 240})->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<false>)->Name("conv2d_backward/reference")->Args({4, 16, 16, 120})->Unit(benchmark::kMillisecond);
BENCHMARK(conv_backward<true>)->Name("conv2d_backward/fast")->Args({4, 16, 16, 120})->Args({4, 14, 32, 240})->Unit(benchmark::kMillisecond);
BENCHMARK(maxpool<false>)->Name("maxpool2/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(maxpool<true>)->Name("maxpool2/fast")->Unit(benchmark::kMillisecond);
BENCHMARK(unet_forward)->Args({2, 16})->Args({4, 32})->Unit(benchmark::kMillisecond);
BENCHMARK(ground_truth)->Arg(120)->Arg(480)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
