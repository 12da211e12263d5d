// Parallel kernels against their serial reference loops at DHST block sizes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dhg/kernels.hpp"

namespace k = dhg::kernels;

namespace {

std::vector<float> filled(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (float& x : v) x = u(rng);
  return v;
}

k::ConvGeom conv_geom(const benchmark::State& state) {
  k::ConvGeom g;
  g.batch = 16;
  g.c_in = g.c_out = static_cast<std::size_t>(state.range(0));
  g.frames = 32;
  g.nodes = 25;
  g.stride = static_cast<std::size_t>(state.range(1));
  return g;
}

template <bool kParallel>
void BM_ConvForward(benchmark::State& state) {
  const k::ConvGeom g = conv_geom(state);
  const auto x = filled(g.batch * g.c_in * g.frames * g.nodes, 1);
  const auto w = filled(g.c_out * g.c_in * k::ConvGeom::kTaps, 2);
  std::vector<float> y(g.batch * g.c_out * g.frames_out() * g.nodes);
  for (auto _ : state) {
    if constexpr (kParallel) k::conv_temporal_forward(g, x.data(), w.data(), y.data());
    else k::reference::conv_temporal_forward(g, x.data(), w.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(2 * g.batch * g.c_out * g.c_in * 3 * g.frames_out() * g.nodes));
}

template <bool kParallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const k::ConvGeom g = conv_geom(state);
  const auto x = filled(g.batch * g.c_in * g.frames * g.nodes, 1);
  const auto dy = filled(g.batch * g.c_out * g.frames_out() * g.nodes, 3);
  std::vector<float> dw(g.c_out * g.c_in * k::ConvGeom::kTaps);
  for (auto _ : state) {
    if constexpr (kParallel) k::conv_temporal_backward_weight(g, x.data(), dy.data(), dw.data());
    else k::reference::conv_temporal_backward_weight(g, x.data(), dy.data(), dw.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

template <bool kParallel>
void BM_Gemm(benchmark::State& state) {
  const std::size_t m = 16 * 32 * 25, n = static_cast<std::size_t>(state.range(0)), kk = n;
  const auto a = filled(m * kk, 4);
  const auto b = filled(kk * n, 5);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    if constexpr (kParallel) k::gemm_nn(m, n, kk, a.data(), b.data(), c.data(), false);
    else k::reference::gemm_nn(m, n, kk, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * int64_t(2 * m * n * kk));
}

template <bool kParallel>
void BM_FrameAggregate(benchmark::State& state) {
  k::FrameGeom g;
  g.batch = 16;
  g.channels = static_cast<std::size_t>(state.range(0));
  g.frames = 32;
  g.nodes = 25;
  const auto x = filled(g.batch * g.channels * g.frames * g.nodes, 6);
  const auto ops = filled(g.batch * g.frames * g.nodes * g.nodes, 7);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    if constexpr (kParallel) k::frame_aggregate(g, x.data(), ops.data(), y.data(), false, false);
    else k::reference::frame_aggregate(g, x.data(), ops.data(), y.data(), false, false);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool kParallel>
void BM_NodeAggregate(benchmark::State& state) {
  const std::size_t rows = 16 * static_cast<std::size_t>(state.range(0)) * 32, nodes = 25;
  const auto x = filled(rows * nodes, 8);
  const auto op = filled(nodes * nodes, 9);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    if constexpr (kParallel) k::node_aggregate(rows, nodes, x.data(), op.data(), y.data(), false, false);
    else k::reference::node_aggregate(rows, nodes, x.data(), op.data(), y.data(), false, false);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Args({64, 1})->Args({128, 2})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Args({64, 1})->Args({128, 2})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<false>)->Name("conv_backward_weight/reference")->Args({64, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<true>)->Name("conv_backward_weight/parallel")->Args({64, 1})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<false>)->Name("gemm_nn/reference")->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<true>)->Name("gemm_nn/parallel")->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrameAggregate<false>)->Name("frame_aggregate/reference")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FrameAggregate<true>)->Name("frame_aggregate/parallel")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NodeAggregate<false>)->Name("node_aggregate/reference")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NodeAggregate<true>)->Name("node_aggregate/parallel")->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
