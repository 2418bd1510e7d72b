// Parallel kernels against their serial reference versions.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "finegrain/kernels.hpp"

namespace k = finegrain::kernels;

namespace {

std::vector<double> random_vector(long n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = u(rng);
  return v;
}

k::Conv3dShape conv_shape(int channels) {
  k::Conv3dShape s;
  s.batch = 4;
  s.in_channels = channels;
  s.out_channels = channels;
  s.frames = 8;
  s.height = s.width = 24;
  return s;
}

template <bool Parallel>
void BM_Conv3dForward(benchmark::State& state) {
  const auto s = conv_shape(static_cast<int>(state.range(0)));
  const auto in = random_vector(s.input_size(), 1), w = random_vector(s.weight_size(), 2);
  std::vector<double> out(static_cast<std::size_t>(s.output_size()));
  for (auto _ : state) {
    if constexpr (Parallel) k::conv3d_forward(s, in.data(), w.data(), out.data());
    else k::reference::conv3d_forward(s, in.data(), w.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * s.output_size() * s.in_channels * 27);
}

template <bool Parallel>
void BM_Conv3dBackwardInput(benchmark::State& state) {
  const auto s = conv_shape(static_cast<int>(state.range(0)));
  const auto go = random_vector(s.output_size(), 3), w = random_vector(s.weight_size(), 4);
  std::vector<double> gi(static_cast<std::size_t>(s.input_size()));
  for (auto _ : state) {
    if constexpr (Parallel) k::conv3d_backward_input(s, go.data(), w.data(), gi.data());
    else k::reference::conv3d_backward_input(s, go.data(), w.data(), gi.data());
    benchmark::DoNotOptimize(gi.data());
  }
}

template <bool Parallel>
void BM_Conv3dBackwardWeight(benchmark::State& state) {
  const auto s = conv_shape(static_cast<int>(state.range(0)));
  const auto in = random_vector(s.input_size(), 5), go = random_vector(s.output_size(), 6);
  std::vector<double> gw(static_cast<std::size_t>(s.weight_size()));
  for (auto _ : state) {
    if constexpr (Parallel) k::conv3d_backward_weight(s, in.data(), go.data(), gw.data());
    else k::reference::conv3d_backward_weight(s, in.data(), go.data(), gw.data());
    benchmark::DoNotOptimize(gw.data());
  }
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = random_vector(long(n) * n, 7), b = random_vector(long(n) * n, 8);
  std::vector<double> c(static_cast<std::size_t>(n) * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    else k::reference::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * long(n) * n * n);
}

template <bool Parallel>
void BM_AvgPool(benchmark::State& state) {
  k::PoolShape s;
  s.batch = 4;
  s.channels = static_cast<int>(state.range(0));
  s.frames = 8;
  s.height = s.width = 48;
  s.pt = 2;
  const auto in = random_vector(long(s.batch) * s.channels * s.frames * s.height * s.width, 9);
  std::vector<double> out(static_cast<std::size_t>(s.batch) * s.channels * s.out_frames() * s.out_height() *
                          s.out_width());
  for (auto _ : state) {
    if constexpr (Parallel) k::avg_pool3d_forward(s, in.data(), out.data());
    else k::reference::avg_pool3d_forward(s, in.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Conv3dForward<false>)->Name("conv3d_forward/reference")->Arg(8)->Arg(16);
BENCHMARK(BM_Conv3dForward<true>)->Name("conv3d_forward/parallel")->Arg(8)->Arg(16);
BENCHMARK(BM_Conv3dBackwardInput<false>)->Name("conv3d_backward_input/reference")->Arg(16);
BENCHMARK(BM_Conv3dBackwardInput<true>)->Name("conv3d_backward_input/parallel")->Arg(16);
BENCHMARK(BM_Conv3dBackwardWeight<false>)->Name("conv3d_backward_weight/reference")->Arg(16);
BENCHMARK(BM_Conv3dBackwardWeight<true>)->Name("conv3d_backward_weight/parallel")->Arg(16);
BENCHMARK(BM_Gemm<false>)->Name("gemm_nn/reference")->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm_nn/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_AvgPool<false>)->Name("avg_pool3d/reference")->Arg(16);
BENCHMARK(BM_AvgPool<true>)->Name("avg_pool3d/parallel")->Arg(16);

BENCHMARK_MAIN();
