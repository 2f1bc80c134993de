// Serial reference vs OpenMP kernels. Thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dccm/kernels.hpp"

using namespace dccm::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

template <auto Fn>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Fn(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

// A 32-image batch through a 3x3 same-padded layer of the conv encoder.
ConvGeometry conv_geometry(benchmark::State& state) {
  const auto ch = static_cast<std::size_t>(state.range(0));
  return ConvGeometry{32, ch, 16, 16, ch, 3, 3, 1};
}

template <auto Fn>
void bm_conv_forward(benchmark::State& state) {
  const ConvGeometry g = conv_geometry(state);
  const auto in = random_vec(g.batch * g.in_channels * g.height * g.width, 3);
  const auto w = random_vec(g.out_channels * g.in_channels * 9, 4);
  const auto bias = random_vec(g.out_channels, 5);
  std::vector<double> out(g.batch * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : state) {
    Fn(g, in, w, bias, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <auto Fn>
void bm_conv_backward_weight(benchmark::State& state) {
  const ConvGeometry g = conv_geometry(state);
  const auto in = random_vec(g.batch * g.in_channels * g.height * g.width, 3);
  const auto go = random_vec(g.batch * g.out_channels * g.out_height() * g.out_width(), 6);
  std::vector<double> gw(g.out_channels * g.in_channels * 9), gb(g.out_channels);
  for (auto _ : state) {
    Fn(g, go, in, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}

}  // namespace

BENCHMARK(bm_matmul<serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(bm_matmul<parallel::matmul>)->Name("matmul/parallel")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(bm_conv_forward<serial::conv2d_forward>)->Name("conv_forward/serial")->Arg(16)->Arg(32);
BENCHMARK(bm_conv_forward<parallel::conv2d_forward>)->Name("conv_forward/parallel")->Arg(16)->Arg(32)->UseRealTime();
BENCHMARK(bm_conv_backward_weight<serial::conv2d_backward_weight>)->Name("conv_backward_weight/serial")->Arg(16)->Arg(32);
BENCHMARK(bm_conv_backward_weight<parallel::conv2d_backward_weight>)
    ->Name("conv_backward_weight/parallel")
    ->Arg(16)
    ->Arg(32)
    ->UseRealTime();

BENCHMARK_MAIN();
