// Serial reference vs OpenMP/GEMM kernels on discriminator- and
// classifier-sized convolutions.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pdac/nn/kernels.hpp"

using namespace pdac::nn;

namespace {

struct Problem {
  Tensor<float> x, y, dy, dx;
  std::vector<float> w, b, dw, db;
  ConvGeometry g{{3, 3, 3}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
};

Problem make_problem(std::size_t edge, std::size_t ci, std::size_t co) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> d(0.0f, 1.0f);
  Problem p;
  p.x = Tensor<float>({2, ci, Dim3::cube(edge)});
  p.y = Tensor<float>({2, co, Dim3::cube(edge)});
  p.dy = p.y;
  p.dx = p.x;
  for (auto& v : p.x.values()) v = d(rng);
  for (auto& v : p.dy.values()) v = d(rng);
  p.w.resize(co * ci * 27);
  for (auto& v : p.w) v = d(rng);
  p.b.assign(co, 0.1f);
  p.dw.assign(p.w.size(), 0.0f);
  p.db.assign(co, 0.0f);
  return p;
}

template <bool Parallel>
void conv_forward(benchmark::State& state) {
  auto p = make_problem(state.range(0), state.range(1), state.range(2));
  for (auto _ : state) {
    if constexpr (Parallel)
      par::conv3d_forward<float>(p.x, p.w, p.b, p.g, p.y);
    else
      ref::conv3d_forward<float>(p.x, p.w, p.b, p.g, p.y);
    benchmark::DoNotOptimize(p.y.values().data());
  }
}

template <bool Parallel>
void conv_backward(benchmark::State& state) {
  auto p = make_problem(state.range(0), state.range(1), state.range(2));
  for (auto _ : state) {
    if constexpr (Parallel) {
      par::conv3d_backward_data<float>(p.dy, p.w, p.g, p.dx);
      par::conv3d_backward_weight<float>(p.x, p.dy, p.g, p.dw, p.db);
    } else {
      ref::conv3d_backward_data<float>(p.dy, p.w, p.g, p.dx);
      ref::conv3d_backward_weight<float>(p.x, p.dy, p.g, p.dw, p.db);
    }
    benchmark::DoNotOptimize(p.dx.values().data());
  }
}

template <bool Parallel>
void maxpool(benchmark::State& state) {
  auto p = make_problem(state.range(0), state.range(1), state.range(1));
  Tensor<float> y({2, p.x.shape().c, Dim3::cube(state.range(0) / 2)});
  std::vector<std::size_t> argmax;
  for (auto _ : state) {
    if constexpr (Parallel)
      par::maxpool3d_forward<float>(p.x, {2, 2, 2}, y, argmax);
    else
      ref::maxpool3d_forward<float>(p.x, {2, 2, 2}, y, argmax);
    benchmark::DoNotOptimize(y.values().data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({16, 8, 16})->Args({32, 4, 8})->Args({32, 16, 16})->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(conv_forward<false>)->Apply(conv_args);
BENCHMARK(conv_forward<true>)->Apply(conv_args);
BENCHMARK(conv_backward<false>)->Apply(conv_args);
BENCHMARK(conv_backward<true>)->Apply(conv_args);
BENCHMARK(maxpool<false>)->Args({32, 16})->Unit(benchmark::kMicrosecond);
BENCHMARK(maxpool<true>)->Args({32, 16})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
