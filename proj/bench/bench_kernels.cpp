// Copyright 2026 The dsflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS set to compare
// thread counts; on one core the two columns should match closely.

#include <algorithm>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "dsflow/eval/metrics.hpp"
#include "dsflow/kernels/gemm.hpp"
#include "dsflow/rng.hpp"

namespace {

using dsflow::kernels::Trans;
using dsflow::num::Tensor;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  auto rng = dsflow::rng::stream(seed, 0);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = n01(rng);
  return v;
}

Tensor random_points(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  return Tensor({rows, cols}, random_values(rows * cols, seed));
}

template <auto Kernel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    Kernel(Trans::kNo, Trans::kNo, n, n, n, a.data(), n, b.data(), n, c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Gemm<dsflow::kernels::gemm_serial>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<dsflow::kernels::gemm_omp>)->Name("gemm/omp")->Arg(64)->Arg(128)->Arg(256);

template <auto Metric>
void BM_SlicedWasserstein(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const Tensor a = random_points(rows, 2, 3);
  const Tensor b = random_points(rows, 2, 4);
  for (auto _ : state) benchmark::DoNotOptimize(Metric(a, b, 512, 0));
}
BENCHMARK(BM_SlicedWasserstein<dsflow::eval::sliced_wasserstein_serial>)
    ->Name("sliced_wasserstein/serial")->Arg(500)->Arg(2000);
BENCHMARK(BM_SlicedWasserstein<dsflow::eval::sliced_wasserstein_omp>)
    ->Name("sliced_wasserstein/omp")->Arg(500)->Arg(2000);

}  // namespace

BENCHMARK_MAIN();
