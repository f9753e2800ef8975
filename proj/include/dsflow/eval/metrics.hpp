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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsflow/flow.hpp"
#include "dsflow/models.hpp"
#include "dsflow/numerics/tensor.hpp"

namespace dsflow::eval {

using num::Tensor;

inline constexpr std::size_t kDefaultProjections = 512;

/// Wasserstein-1 between two empirical distributions on the line. Sizes may
/// differ; the inputs are sorted in place.
double wasserstein1_sorted(std::vector<double>& a, std::vector<double>& b);

/// `count` seeded unit directions in R^dim, one per row.
Tensor random_directions(std::size_t count, std::size_t dim, std::uint64_t seed);

/// Mean over random unit projections of the 1-D Wasserstein-1 distance
/// between the projected point sets (rows of a and b). Both variants return
/// bitwise identical results: each projection is evaluated independently and
/// the per-projection values are summed in order.
double sliced_wasserstein_serial(const Tensor& a, const Tensor& b, std::size_t projections,
                                 std::uint64_t seed);
double sliced_wasserstein_omp(const Tensor& a, const Tensor& b, std::size_t projections,
                              std::uint64_t seed);
double sliced_wasserstein(const Tensor& a, const Tensor& b,
                          std::size_t projections = kDefaultProjections, std::uint64_t seed = 0);

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::span<const double> a, std::span<const double> b);

/// Fixed-range histogram; values outside the range land in the edge bins so
/// the total mass always equals the sample count.
struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::uint64_t> counts;

  static constexpr std::size_t kDefaultBins = 64;

  Histogram(double lo, double hi, std::size_t bins = kDefaultBins);
  void add(double v);
  void add(std::span<const double> values);
  std::uint64_t mass() const;
  double bin_center(std::size_t i) const;
};

/// Distance of each point (first two coordinates) from the origin.
std::vector<double> radial_feature(const Tensor& points);

/// Per-frame amplitude sqrt(2 * mean over channels of x^2) of flattened
/// (frames x channels) sequences, all frames of all rows.
std::vector<double> frame_amplitude_feature(const Tensor& sequences, std::size_t frames,
                                            std::size_t channels);

/// Mean squared distance between the student's n-step and the teacher's
/// N-step endpoints on shared probes.
double endpoint_mse(const model::VelocityField& student, const model::VelocityField& teacher,
                    const Tensor& z, std::span<const int> cond, int n, double w_student,
                    const flow::Schedule& teacher_grid, double w_teacher);

struct LatencyResult {
  double seconds_per_sample = 0.0;  // median over repeats
  std::size_t nfe = 0;              // forward passes per sample
};

/// Forward passes needed by an n-step guided solve.
constexpr std::size_t nfe_for(std::size_t steps, double w) { return steps * (w > 0.0 ? 2 : 1); }

/// Times `repeats` solves after `warmup` untimed ones.
LatencyResult latency_bench(const model::VelocityField& field, const Tensor& z,
                            std::span<const int> cond, const flow::Schedule& schedule, double w,
                            std::optional<int> step, std::size_t repeats,
                            std::size_t warmup = 2);

}  // namespace dsflow::eval
