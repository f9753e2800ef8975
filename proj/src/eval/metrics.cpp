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

#include "dsflow/eval/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

#include "dsflow/distill.hpp"
#include "dsflow/kernels/gemm.hpp"
#include "dsflow/rng.hpp"

namespace dsflow::eval {
namespace {

constexpr std::uint64_t kProjectionStream = 41;

void check_point_sets(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw num::ShapeError("point sets must be rank 2");
  if (a.cols() != b.cols()) {
    throw num::ShapeError("dimension mismatch: " + std::to_string(a.cols()) + " vs " +
                          std::to_string(b.cols()));
  }
  if (a.rows() < 2 || b.rows() < 2) throw std::invalid_argument("need at least 2 samples each");
}

std::vector<double> project(const Tensor& pts, const Tensor& dirs, std::size_t p) {
  const std::size_t dim = pts.cols();
  std::vector<double> out(pts.rows());
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) s += pts.at(i, d) * dirs.at(p, d);
    out[i] = s;
  }
  return out;
}

double one_projection(const Tensor& a, const Tensor& b, const Tensor& dirs, std::size_t p) {
  auto pa = project(a, dirs, p);
  auto pb = project(b, dirs, p);
  return wasserstein1_sorted(pa, pb);
}

double mean_in_order(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double wasserstein1_sorted(std::vector<double>& a, std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // Integrate |F_a^-1(u) - F_b^-1(u)| over the merged quantile breakpoints.
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double u = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(a[i] - b[j]);
    u = next;
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return total;
}

Tensor random_directions(std::size_t count, std::size_t dim, std::uint64_t seed) {
  auto rng = rng::stream(seed, kProjectionStream);
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor dirs({count, dim});
  for (std::size_t p = 0; p < count; ++p) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        dirs.at(p, d) = n01(rng);
        norm += dirs.at(p, d) * dirs.at(p, d);
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t d = 0; d < dim; ++d) dirs.at(p, d) /= norm;
  }
  return dirs;
}

double sliced_wasserstein_serial(const Tensor& a, const Tensor& b, std::size_t projections,
                                 std::uint64_t seed) {
  check_point_sets(a, b);
  if (projections == 0) throw std::invalid_argument("need at least one projection");
  const Tensor dirs = random_directions(projections, a.cols(), seed);
  std::vector<double> per(projections);
  for (std::size_t p = 0; p < projections; ++p) per[p] = one_projection(a, b, dirs, p);
  return mean_in_order(per);
}

double sliced_wasserstein_omp(const Tensor& a, const Tensor& b, std::size_t projections,
                              std::uint64_t seed) {
  check_point_sets(a, b);
  if (projections == 0) throw std::invalid_argument("need at least one projection");
  const Tensor dirs = random_directions(projections, a.cols(), seed);
  std::vector<double> per(projections);
  const auto count = static_cast<std::int64_t>(projections);
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < count; ++p) {
    per[static_cast<std::size_t>(p)] = one_projection(a, b, dirs, static_cast<std::size_t>(p));
  }
  return mean_in_order(per);
}

double sliced_wasserstein(const Tensor& a, const Tensor& b, std::size_t projections,
                          std::uint64_t seed) {
  if (kernels::max_threads() > 1) return sliced_wasserstein_omp(a, b, projections, seed);
  return sliced_wasserstein_serial(a, b, projections, seed);
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("need at least 2 values each");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

Histogram::Histogram(double lo_, double hi_, std::size_t bins) : lo(lo_), hi(hi_), counts(bins, 0) {
  if (bins == 0) throw std::invalid_argument("histogram needs at least one bin");
  if (!(hi > lo)) throw std::invalid_argument("histogram range must be increasing");
}

void Histogram::add(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("histogram value is not finite");
  const double f = (v - lo) / (hi - lo) * static_cast<double>(counts.size());
  const double clamped = std::clamp(f, 0.0, static_cast<double>(counts.size() - 1));
  ++counts[static_cast<std::size_t>(clamped)];
}

void Histogram::add(std::span<const double> values) {
  for (double v : values) add(v);
}

std::uint64_t Histogram::mass() const {
  std::uint64_t m = 0;
  for (auto c : counts) m += c;
  return m;
}

double Histogram::bin_center(std::size_t i) const {
  return lo + (static_cast<double>(i) + 0.5) * (hi - lo) / static_cast<double>(counts.size());
}

std::vector<double> radial_feature(const Tensor& points) {
  if (points.rank() != 2 || points.cols() < 2) {
    throw num::ShapeError("radial feature needs at least two coordinates");
  }
  std::vector<double> out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    out[i] = std::hypot(points.at(i, 0), points.at(i, 1));
  }
  return out;
}

std::vector<double> frame_amplitude_feature(const Tensor& sequences, std::size_t frames,
                                            std::size_t channels) {
  if (sequences.rank() != 2 || sequences.cols() != frames * channels) {
    throw num::ShapeError("sequence rows must hold frames x channels values");
  }
  std::vector<double> out;
  out.reserve(sequences.rows() * frames);
  for (std::size_t i = 0; i < sequences.rows(); ++i) {
    for (std::size_t f = 0; f < frames; ++f) {
      double s = 0.0;
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const double v = sequences.at(i, f * channels + ch);
        s += v * v;
      }
      out.push_back(std::sqrt(2.0 * s / static_cast<double>(channels)));
    }
  }
  return out;
}

double endpoint_mse(const model::VelocityField& student, const model::VelocityField& teacher,
                    const Tensor& z, std::span<const int> cond, int n, double w_student,
                    const flow::Schedule& teacher_grid, double w_teacher) {
  const Tensor s = distill::student_sample(student, z, cond, n, teacher_grid, w_student);
  const Tensor t = flow::euler_solve(teacher, z, cond, teacher_grid, w_teacher).endpoint();
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += (s[i] - t[i]) * (s[i] - t[i]);
  return total / static_cast<double>(s.rows());
}

LatencyResult latency_bench(const model::VelocityField& field, const Tensor& z,
                            std::span<const int> cond, const flow::Schedule& schedule, double w,
                            std::optional<int> step, std::size_t repeats, std::size_t warmup) {
  if (repeats == 0) throw std::invalid_argument("need at least one timed repeat");
  for (std::size_t i = 0; i < warmup; ++i) flow::euler_solve(field, z, cond, schedule, w, step);
  std::vector<double> times;
  const std::size_t calls_before = field.forward_calls();
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    flow::euler_solve(field, z, cond, schedule, w, step);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(z.rows()));
  }
  std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2),
                   times.end());
  LatencyResult out;
  out.seconds_per_sample = times[times.size() / 2];
  out.nfe = (field.forward_calls() - calls_before) / repeats;
  return out;
}

}  // namespace dsflow::eval
