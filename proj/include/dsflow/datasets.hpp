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
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsflow/numerics/tensor.hpp"

namespace dsflow::data {

using num::Tensor;

enum class DatasetKind { kGaussMixture, kTwoMoons, kToySequence, kCsv };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussMixture;
  std::size_t data_dim = 2;
  std::size_t num_conditions = 4;
  std::size_t size = 5000;
  std::uint64_t seed = 0;
};

// Toy-sequence layout: frames x channels, flattened row-major.
inline constexpr std::size_t kSequenceFrames = 8;
inline constexpr std::size_t kSequenceChannels = 4;

inline constexpr double kMixtureRadius = 4.0;
inline constexpr double kMixtureSigma = 0.3;
inline constexpr double kMoonsNoise = 0.05;

/// Conditional samples with paired noise. Row i of x1 and z belong to cond[i].
struct Dataset {
  DatasetSpec spec;
  Tensor x1;  // (size, data_dim)
  Tensor z;   // (size, data_dim), standard normal
  std::vector<int> cond;

  std::size_t size() const { return cond.size(); }
  std::size_t dim() const { return x1.cols(); }
  std::size_t num_conditions() const { return spec.num_conditions; }

  /// One-hot row for sample i, width num_conditions().
  std::vector<double> one_hot(std::size_t i) const;

  /// Subset in the given order.
  Dataset select(std::span<const std::size_t> indices) const;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mixture component mean for condition c: a point on the radius-4 circle.
std::vector<double> mixture_mean(int c, std::size_t num_conditions, std::size_t dim);

Dataset gen_gauss_mixture(const DatasetSpec& spec);
Dataset gen_two_moons(const DatasetSpec& spec);
Dataset gen_toy_sequence(const DatasetSpec& spec);
Dataset generate(const DatasetSpec& spec);

/// Base frequency (cycles per sequence) and mean amplitude for a condition.
double sequence_frequency(int c);
double sequence_amplitude(int c);

struct CsvOptions {
  std::size_t data_dim = 2;
  // Zero-based column holding the integer condition; defaults to last.
  int condition_column = -1;
  bool has_header = false;
  std::uint64_t seed = 0;
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts);
void save_csv(const Dataset& ds, const std::filesystem::path& path, bool header = false);

/// Redraws the paired noise of every sample from `seed`.
void resample_noise(Dataset& ds, std::uint64_t seed);

/// Index batches for one epoch: seeded shuffle, last partial batch kept.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch);

/// Endless batch stream over a dataset, reshuffled each epoch.
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  const std::vector<std::size_t>& next();
  std::uint64_t epoch() const { return epoch_; }

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::vector<std::size_t>> batches_;
};

/// Rows of a tensor gathered by index.
Tensor gather(const Tensor& t, std::span<const std::size_t> rows);

}  // namespace dsflow::data
