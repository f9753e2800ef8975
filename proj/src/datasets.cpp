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

#include "dsflow/datasets.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "dsflow/rng.hpp"

namespace dsflow::data {
namespace {

// Independent streams derived from one spec seed.
enum Stream : std::uint64_t { kDataStream = 1, kNoiseStream = 2, kShuffleStream = 3 };

Tensor standard_normal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor t({rows, cols});
  for (auto& v : t.storage()) v = n01(rng);
  return t;
}

Dataset finish(const DatasetSpec& spec, Tensor x1, std::vector<int> cond) {
  Dataset ds;
  ds.spec = spec;
  auto noise = rng::stream(spec.seed, kNoiseStream);
  ds.z = standard_normal(x1.rows(), x1.cols(), noise);
  ds.x1 = std::move(x1);
  ds.cond = std::move(cond);
  return ds;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw DatasetError(msg);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kGaussMixture: return "gauss-mixture";
    case DatasetKind::kTwoMoons: return "two-moons";
    case DatasetKind::kToySequence: return "toy-sequence";
    case DatasetKind::kCsv: return "csv";
  }
  return "unknown";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "gauss-mixture") return DatasetKind::kGaussMixture;
  if (s == "two-moons") return DatasetKind::kTwoMoons;
  if (s == "toy-sequence") return DatasetKind::kToySequence;
  if (s == "csv") return DatasetKind::kCsv;
  throw DatasetError("unknown dataset kind: " + s);
}

std::vector<double> Dataset::one_hot(std::size_t i) const {
  std::vector<double> v(num_conditions(), 0.0);
  v.at(static_cast<std::size_t>(cond.at(i))) = 1.0;
  return v;
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  Dataset out;
  out.spec = spec;
  out.spec.size = indices.size();
  out.x1 = gather(x1, indices);
  out.z = gather(z, indices);
  out.cond.reserve(indices.size());
  for (auto i : indices) out.cond.push_back(cond.at(i));
  return out;
}

std::vector<double> mixture_mean(int c, std::size_t num_conditions, std::size_t dim) {
  std::vector<double> mu(dim, 0.0);
  const double angle =
      2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_conditions);
  mu[0] = kMixtureRadius * std::cos(angle);
  if (dim > 1) mu[1] = kMixtureRadius * std::sin(angle);
  return mu;
}

Dataset gen_gauss_mixture(const DatasetSpec& spec) {
  require(spec.num_conditions >= 1, "gauss-mixture needs at least one condition");
  require(spec.data_dim >= 1, "gauss-mixture needs data_dim >= 1");
  auto rng = rng::stream(spec.seed, kDataStream);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(spec.num_conditions) - 1);
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor x({spec.size, spec.data_dim});
  std::vector<int> cond(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    cond[i] = pick(rng);
    const auto mu = mixture_mean(cond[i], spec.num_conditions, spec.data_dim);
    for (std::size_t d = 0; d < spec.data_dim; ++d) x.at(i, d) = mu[d] + kMixtureSigma * n01(rng);
  }
  return finish(spec, std::move(x), std::move(cond));
}

Dataset gen_two_moons(const DatasetSpec& spec) {
  require(spec.data_dim == 2, "two-moons is two-dimensional");
  DatasetSpec s = spec;
  s.num_conditions = 2;
  auto rng = rng::stream(spec.seed, kDataStream);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, kMoonsNoise);
  // Exact half split, then a seeded shuffle of the assignment.
  std::vector<int> cond(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) cond[i] = i < spec.size / 2 ? 0 : 1;
  std::shuffle(cond.begin(), cond.end(), rng);
  Tensor x({spec.size, 2});
  for (std::size_t i = 0; i < spec.size; ++i) {
    const double th = angle(rng);
    if (cond[i] == 0) {
      x.at(i, 0) = std::cos(th);
      x.at(i, 1) = std::sin(th);
    } else {
      x.at(i, 0) = 1.0 - std::cos(th);
      x.at(i, 1) = 0.5 - std::sin(th);
    }
    x.at(i, 0) += noise(rng);
    x.at(i, 1) += noise(rng);
  }
  return finish(s, std::move(x), std::move(cond));
}

double sequence_frequency(int c) { return 1.0 + static_cast<double>(c); }
double sequence_amplitude(int c) { return 1.0 + 0.5 * static_cast<double>(c); }

Dataset gen_toy_sequence(const DatasetSpec& spec) {
  require(spec.data_dim == kSequenceFrames * kSequenceChannels,
          "toy-sequence data_dim must be frames x channels = " +
              std::to_string(kSequenceFrames * kSequenceChannels));
  require(spec.num_conditions >= 1, "toy-sequence needs at least one condition");
  auto rng = rng::stream(spec.seed, kDataStream);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(spec.num_conditions) - 1);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor x({spec.size, spec.data_dim});
  std::vector<int> cond(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const int c = pick(rng);
    cond[i] = c;
    const double amp = sequence_amplitude(c) * (1.0 + 0.1 * n01(rng));
    const double phi = phase(rng);
    const double f = sequence_frequency(c);
    for (std::size_t fr = 0; fr < kSequenceFrames; ++fr) {
      const double base = 2.0 * std::numbers::pi * f * static_cast<double>(fr) /
                              static_cast<double>(kSequenceFrames) +
                          phi;
      for (std::size_t ch = 0; ch < kSequenceChannels; ++ch) {
        // Channels in quadrature: the per-frame RMS over channels is amp/sqrt(2).
        const double v = amp * std::sin(base + static_cast<double>(ch) * std::numbers::pi / 2.0);
        x.at(i, fr * kSequenceChannels + ch) = v + 0.05 * n01(rng);
      }
    }
  }
  return finish(spec, std::move(x), std::move(cond));
}

Dataset generate(const DatasetSpec& spec) {
  switch (spec.kind) {
    case DatasetKind::kGaussMixture: return gen_gauss_mixture(spec);
    case DatasetKind::kTwoMoons: return gen_two_moons(spec);
    case DatasetKind::kToySequence: return gen_toy_sequence(spec);
    case DatasetKind::kCsv: break;
  }
  throw DatasetError("csv datasets are loaded with load_csv");
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open " + path.string());
  const std::size_t width = opts.data_dim + 1;
  const std::size_t cond_col =
      opts.condition_column < 0 ? opts.data_dim : static_cast<std::size_t>(opts.condition_column);
  require(cond_col < width, "condition column out of range");

  std::vector<double> values;
  std::vector<int> cond;
  std::string line;
  std::size_t lineno = 0;
  bool header_skipped = !opts.has_header;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view row = trim(line);
    if (row.empty()) continue;
    if (!header_skipped) {
      header_skipped = true;
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = row.find(',', start);
      fields.push_back(trim(row.substr(start, comma - start)));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (fields.size() != width) {
      throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(width) + " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t k = 0; k < width; ++k) {
      const auto f = fields[k];
      if (k == cond_col) {
        int c = 0;
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), c);
        if (ec != std::errc() || p != f.data() + f.size() || c < 0) {
          throw DatasetError(path.string() + ":" + std::to_string(lineno) +
                             ": bad condition id '" + std::string(f) + "'");
        }
        cond.push_back(c);
      } else {
        double v = 0.0;
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
        if (ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v)) {
          throw DatasetError(path.string() + ":" + std::to_string(lineno) + ": bad number '" +
                             std::string(f) + "'");
        }
        values.push_back(v);
      }
    }
  }
  if (cond.empty()) throw DatasetError("empty dataset: " + path.string());

  DatasetSpec spec;
  spec.kind = DatasetKind::kCsv;
  spec.data_dim = opts.data_dim;
  spec.size = cond.size();
  spec.seed = opts.seed;
  spec.num_conditions = static_cast<std::size_t>(*std::max_element(cond.begin(), cond.end())) + 1;
  Tensor x({cond.size(), opts.data_dim}, std::move(values));
  return finish(spec, std::move(x), std::move(cond));
}

void save_csv(const Dataset& ds, const std::filesystem::path& path, bool header) {
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write " + path.string());
  if (header) {
    for (std::size_t d = 0; d < ds.dim(); ++d) out << 'x' << d << ',';
    out << "c\n";
  }
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t d = 0; d < ds.dim(); ++d) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), ds.x1.at(i, d));
      out.write(buf, p - buf);
      out << ',';
    }
    out << ds.cond[i] << '\n';
  }
}

void resample_noise(Dataset& ds, std::uint64_t seed) {
  auto noise = rng::stream(seed, kNoiseStream);
  ds.z = standard_normal(ds.x1.rows(), ds.x1.cols(), noise);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    std::uint64_t seed, std::uint64_t epoch) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = rng::stream(rng::mix(seed, epoch), kShuffleStream);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    const std::size_t end = std::min(n, i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

BatchIterator::BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
  if (n == 0) throw DatasetError("cannot iterate an empty dataset");
  batches_ = epoch_batches(n_, batch_size_, seed_, epoch_);
}

const std::vector<std::size_t>& BatchIterator::next() {
  if (cursor_ == batches_.size()) {
    ++epoch_;
    batches_ = epoch_batches(n_, batch_size_, seed_, epoch_);
    cursor_ = 0;
  }
  return batches_[cursor_++];
}

Tensor gather(const Tensor& t, std::span<const std::size_t> rows) {
  const std::size_t c = t.cols();
  Tensor out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

}  // namespace dsflow::data
