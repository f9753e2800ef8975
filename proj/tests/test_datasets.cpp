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

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include <doctest.h>

#include "dsflow/datasets.hpp"
#include "dsflow/eval/metrics.hpp"

using namespace dsflow;
using data::Dataset;
using data::DatasetKind;
using data::DatasetSpec;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dsflow_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("gauss mixture geometry") {
  SUBCASE("single component stays within six sigma") {
    DatasetSpec spec;
    spec.num_conditions = 1;
    spec.size = 10000;
    spec.seed = 11;
    const Dataset d = data::gen_gauss_mixture(spec);
    const auto mu = data::mixture_mean(0, 1, 2);
    std::size_t inside = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double dx = d.x1.at(i, 0) - mu[0], dy = d.x1.at(i, 1) - mu[1];
      if (std::hypot(dx, dy) <= 6 * data::kMixtureSigma) ++inside;
    }
    CHECK(static_cast<double>(inside) / d.size() >= 0.999);
  }
  SUBCASE("component means") {
    DatasetSpec spec;
    spec.size = 40000;  // about 10k per component
    spec.seed = 5;
    const Dataset d = data::gen_gauss_mixture(spec);
    for (int c = 0; c < 4; ++c) {
      double sx = 0, sy = 0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.cond[i] != c) continue;
        sx += d.x1.at(i, 0);
        sy += d.x1.at(i, 1);
        ++n;
      }
      const auto mu = data::mixture_mean(c, 4, 2);
      CHECK(std::abs(sx / n - mu[0]) < 0.02);
      CHECK(std::abs(sy / n - mu[1]) < 0.02);
      // radius 4 on the circle
      CHECK(std::hypot(mu[0], mu[1]) == doctest::Approx(4.0));
    }
  }
}

TEST_CASE("generators are pure functions of their spec") {
  for (DatasetKind kind : {DatasetKind::kGaussMixture, DatasetKind::kTwoMoons,
                           DatasetKind::kToySequence}) {
    DatasetSpec spec;
    spec.kind = kind;
    spec.size = 300;
    spec.seed = 42;
    if (kind == DatasetKind::kToySequence) spec.data_dim = 32;
    const Dataset a = data::generate(spec);
    const Dataset b = data::generate(spec);
    CHECK(a.x1 == b.x1);
    CHECK(a.z == b.z);
    CHECK(a.cond == b.cond);
    spec.seed = 43;
    CHECK_FALSE(data::generate(spec).x1 == a.x1);
  }
}

TEST_CASE("two moons") {
  DatasetSpec spec;
  spec.kind = DatasetKind::kTwoMoons;
  spec.size = 10000;
  spec.seed = 3;
  const Dataset d = data::generate(spec);
  std::size_t zeros = 0, above = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.cond[i] != 0) continue;
    ++zeros;
    if (d.x1.at(i, 1) >= -0.25) ++above;
  }
  CHECK(std::abs(static_cast<double>(zeros) / d.size() - 0.5) <= 0.01);
  CHECK(static_cast<double>(above) / zeros > 0.999);
  CHECK(d.num_conditions() == 2);
}

TEST_CASE("toy sequence") {
  DatasetSpec spec;
  spec.kind = DatasetKind::kToySequence;
  spec.data_dim = 32;
  spec.num_conditions = 3;
  spec.size = 3000;
  spec.seed = 9;
  const Dataset d = data::generate(spec);

  SUBCASE("base frequency depends only on the condition") {
    for (std::size_t i = 0; i < 200; ++i) {
      std::size_t best = 0;
      double best_mag = -1;
      for (std::size_t k = 1; k <= data::kSequenceFrames / 2; ++k) {
        std::complex<double> acc = 0;
        for (std::size_t fr = 0; fr < data::kSequenceFrames; ++fr) {
          const double ang = -2.0 * std::numbers::pi * k * fr / data::kSequenceFrames;
          acc += d.x1.at(i, fr * data::kSequenceChannels) * std::polar(1.0, ang);
        }
        if (std::abs(acc) > best_mag) best_mag = std::abs(acc), best = k;
      }
      CHECK(static_cast<double>(best) == data::sequence_frequency(d.cond[i]));
    }
  }
  SUBCASE("amplitude histogram has one mode per condition") {
    const auto amp = eval::frame_amplitude_feature(d.x1, data::kSequenceFrames,
                                                   data::kSequenceChannels);
    for (int c = 0; c < 3; ++c) {
      eval::Histogram h(0.0, 6.0, 32);
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.cond[i] != c) continue;
        for (std::size_t fr = 0; fr < data::kSequenceFrames; ++fr) {
          h.add(amp[i * data::kSequenceFrames + fr]);
        }
      }
      const auto peak = *std::max_element(h.counts.begin(), h.counts.end());
      // Bins above a fifth of the peak form one contiguous run.
      std::vector<std::size_t> big;
      for (std::size_t b = 0; b < h.counts.size(); ++b) {
        if (h.counts[b] * 5 > peak) big.push_back(b);
      }
      REQUIRE_FALSE(big.empty());
      CHECK(big.back() - big.front() + 1 == big.size());
    }
  }
  SUBCASE("dimension contract") {
    DatasetSpec bad = spec;
    bad.data_dim = 10;
    CHECK_THROWS_AS(data::generate(bad), data::DatasetError);
  }
}

TEST_CASE("one-hot rows") {
  DatasetSpec spec;
  spec.size = 50;
  const Dataset d = data::generate(spec);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto oh = d.one_hot(i);
    CHECK(oh.size() == 4);
    CHECK(std::count(oh.begin(), oh.end(), 1.0) == 1);
    CHECK(oh[static_cast<std::size_t>(d.cond[i])] == 1.0);
  }
}

TEST_CASE("csv round trip and errors") {
  DatasetSpec spec;
  spec.size = 64;
  spec.seed = 1;
  const Dataset d = data::generate(spec);
  data::CsvOptions opts;

  const auto plain = temp_file("plain.csv");
  data::save_csv(d, plain);
  const Dataset back = data::load_csv(plain, opts);
  CHECK(back.x1 == d.x1);
  CHECK(back.cond == d.cond);

  const auto headed = temp_file("headed.csv");
  data::save_csv(d, headed, true);
  CHECK_THROWS_AS(data::load_csv(headed, opts), data::DatasetError);
  data::CsvOptions with_header = opts;
  with_header.has_header = true;
  CHECK(data::load_csv(headed, with_header).x1 == d.x1);

  const auto empty = temp_file("empty.csv");
  std::ofstream(empty).close();
  CHECK_THROWS_WITH_AS(data::load_csv(empty, opts), doctest::Contains("empty dataset"),
                       data::DatasetError);

  const auto broken = temp_file("broken.csv");
  std::ofstream(broken) << "1.0,2.0,0\n1.0,oops,1\n";
  CHECK_THROWS_WITH_AS(data::load_csv(broken, opts), doctest::Contains(":2:"),
                       data::DatasetError);

  const auto narrow = temp_file("narrow.csv");
  std::ofstream(narrow) << "1.0,0\n";
  CHECK_THROWS_AS(data::load_csv(narrow, opts), data::DatasetError);
}

TEST_CASE("batch iteration") {
  SUBCASE("union of an epoch is the dataset") {
    const auto batches = data::epoch_batches(103, 10, 7, 0);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 103);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 103);
    CHECK(batches.back().size() == 3);  // partial batch kept
  }
  SUBCASE("same seed same order, new epoch new order") {
    CHECK(data::epoch_batches(50, 8, 1, 0) == data::epoch_batches(50, 8, 1, 0));
    CHECK_FALSE(data::epoch_batches(50, 8, 1, 0) == data::epoch_batches(50, 8, 1, 1));
  }
  SUBCASE("oversized batch") {
    const auto batches = data::epoch_batches(5, 32, 0, 0);
    CHECK(batches.size() == 1);
    CHECK(batches[0].size() == 5);
  }
  SUBCASE("iterator crosses epochs") {
    data::BatchIterator it(10, 4, 3);
    for (int i = 0; i < 3; ++i) it.next();
    CHECK(it.epoch() == 0);
    it.next();
    CHECK(it.epoch() == 1);
  }
}

TEST_CASE("noise resampling") {
  DatasetSpec spec;
  spec.size = 20;
  Dataset d = data::generate(spec);
  const auto z0 = d.z;
  data::resample_noise(d, 99);
  CHECK_FALSE(d.z == z0);
  Dataset e = data::generate(spec);
  data::resample_noise(e, 99);
  CHECK(d.z == e.z);
}
