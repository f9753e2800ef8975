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

#include <cmath>
#include <vector>

#include <doctest.h>

#include "dsflow/models.hpp"
#include "dsflow/rng.hpp"

using namespace dsflow;
using model::Conditioning;
using model::ModelConfig;
using model::VelocityModel;
using num::Tensor;

namespace {

Tensor random_input(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  auto rng = rng::stream(seed, 0);
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor x({rows, cols});
  for (auto& v : x.storage()) v = n01(rng);
  return x;
}

ModelConfig small(Conditioning mode) {
  ModelConfig c;
  c.layers = 2;
  c.width = 16;
  c.mode = mode;
  return c;
}

Tensor forward(const VelocityModel& m, const Tensor& x, double t, int c,
               std::optional<int> step = std::nullopt) {
  const std::vector<double> ts{t};
  const std::vector<int> cs{c};
  return m.velocity(num::constant(x), ts, cs, step).value();
}

}  // namespace

TEST_CASE("fresh adaln model equals the plain backbone") {
  const VelocityModel adaln(small(Conditioning::kAdaLN), 7);
  VelocityModel plain(small(Conditioning::kPlain), 99);
  CHECK(plain.copy_shared_from(adaln) == plain.params().entries().size());
  const Tensor x = random_input(5, 2, 1);
  for (double t : {0.0, 0.3, 1.0}) {
    for (int c : {0, 3, model::kNullCondition}) {
      CHECK(forward(adaln, x, t, c) == forward(plain, x, t, c));
    }
  }
}

TEST_CASE("step tokens separate step counts after training") {
  VelocityModel m(small(Conditioning::kStepToken), 3);
  const Tensor x = random_input(4, 2, 2);
  const Tensor target = random_input(4, 2, 3);
  const std::vector<double> t{0.5};
  const std::vector<int> c{1};
  for (int it = 0; it < 2; ++it) {
    for (int n : {1, 2}) {
      const auto v = m.velocity(num::constant(x), t, c, n);
      num::backward(num::mean_sq_norm(num::sub(v, num::constant(target))));
    }
    num::adam_step(m.params(), {});
  }
  CHECK_FALSE(forward(m, x, 0.5, 1, 1) == forward(m, x, 0.5, 1, 2));
  // The lookup itself is a pure function of n.
  CHECK(forward(m, x, 0.5, 1, 2) == forward(m, x, 0.5, 1, 2));
}

TEST_CASE("forward contract") {
  const Tensor x = random_input(6, 2, 4);
  for (Conditioning mode : {Conditioning::kAdaLN, Conditioning::kStepToken, Conditioning::kPlain}) {
    const VelocityModel m(small(mode), 1);
    const std::optional<int> n =
        mode == Conditioning::kStepToken ? std::optional<int>(4) : std::nullopt;
    CHECK(forward(m, x, 0.2, 2, n).shape() == x.shape());
    CHECK_THROWS_AS(forward(m, x, 1.5, 2, n), model::ModelError);
    CHECK_THROWS_AS(forward(m, x, 0.2, 4, n), model::ModelError);
  }
  const VelocityModel tok(small(Conditioning::kStepToken), 1);
  CHECK_THROWS_AS(forward(tok, x, 0.2, 0, 3), model::ModelError);
  CHECK_THROWS_AS(forward(tok, x, 0.2, 0), model::ModelError);
  // adaln ignores n
  const VelocityModel ada(small(Conditioning::kAdaLN), 1);
  CHECK(forward(ada, x, 0.2, 0, 3) == forward(ada, x, 0.2, 0));
}

TEST_CASE("forward calls are counted per evaluation") {
  const VelocityModel m(small(Conditioning::kPlain), 0);
  const Tensor x = random_input(8, 2, 0);
  forward(m, x, 0.1, 0);
  forward(m, x, 0.2, 0);
  CHECK(m.forward_calls() == 2);
}

TEST_CASE("conditioning parameter counts") {
  SUBCASE("large configuration") {
    const auto c = model::count_conditioning_params(3, 16, 512, 1);
    CHECK(c.token == 1536);
    CHECK(c.adaln == 4ull * 16 * 512 * 512);
    CHECK(c.ratio == doctest::Approx(32768.0 / 3.0));
    CHECK(c.ratio_rounded == 10923);
  }
  SUBCASE("unit case") {
    const auto c = model::count_conditioning_params(1, 1, 1, 1);
    CHECK(c.token == 1);
    CHECK(c.adaln == 4);
    CHECK(c.ratio == 4.0);
  }
  SUBCASE("ratio identity for any config") {
    for (std::uint64_t k : {1, 2, 3, 5}) {
      for (std::uint64_t l : {1, 4, 7}) {
        for (std::uint64_t d : {8, 33, 64}) {
          for (std::uint64_t m : {1, 3}) {
            const auto c = model::count_conditioning_params(k, l, d, m);
            CHECK(c.adaln * k * m == c.token * 4 * l * d);
          }
        }
      }
    }
  }
}

TEST_CASE("step entropy") {
  const std::vector<int> s3{1, 2, 4};
  CHECK(std::abs(model::step_entropy_bits(s3, model::uniform_prior(3)) - std::log2(3.0)) < 1e-12);
  const std::vector<double> degenerate{1.0, 0.0, 0.0};
  CHECK(model::step_entropy_bits(s3, degenerate) == 0.0);
  const std::vector<int> s4{1, 2, 4, 8};
  CHECK(model::step_entropy_bits(s4, model::uniform_prior(4)) == doctest::Approx(2.0));
  const std::vector<double> bad{0.5, 0.6, -0.1};
  CHECK_THROWS(model::step_entropy_bits(s3, bad));
}

TEST_CASE("entropy parameter floor") {
  CHECK(model::entropy_lower_bound_params(3, 512) == 809);
  CHECK(model::entropy_lower_bound_params_exact(3, 512) == 812);
  CHECK(model::entropy_lower_bound_params(2, 1) == 1);
  CHECK(model::entropy_lower_bound_params(4, 100) == 200);
}

TEST_CASE("total parameter counts") {
  for (std::size_t layers : {1, 3}) {
    for (std::size_t width : {8, 20}) {
      for (std::size_t m : {1, 2}) {
        ModelConfig base;
        base.layers = layers;
        base.width = width;
        base.tokens_per_step = m;
        ModelConfig a = base, s = base, p = base;
        a.mode = Conditioning::kAdaLN;
        s.mode = Conditioning::kStepToken;
        p.mode = Conditioning::kPlain;
        const VelocityModel ma(a, 0), ms(s, 0), mp(p, 0);
        const std::size_t k = base.step_counts.size();
        CHECK(ms.total_params() < ma.total_params());
        CHECK(ma.total_params() - ms.total_params() ==
              4 * layers * width * width - k * m * width);
        CHECK(mp.total_params() + ma.adaln_params() == ma.total_params());
        CHECK(ms.token_params() == k * m * width);
        CHECK(ma.adaln_params() == model::count_conditioning_params(a).adaln);
        CHECK(ms.token_params() == model::count_conditioning_params(s).token);
      }
    }
  }
}

TEST_CASE("clone is independent") {
  VelocityModel m(small(Conditioning::kAdaLN), 5);
  VelocityModel c = m.clone();
  const Tensor x = random_input(3, 2, 9);
  CHECK(forward(m, x, 0.4, 1) == forward(c, x, 0.4, 1));
  c.params().entries()[0].var.node()->value[0] += 1.0;
  CHECK_FALSE(forward(m, x, 0.4, 1) == forward(c, x, 0.4, 1));
}

TEST_CASE("config validation") {
  ModelConfig c = small(Conditioning::kStepToken);
  c.step_counts = {1, 1};
  CHECK_THROWS_AS(VelocityModel(c, 0), model::ModelError);
  c.step_counts = {};
  CHECK_THROWS_AS(VelocityModel(c, 0), model::ModelError);
  CHECK(model::conditioning_from_string("step-token") == Conditioning::kStepToken);
  CHECK_THROWS_AS(model::conditioning_from_string("film"), model::ModelError);
}
