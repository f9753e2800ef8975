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
#include <random>
#include <vector>

#include <doctest.h>

#include "dsflow/kernels/gemm.hpp"
#include "dsflow/numerics/autodiff.hpp"
#include "dsflow/numerics/params.hpp"
#include "dsflow/numerics/tensor.hpp"

using namespace dsflow::num;

TEST_CASE("matmul values") {
  const Tensor m = Tensor::matrix({{1, -2, 3}, {0.5, 4, -1}, {2, 2, 2}});
  CHECK(matmul(constant(Tensor::identity(3)), constant(m)).value() == m);

  const Var p = matmul(constant(Tensor::matrix({{1, 2}, {3, 4}})),
                       constant(Tensor::matrix({{5}, {6}})));
  CHECK(p.value() == Tensor::matrix({{17}, {39}}));

  const Var z = matmul(constant(Tensor::zeros({3, 3})), constant(m));
  CHECK(z.value() == Tensor::zeros({3, 3}));

  CHECK_THROWS(matmul(constant(Tensor::zeros({2, 3})), constant(Tensor::zeros({2, 3}))));
}

TEST_CASE("elementwise basics") {
  const Tensor x = Tensor::matrix({{1.5, -2}, {3, 0.25}});
  CHECK(add(constant(x), constant(Tensor::zeros({2, 2}))).value() == x);
  CHECK(tanh(constant(Tensor::scalar(0.0))).value().item() == 0.0);
  CHECK(mean(constant(Tensor::vector({2, 4, 6}))).value().item() == doctest::Approx(4.0));
  CHECK_THROWS(add(constant(Tensor::zeros({2, 3})), constant(Tensor::zeros({3, 2}))));
}

TEST_CASE("non-finite values are surfaced") {
  const Var big = constant(Tensor::scalar(1e300));
  CHECK_THROWS_AS(mul(big, big), NumericError);
}

TEST_CASE("stop_gradient is a value identity and a gradient barrier") {
  const Var a = parameter(Tensor::vector({1.0, -2.0, 0.5}));
  const Var b = parameter(Tensor::vector({3.0, 4.0, -1.0}));
  const Var sg = stop_gradient(a);
  CHECK(sg.value() == a.value());

  // ||sg(f(a))||^2 passes nothing back to a.
  backward(sum(square(stop_gradient(scale(a, 3.0)))));
  CHECK(a.grad() == Tensor::zeros({3}));

  // L = sum(sg(a) * b): dL/db = a, dL/da = 0.
  const Var a2 = parameter(a.value());
  const Var b2 = parameter(b.value());
  backward(sum(mul(stop_gradient(a2), b2)));
  CHECK(b2.grad() == a2.value());
  CHECK(a2.grad() == Tensor::zeros({3}));

  // Finite differences along the b path agree.
  const double h = 1e-5;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor up = b2.value(), dn = b2.value();
    up[i] += h;
    dn[i] -= h;
    const double fd = (sum(mul(constant(a2.value()), constant(up))).value().item() -
                       sum(mul(constant(a2.value()), constant(dn))).value().item()) /
                      (2 * h);
    CHECK(b2.grad()[i] == doctest::Approx(fd).epsilon(1e-9));
  }
}

TEST_CASE("backward rules") {
  const Var p = parameter(Tensor::vector({1, 2, 3, 4}));
  backward(sum(p));
  CHECK(p.grad() == Tensor::ones({4}));

  const Var q = parameter(Tensor::vector({0.5, -1.5, 2.0}));
  backward(sum(square(q)));
  for (std::size_t i = 0; i < 3; ++i) CHECK(q.grad()[i] == 2.0 * q.value()[i]);

  CHECK_THROWS(backward(q));
}

TEST_CASE("two-layer network gradients match finite differences") {
  std::mt19937_64 gen(7);
  std::normal_distribution<double> nd(0.0, 0.5);
  const auto rnd = [&](Shape s) {
    Tensor t(s);
    for (auto& v : t.storage()) v = nd(gen);
    return t;
  };
  ParamStore store;
  store.add("w1", rnd({3, 5}));
  store.add("b1", rnd({1, 5}));
  store.add("w2", rnd({5, 2}));
  const Tensor x = rnd({4, 3});
  const Tensor y = rnd({4, 2});
  const auto loss = [&] {
    const Var h = silu(add(matmul(constant(x), store.get("w1")), store.get("b1")));
    const Var out = matmul(layer_norm(h), store.get("w2"));
    return mean_sq_norm(sub(tanh(out), constant(y)));
  };
  const auto r = finite_diff_check(loss, store);
  CHECK(r.checked == 3 * 5 + 5 + 5 * 2);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("finite_diff_check is exact for a linear loss and rejects randomness") {
  ParamStore store;
  store.add("p", Tensor::vector({0.3, -0.7, 1.1}));
  const Tensor c = Tensor::vector({2.0, -1.0, 0.5});
  const auto linear = [&] { return sum(mul(store.get("p"), constant(c))); };
  CHECK(finite_diff_check(linear, store).max_rel_error < 1e-9);

  int calls = 0;
  const auto noisy = [&] { return scale(sum(store.get("p")), 1.0 + ++calls); };
  CHECK_THROWS(finite_diff_check(noisy, store));
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradients leave parameters unchanged") {
    ParamStore store;
    store.add("p", Tensor::vector({1.0, 2.0}));
    const Tensor before = store.get("p").value();
    backward(scale(sum(store.get("p")), 0.0));
    adam_step(store, AdamConfig{});
    CHECK(store.get("p").value() == before);
  }
  SUBCASE("constant gradient moves monotonically against its sign") {
    ParamStore store;
    store.add("p", Tensor::scalar(0.0));
    double prev = 0.0;
    for (int i = 0; i < 50; ++i) {
      backward(scale(store.get("p"), 2.5));
      adam_step(store, AdamConfig{});
      const double now = store.get("p").value().item();
      CHECK(now < prev);
      prev = now;
    }
  }
  SUBCASE("quadratic bowl converges") {
    // Adam moves about lr per step, so start within reach of 500 steps.
    ParamStore store;
    store.add("p", Tensor::vector({2.0}));
    AdamConfig cfg;
    cfg.lr = 1e-2;
    for (int i = 0; i < 500; ++i) {
      backward(sum(square(add_scalar(store.get("p"), -3.0))));
      adam_step(store, cfg);
    }
    CHECK(std::abs(store.get("p").value()[0] - 3.0) < 1e-2);
    CHECK(store.get("p").value().all_finite());
  }
  SUBCASE("grads are zeroed after the step") {
    ParamStore store;
    store.add("p", Tensor::vector({1.0}));
    backward(sum(store.get("p")));
    adam_step(store, AdamConfig{});
    CHECK(store.get("p").grad() == Tensor::zeros({1}));
  }
}

TEST_CASE("param store accounting") {
  ParamStore store;
  store.add("a", Tensor::zeros({3, 4}));
  store.add("b", Tensor::zeros({1, 4}));
  CHECK(store.total_param_count() == 16);
  CHECK_THROWS(store.add("a", Tensor::zeros({1})));
}

TEST_CASE("graph inspection sees only first-order nodes") {
  const Var p = parameter(Tensor::vector({1, 2}));
  const Var loss = mean_sq_norm(sub(silu(p), stop_gradient(p)));
  const GraphStats s = inspect_graph(loss);
  CHECK(s.max_derivative_order == 0);
  CHECK(s.higher_order_nodes == 0);
  CHECK(s.parameters == 1);
  CHECK(s.detached >= 1);
}

TEST_CASE("serial and OpenMP gemm agree bitwise") {
  using dsflow::kernels::Trans;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::size_t m = 37, n = 29, k = 41;
  std::vector<double> a(m * k), b(k * n), c1(m * n), c2(m * n);
  for (auto& v : a) v = u(gen);
  for (auto& v : b) v = u(gen);
  for (Trans ta : {Trans::kNo, Trans::kYes}) {
    for (Trans tb : {Trans::kNo, Trans::kYes}) {
      const std::size_t lda = ta == Trans::kNo ? k : m;
      const std::size_t ldb = tb == Trans::kNo ? n : k;
      dsflow::kernels::gemm_serial(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c1.data());
      dsflow::kernels::gemm_omp(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c2.data());
      CHECK(c1 == c2);
    }
  }
}
