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
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "dsflow/distill.hpp"
#include "dsflow/eval/checkpoint.hpp"
#include "dsflow/eval/experiments.hpp"
#include "dsflow/eval/metrics.hpp"
#include "dsflow/eval/report.hpp"
#include "stubs.hpp"

using namespace dsflow;
using num::Tensor;
using testing::gaussian_tensor;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "dsflow_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

model::ModelConfig small_config(model::Conditioning mode) {
  model::ModelConfig c;
  c.layers = 2;
  c.width = 8;
  c.mode = mode;
  return c;
}

}  // namespace

TEST_CASE("sliced wasserstein") {
  const Tensor a = gaussian_tensor(4000, 2, 1);

  CHECK(eval::sliced_wasserstein(a, a, 64, 3) == 0.0);

  const Tensor b = gaussian_tensor(3000, 2, 2);
  CHECK(eval::sliced_wasserstein(a, b, 64, 3) == eval::sliced_wasserstein(b, a, 64, 3));

  SUBCASE("translation") {
    Tensor shifted = a;
    for (std::size_t i = 0; i < shifted.rows(); ++i) shifted.at(i, 0) += 5.0;
    // E|u_1| for a uniform direction on the circle is 2 / pi.
    const double expected = 5.0 * 2.0 / std::numbers::pi;
    const double d = eval::sliced_wasserstein(a, shifted, 512, 7);
    CHECK(std::abs(d - expected) <= 0.1 * expected);
  }
  SUBCASE("serial and parallel agree bitwise") {
    for (std::size_t p : {1, 7, 128}) {
      CHECK(eval::sliced_wasserstein_serial(a, b, p, 9) == eval::sliced_wasserstein_omp(a, b, p, 9));
    }
  }
  SUBCASE("directions are unit length") {
    const Tensor dirs = eval::random_directions(32, 5, 1);
    for (std::size_t i = 0; i < 32; ++i) {
      double n = 0;
      for (std::size_t d = 0; d < 5; ++d) n += dirs.at(i, d) * dirs.at(i, d);
      CHECK(n == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("ks statistic and histograms") {
  const std::vector<double> a{0.1, 0.4, 0.2, 0.9};
  const std::vector<double> far{5.0, 6.0, 7.0};
  CHECK(eval::ks_statistic(a, a) == 0.0);
  CHECK(eval::ks_statistic(a, far) == 1.0);
  CHECK(eval::ks_statistic(far, a) == 1.0);

  eval::Histogram h(0.0, 1.0, 4);
  h.add(a);
  h.add(-3.0);
  h.add(12.0);
  CHECK(h.mass() == 6);
  CHECK(h.counts.front() == 3);
  CHECK(h.counts.back() == 2);
  CHECK(h.bin_center(0) == doctest::Approx(0.125));

  const Tensor pts = Tensor::matrix({{3, 4}, {0, -2}});
  CHECK(eval::radial_feature(pts) == std::vector<double>{5.0, 2.0});
}

TEST_CASE("step counting") {
  CHECK(eval::nfe_for(1, 0.05) == 2);
  CHECK(eval::nfe_for(10, 0.0) == 10);
  CHECK(eval::nfe_for(4, 1.0) == 8);
}

TEST_CASE("endpoint agreement") {
  const auto grid = flow::make_schedule(flow::ScheduleKind::kCosine, 10);
  const Tensor z = gaussian_tensor(64, 2, 3);
  std::vector<int> cond(64);
  for (std::size_t i = 0; i < 64; ++i) cond[i] = static_cast<int>(i % 4);

  const model::VelocityModel teacher(small_config(model::Conditioning::kAdaLN), 5);
  SUBCASE("a model against itself on the same grid") {
    const auto uniform = flow::make_schedule(flow::ScheduleKind::kUniform, 10);
    CHECK(eval::endpoint_mse(teacher, teacher, z, cond, 10, 0.7, uniform, 0.7) == 0.0);
  }
  SUBCASE("training shrinks the gap") {
    data::DatasetSpec spec;
    spec.size = 256;
    const auto data = data::generate(spec);
    distill::DistillPlan plan;
    plan.steps = {1};
    plan.init_from_teacher = false;
    plan.cache_targets = true;
    plan.iters = 400;
    plan.batch_size = 32;
    plan.adam.lr = 3e-3;
    plan.tokens_per_step = 1;
    const auto res = distill::train_student(teacher, data, plan);
    const model::VelocityModel untrained(distill::student_config(teacher.config(), plan), 0);
    // The regression trains the conditional branch, so compare it at w = 1.
    const double before = eval::endpoint_mse(untrained, teacher, data.z, data.cond, 1, 1.0, grid, 0.7);
    const double after = eval::endpoint_mse(res.model, teacher, data.z, data.cond, 1, 1.0, grid, 0.7);
    MESSAGE("endpoint mse " << before << " -> " << after);
    CHECK(before >= 10 * after);
    CHECK(after == eval::endpoint_mse(res.model, teacher, data.z, data.cond, 1, 1.0, grid, 0.7));
  }
}

TEST_CASE("latency") {
  const model::VelocityModel teacher(small_config(model::Conditioning::kAdaLN), 1);
  const model::VelocityModel student(small_config(model::Conditioning::kStepToken), 1);
  const auto grid = flow::make_schedule(flow::ScheduleKind::kCosine, 10);
  const Tensor z = gaussian_tensor(256, 2, 1);
  const std::vector<int> cond{0};
  const auto t = eval::latency_bench(teacher, z, cond, grid, 0.7, std::nullopt, 5);
  const auto s = eval::latency_bench(student, z, cond, distill::student_schedule(grid, 1), 0.05, 1, 5);
  CHECK(t.nfe == 20);
  CHECK(s.nfe == 2);
  CHECK(s.seconds_per_sample < t.seconds_per_sample);
}

TEST_CASE("checkpoints") {
  const auto dir = temp_dir("ckpt");
  model::VelocityModel m(small_config(model::Conditioning::kAdaLN), 3);
  m.params().get("adaln0.w2").node()->value.fill(0.25);

  const auto manifest = eval::save_checkpoint(m, 17, dir / "a");
  CHECK(manifest == dir / "a.json");
  const auto loaded = eval::load_checkpoint(dir / "a");
  CHECK(loaded.seed == 17);
  CHECK(loaded.model.config() == m.config());
  const std::string manifest_bytes = slurp(dir / "a.json");
  const std::string blob_bytes = slurp(dir / "a.bin");
  eval::save_checkpoint(loaded.model, loaded.seed, dir / "a");
  CHECK(slurp(dir / "a.json") == manifest_bytes);
  CHECK(slurp(dir / "a.bin") == blob_bytes);

  SUBCASE("truncated blob") {
    const std::string blob = slurp(dir / "a.bin");
    std::ofstream(dir / "a.bin", std::ios::binary | std::ios::trunc)
        .write(blob.data(), static_cast<std::streamsize>(blob.size() - 8));
    const std::string expected = "expected " + std::to_string(blob.size()) + " bytes, found " +
                                 std::to_string(blob.size() - 8);
    CHECK_THROWS_WITH_AS(eval::load_checkpoint(dir / "a"), doctest::Contains(expected.c_str()),
                         eval::CheckpointError);
  }
  SUBCASE("config mismatch") {
    model::VelocityModel tok(small_config(model::Conditioning::kStepToken), 0);
    CHECK_THROWS_AS(eval::load_checkpoint_into(tok, dir / "a.json"), eval::CheckpointError);
    model::VelocityModel same(small_config(model::Conditioning::kAdaLN), 99);
    eval::load_checkpoint_into(same, dir / "a.json");
    CHECK(same.params().get("adaln0.w2").value() == m.params().get("adaln0.w2").value());
  }
  SUBCASE("missing files") {
    CHECK_THROWS_AS(eval::load_checkpoint(dir / "nope"), eval::CheckpointError);
  }
}

TEST_CASE("run configuration") {
  const std::string text = "# desk run\nlayers = 2\nsteps = 1,2,4\nalpha = 0.7\ncfg_reg = true\n";
  auto cfg = eval::RunConfig::parse(text, "run.cfg");
  CHECK(cfg.get_int("layers", 0) == 2);
  CHECK(cfg.get_int_list("steps", {}) == std::vector<int>{1, 2, 4});
  CHECK(cfg.get_double("alpha", 0) == 0.7);
  CHECK(cfg.get_bool("cfg_reg", false));
  CHECK(cfg.get_double("lambda", 0.01) == 0.01);
  cfg.set("seed", "4");
  CHECK(cfg.echo().rfind(text, 0) == 0);
  CHECK(cfg.echo().find("seed = 4") != std::string::npos);
  CHECK_THROWS_AS(cfg.set("sede", "4"), eval::ConfigError);

  CHECK_THROWS_WITH_AS(eval::RunConfig::parse("layers = 2\ntypo = 1\n", "bad.cfg"),
                       doctest::Contains("bad.cfg:2: unknown key 'typo'"), eval::ConfigError);
  CHECK_THROWS_AS(eval::RunConfig::parse("layers = 2\nlayers = 3\n"), eval::ConfigError);
  CHECK_THROWS_AS(eval::RunConfig::parse("layers 2\n"), eval::ConfigError);
  CHECK_THROWS_AS(eval::desk_config_from(eval::RunConfig::parse("layers = many\n")),
                  eval::ConfigError);

  const auto desk = eval::desk_config_from(eval::RunConfig::parse("preset = smoke\nalpha = 0.5\n"));
  CHECK(desk.plan.alpha == 0.5);
  CHECK(desk.teacher.model.layers == eval::smoke_preset().teacher.model.layers);
}

TEST_CASE("reports") {
  eval::MetricReport r("unit");
  r.add_seed(3);
  r.set_scalar("b", 0.1);
  r.set_scalar("a", 2.0);
  eval::Histogram h(0, 1, 4);
  h.add(0.3);
  r.set_histogram("h", h);
  r.set_config_echo("layers = 2\n");
  CHECK_THROWS(r.set_scalar("bad", std::nan("")));
  const std::string text = r.dump();
  CHECK(text == r.dump());
  const auto j = nlohmann::json::parse(text);
  CHECK(j["scalars"]["b"] == 0.1);
  CHECK(j["histograms"]["h"]["mass"] == 1);
  CHECK(j["config"] == "layers = 2\n");

  CHECK(eval::format_double(0.1) == "0.1");
  CHECK(std::stod(eval::format_double(1.0 / 3.0)) == 1.0 / 3.0);

  const eval::Series s{"line", {0, 1}, {1, 2}};
  CHECK(eval::svg_line_plot({s}, "t", "x", "y") == eval::svg_line_plot({s}, "t", "x", "y"));
  CHECK(eval::svg_line_plot({s}, "t", "x", "y").rfind("<svg", 0) == 0);
}

TEST_CASE("guidance sweep output") {
  const model::VelocityModel m(small_config(model::Conditioning::kStepToken), 2);
  const auto grid = flow::make_schedule(flow::ScheduleKind::kCosine, 10);
  const Tensor z = gaussian_tensor(128, 2, 5);
  const Tensor ref = gaussian_tensor(128, 2, 6);
  const std::vector<int> cond{1};
  const std::vector<double> weights = eval::desk_preset().cfg_weights;
  CHECK(weights == std::vector<double>{0.0, 0.05, 0.1, 0.2, 0.5});
  const auto a = eval::cfg_sweep(m, z, cond, ref, 1, grid, weights, 64, 1);
  const auto b = eval::cfg_sweep(m, z, cond, ref, 1, grid, weights, 64, 1);
  CHECK(a == b);
  std::ostringstream out;
  eval::write_cfg_sweep_csv(weights, a, out);
  std::istringstream in(out.str());
  std::string line;
  std::vector<std::string> first;
  while (std::getline(in, line)) first.push_back(line.substr(0, line.find(',')));
  CHECK(first == std::vector<std::string>{"w", "0", "0.05", "0.1", "0.2", "0.5"});
}

TEST_CASE("ablation grid") {
  auto cfg = eval::smoke_preset();
  cfg.plan.iters = 10;
  const std::vector<eval::Axis> axes{eval::Axis::kDual, eval::Axis::kWeakCfg,
                                     eval::Axis::kStepToken};
  const auto rows = eval::ablate(cfg, axes, {0});
  REQUIRE(rows.size() == 8);
  const auto& d = cfg.teacher.model;
  const std::size_t k = cfg.plan.steps.size();
  for (const auto& on : rows) {
    if (!on.step_token) continue;
    for (const auto& off : rows) {
      if (off.step_token || off.dual != on.dual || off.weak_cfg != on.weak_cfg) continue;
      CHECK(on.student_params < off.student_params);
      CHECK(off.student_params - on.student_params ==
            4 * d.layers * d.width * d.width - k * cfg.plan.tokens_per_step * d.width);
    }
  }
  std::ostringstream out;
  eval::write_ablation_csv(rows, out);
  CHECK(out.str().rfind("dual,weak_cfg,step_token,student_params,median_sw,seeds\n", 0) == 0);
  CHECK(eval::axis_from_string("weak-cfg") == eval::Axis::kWeakCfg);
  CHECK_THROWS(eval::axis_from_string("bogus"));
  CHECK(eval::median({3, 1, 2}) == 2.0);
  CHECK(eval::median({4, 1, 2, 3}) == 2.5);
}

TEST_CASE("gradient suite") {
  const auto g = eval::gradient_suite(0);
  CHECK(g.velocity_rel_error < 1e-4);
  CHECK(g.dual_rel_error < 1e-4);
  CHECK(g.reg_rel_error < 1e-4);
  CHECK(g.cond_branch_grad == 0.0);
}

TEST_CASE("smoke run is reproducible") {
  auto cfg = eval::smoke_preset();
  cfg.baselines = false;
  const auto a = eval::run_desk_seed(cfg, 2, "preset = smoke\n");
  const auto b = eval::run_desk_seed(cfg, 2, "preset = smoke\n");
  CHECK(a.report.dump() == b.report.dump());
  const auto dir = temp_dir("repro");
  eval::save_checkpoint(a.student, 2, dir / "a");
  eval::save_checkpoint(b.student, 2, dir / "b");
  CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
  CHECK(a.outcome.sw_student.count(1) == 1);
}
