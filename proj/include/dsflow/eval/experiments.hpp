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

// Desk-scale experiments: one teacher per seed, the distilled student arms,
// the baselines, and the metrics that compare them.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dsflow/datasets.hpp"
#include "dsflow/distill.hpp"
#include "dsflow/eval/report.hpp"
#include "dsflow/flow.hpp"

namespace dsflow::eval {

struct DeskConfig {
  data::DatasetSpec data;
  /// Source file when data.kind is csv; its last heldout_size rows are held out.
  std::string data_path;
  std::size_t heldout_size = 2000;
  flow::TeacherTrainConfig teacher;
  distill::DistillPlan plan;
  std::size_t progressive_iters = 2000;
  std::size_t projections = kDefaultProjections;
  std::vector<double> cfg_weights{0.0, 0.05, 0.1, 0.2, 0.5};
  /// Train the dual-off, endpoint-only and progressive arms as well.
  bool baselines = true;
};

/// Calibrated gauss-mixture setup (about 8 minutes per seed on one core).
DeskConfig desk_preset();

/// Same pipeline at toy budgets, for tests and quick CLI runs.
DeskConfig smoke_preset();

/// Starts from the preset named by `preset` ("desk" or "smoke", the default
/// is the config's own choice) and applies every key the config sets.
DeskConfig desk_config_from(const RunConfig& cfg);

/// Dataset and held-out set for a run seed.
data::Dataset desk_train_set(const DeskConfig& cfg, std::uint64_t seed);
data::Dataset desk_heldout_set(const DeskConfig& cfg, std::uint64_t seed);

/// Feature used for histogram alignment on this dataset kind.
std::vector<double> alignment_feature(const Tensor& samples, data::DatasetKind kind);

struct SeedOutcome {
  std::uint64_t seed = 0;
  double sw_untrained = 0.0;
  double sw_teacher = 0.0;
  std::map<int, double> sw_student;  // DSFlow arm, per step count, at w_student
  std::optional<double> sw_dual_off;
  std::optional<double> sw_endpoint;
  std::optional<double> sw_progressive;
  std::optional<double> ks_dsflow;
  std::optional<double> ks_endpoint;
  std::vector<double> cfg_curve;  // DSFlow 1-step over cfg_weights
  double endpoint_mse = 0.0;      // DSFlow 1-step vs teacher
  std::uint64_t student_params = 0;
  std::uint64_t teacher_params = 0;
};

struct SeedRun {
  SeedOutcome outcome;
  MetricReport report;
  model::VelocityModel teacher;
  model::VelocityModel student;
};

/// Trains everything for one seed and fills a report.
SeedRun run_desk_seed(const DeskConfig& cfg, std::uint64_t seed, const std::string& config_echo,
                      std::ostream* log = nullptr);

/// Distance of each guidance weight's n-step samples to `reference`.
std::vector<double> cfg_sweep(const model::VelocityField& student, const Tensor& z,
                              std::span<const int> cond, const Tensor& reference, int n,
                              const flow::Schedule& teacher_grid,
                              std::span<const double> weights, std::size_t projections,
                              std::uint64_t seed);

void write_cfg_sweep_csv(std::span<const double> weights, std::span<const double> distances,
                         std::ostream& out);

enum class Axis { kDual, kWeakCfg, kStepToken };
std::string to_string(Axis axis);
Axis axis_from_string(const std::string& s);

struct AblationRow {
  bool dual = true;
  bool weak_cfg = true;
  bool step_token = true;
  std::uint64_t student_params = 0;
  std::vector<double> distances;  // per seed, 1-step at w_student
  double median = 0.0;
};

/// Plan for one ablation cell; axes outside the grid stay on.
distill::DistillPlan ablation_plan(const distill::DistillPlan& base, bool dual, bool weak_cfg,
                                   bool step_token);

/// All 2^|axes| combinations for every seed. One teacher per seed is shared
/// by the cells of that seed.
std::vector<AblationRow> ablate(const DeskConfig& cfg, const std::vector<Axis>& axes,
                                const std::vector<std::uint64_t>& seeds,
                                std::ostream* log = nullptr);

void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& out);

double median(std::vector<double> values);

struct GradSuite {
  double velocity_rel_error = 0.0;
  double dual_rel_error = 0.0;
  double reg_rel_error = 0.0;
  /// Largest |gradient| that reached the conditional branch of the penalty.
  double cond_branch_grad = 0.0;
};

/// Central-difference checks of the distillation losses on a small random
/// student.
GradSuite gradient_suite(std::uint64_t seed);

}  // namespace dsflow::eval
