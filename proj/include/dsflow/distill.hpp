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

// Few-step student distillation from a guided multi-step teacher.
//
// A student with step count n covers [0, 1] with n intervals whose
// boundaries sit on teacher knots. Each interval is supervised by the teacher
// state at its end (endpoint term) and by the teacher's mean velocity over it
// evaluated at an interpolated state (velocity term). Neither target needs a
// derivative of the teacher, so every training graph is first order.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsflow/datasets.hpp"
#include "dsflow/flow.hpp"
#include "dsflow/models.hpp"

namespace dsflow::distill {

using flow::Schedule;
using flow::TrainingError;
using model::VelocityField;
using model::VelocityModel;
using num::Tensor;
using num::Var;

inline constexpr double kDefaultStudentGuidance = 0.05;

enum class RolloutMode { kTeacherForced, kFreeRollout };
/// kGlobal weights interval endpoints by the absolute midpoint time t_mf;
/// kLocal takes the plain average of the two endpoint states.
enum class MidpointRule { kGlobal, kLocal };

std::string to_string(RolloutMode mode);
RolloutMode rollout_from_string(const std::string& s);
std::string to_string(MidpointRule rule);
MidpointRule midpoint_from_string(const std::string& s);

struct DistillPlan {
  std::vector<int> steps{1, 2, 4};
  double alpha = 0.7;
  double lambda = 0.01;
  bool cfg_reg = true;
  double w_teacher = 0.7;
  double w_student = kDefaultStudentGuidance;
  /// Rows whose condition is dropped to null during distillation; the teacher
  /// target for such a row is its unconditional trajectory.
  double p_uncond = 0.02;
  std::size_t teacher_steps = 10;
  flow::ScheduleKind teacher_schedule = flow::ScheduleKind::kCosine;
  RolloutMode rollout = RolloutMode::kTeacherForced;
  MidpointRule midpoint = MidpointRule::kGlobal;
  model::Conditioning student_mode = model::Conditioning::kStepToken;
  std::size_t tokens_per_step = 3;
  bool init_from_teacher = true;
  /// Keep each sample's teacher trajectory after its first solve. Exact
  /// because (z, c) pairs are fixed; only the cost changes.
  bool cache_targets = false;
  num::AdamConfig adam{};
  std::size_t batch_size = 32;
  std::size_t iters = 1000;
  std::uint64_t seed = 0;

  Schedule teacher_grid() const;
  /// Throws std::invalid_argument on out-of-range constants or step counts
  /// the teacher grid cannot represent.
  void validate() const;
};

/// Teacher knot index of each student boundary k / n, k = 0..n. Each boundary
/// snaps to the knot nearest in time; a tie goes to the earlier knot.
std::vector<std::size_t> student_knot_indices(const Schedule& teacher, int n);

/// The student's own time grid: the snapped teacher knots.
Schedule student_schedule(const Schedule& teacher, int n);

/// Supervision for one interval over a batch.
struct IntervalTarget {
  std::size_t k = 0;
  std::size_t knot_start = 0;
  std::size_t knot_end = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double t_mf = 0.0;
  Tensor x_start;  // teacher state at t_start
  Tensor x_end;    // teacher state at t_end
  Tensor v_mean;   // (x_end - x_start) / (t_end - t_start)
  Tensor x_mf;     // (1 - t_mf) x_start + t_mf x_end under kGlobal
};

/// Builds interval targets from a full teacher trajectory (one state per knot).
std::vector<IntervalTarget> targets_from_states(std::span<const Tensor> states,
                                                const Schedule& teacher, int n,
                                                MidpointRule rule = MidpointRule::kGlobal);

/// Runs the guided teacher solve once and partitions it into n_k intervals.
std::vector<IntervalTarget> teacher_targets(const VelocityField& teacher, const Tensor& z,
                                            std::span<const int> cond, const DistillPlan& plan,
                                            int n_k);

/// Endpoint term. Teacher-forced: one student Euler step per interval from
/// the teacher's start state, squared error to the teacher's end state,
/// averaged over intervals and batch. Free rollout: the student's own n_k-step
/// chain from z against the teacher's final state.
Var endpoint_loss(const VelocityField& student, std::span<const IntervalTarget> targets,
                  std::span<const int> cond, int n_k,
                  RolloutMode mode = RolloutMode::kTeacherForced);

/// Velocity term: squared error of v_S(x_mf, t_mf, c; n_k) to the mean velocity.
Var velocity_loss(const VelocityField& student, std::span<const IntervalTarget> targets,
                  std::span<const int> cond, int n_k);

/// alpha * endpoint + (1 - alpha) * velocity, both averaged over intervals.
Var dual_loss(const VelocityField& student, std::span<const IntervalTarget> targets,
              std::span<const int> cond, int n_k, double alpha,
              RolloutMode mode = RolloutMode::kTeacherForced);

/// lambda * ||v_S(x, t, null) - sg(v_S(x, t, c))||^2 averaged over rows.
Var cfg_regularizer(const VelocityField& student, const Var& x, std::span<const double> t,
                    std::span<const int> cond, int n_k, double lambda);

/// Same penalty against an already computed conditional prediction.
Var cfg_regularizer(const VelocityField& student, const Var& x, std::span<const double> t,
                    const Var& v_cond, int n_k, double lambda);

/// Loss terms of one training batch, kept separate for curves and tests.
struct StepLoss {
  Var total;
  Var endpoint;
  Var velocity;
  std::optional<Var> reg;
};

/// Dual loss plus the weak-guidance penalty anchored at the midpoint states.
/// The penalty reuses the conditional predictions of the velocity term.
StepLoss student_step_loss(const VelocityField& student, std::span<const IntervalTarget> targets,
                           std::span<const int> cond, int n_k, const DistillPlan& plan);

/// Student architecture derived from the teacher's backbone.
model::ModelConfig student_config(const model::ModelConfig& teacher, const DistillPlan& plan);

/// Teacher trajectories keyed by an integer per row, filled lazily.
class TeacherCache {
 public:
  TeacherCache(std::size_t capacity, Schedule grid, std::size_t dim);

  /// States at every knot for rows (keys[i], z row i, cond[i]); only keys not
  /// seen before are solved, in one batch.
  std::vector<Tensor> states(const VelocityField& teacher, std::span<const std::size_t> keys,
                             const Tensor& z, std::span<const int> cond, double w);
  std::size_t solved() const { return solved_count_; }

 private:
  Schedule grid_;
  std::vector<Tensor> knots_;  // one (capacity, dim) tensor per knot
  std::vector<bool> filled_;
  std::size_t solved_count_ = 0;
};

struct StudentResult {
  VelocityModel model;
  std::vector<double> loss_curve;
  std::vector<double> endpoint_curve;
  std::vector<double> velocity_curve;
  std::vector<double> reg_curve;  // empty when the penalty is off
  std::vector<int> sampled_steps;
  std::size_t teacher_forward_calls = 0;
};

/// The full training loop: per iteration one batch, one n_k drawn uniformly
/// from plan.steps, teacher targets, student_step_loss, one Adam step.
/// The teacher is only read.
StudentResult train_student(const VelocityModel& teacher, const data::Dataset& data,
                            const DistillPlan& plan);

/// The loss graph of a single train_student iteration, for inspection.
StepLoss first_iteration_loss(const VelocityModel& teacher, const VelocityModel& student,
                              const data::Dataset& data, const DistillPlan& plan);

/// Direct endpoint distillation: a one-step student regressed onto the
/// teacher's N-step endpoint from z.
struct EndpointBaselineResult {
  VelocityModel model;
  std::vector<double> loss_curve;
};
EndpointBaselineResult train_endpoint_baseline(const VelocityModel& teacher,
                                               const data::Dataset& data, const DistillPlan& plan);

/// Plan of the endpoint-only comparison arm: S = {1}, alpha = 1, no penalty,
/// free rollout, continuous-time conditioning.
DistillPlan endpoint_only_plan(DistillPlan base);

// --- progressive halving ---------------------------------------------------

/// Step counts visited by halving from the largest power of two not above
/// the teacher's N down to 1, e.g. {8, 4, 2, 1} for N = 10.
std::vector<int> halving_schedule(std::size_t teacher_steps);
std::string halving_schedule_string(std::span<const int> schedule);

/// One halving loss: the student's single step over [t_a, t_b] against two
/// guided steps of `prev` through t_m, starting from x_a. Times hold one
/// value per row of x_a or one shared value.
Var halving_loss(const VelocityField& prev, double prev_w, std::optional<int> prev_step,
                 const VelocityField& student, int student_step, const Tensor& x_a,
                 std::span<const int> cond, std::span<const double> t_a,
                 std::span<const double> t_m, std::span<const double> t_b);

struct ProgressiveConfig {
  std::size_t iters_per_round = 1000;
};

struct ProgressiveResult {
  VelocityModel model;  // final one-step student
  std::vector<int> schedule;
  std::string schedule_str;
  std::vector<std::vector<double>> round_curves;
};

/// Students of n = p/2, p/4, ..., 1 steps, each initialized from the previous
/// model and trained on its two-step composition from teacher-forced states.
ProgressiveResult progressive_distill(const VelocityModel& teacher, const data::Dataset& data,
                                      const DistillPlan& plan, const ProgressiveConfig& cfg);

// --- sampling --------------------------------------------------------------

/// n-step guided Euler solve over the snapped grid with step token n.
flow::Trajectory student_trajectory(const VelocityField& student, const Tensor& z,
                                    std::span<const int> cond, int n, const Schedule& teacher_grid,
                                    double w = kDefaultStudentGuidance);
Tensor student_sample(const VelocityField& student, const Tensor& z, std::span<const int> cond,
                      int n, const Schedule& teacher_grid, double w = kDefaultStudentGuidance);

}  // namespace dsflow::distill
