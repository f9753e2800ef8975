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

// Flow-matching primitives.
//
// Convention used throughout: the state at t = 0 is noise z, the state at
// t = 1 is data x1, the path is x_t = (1 - t) z + t x1 with target velocity
// x1 - z, and sampling integrates t from 0 to 1.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsflow/datasets.hpp"
#include "dsflow/models.hpp"
#include "dsflow/numerics/params.hpp"

namespace dsflow::flow {

using model::VelocityField;
using model::VelocityModel;
using num::Tensor;
using num::Var;

// --- path ------------------------------------------------------------------

/// (1 - t) z + t x1.
Tensor interp_state(const Tensor& z, const Tensor& x1, double t);

/// Velocity of the straight path, x1 - z.
Tensor target_velocity(const Tensor& z, const Tensor& x1);

// --- schedules -------------------------------------------------------------

enum class ScheduleKind { kUniform, kCosine, kCustom };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

/// Time knots 0 = t_0 < t_1 < ... < t_N = 1.
struct Schedule {
  ScheduleKind kind = ScheduleKind::kUniform;
  std::vector<double> knots;

  std::size_t steps() const { return knots.size() - 1; }
};

/// uniform: t_i = i / N; cosine: t_i = (1 - cos(pi i / N)) / 2. N >= 1.
Schedule make_schedule(ScheduleKind kind, std::size_t steps);

/// Validated custom schedule.
Schedule schedule_from_knots(std::vector<double> knots);

// --- guidance --------------------------------------------------------------

/// (1 - w) v(x, t, null) + w v(x, t, c). w = 0 evaluates the unconditional
/// branch only; any other w evaluates both branches once. Weights outside
/// [0, 1] are accepted with a warning.
Var cfg_velocity(const VelocityField& field, const Var& x, std::span<const double> t,
                 std::span<const int> cond, double w, std::optional<int> step = std::nullopt);

/// Number of out-of-range guidance warnings issued so far.
std::size_t guidance_warning_count();

// --- solver ----------------------------------------------------------------

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct Trajectory {
  Schedule schedule;
  std::vector<Tensor> states;      // N + 1 states, one per knot
  std::vector<Tensor> velocities;  // N guided velocities, one per step
  std::vector<int> cond;
  double w = 0.0;
  std::optional<int> step;

  const Tensor& endpoint() const { return states.back(); }
};

/// Guided Euler integration over the schedule knots, without recording a graph.
Trajectory euler_solve(const VelocityField& field, const Tensor& z, std::span<const int> cond,
                       const Schedule& schedule, double w, std::optional<int> step = std::nullopt);

/// CSV rows: knot, t, sample, x0.., v0.. (velocity blank at the final knot).
void write_trajectory_csv(const Trajectory& traj, std::ostream& out);

// --- teacher training ------------------------------------------------------

/// Flow-matching regression loss on one batch. Each row draws t ~ U[0, 1]
/// and, with probability p_uncond, the null condition.
Var fm_teacher_loss(const VelocityField& field, const Tensor& z, const Tensor& x1,
                    std::span<const int> cond, double p_uncond, std::mt19937_64& rng);

struct TeacherTrainConfig {
  model::ModelConfig model;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double p_uncond = 0.02;
  num::AdamConfig adam{};
  std::uint64_t seed = 0;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

struct TeacherResult {
  VelocityModel model;
  std::vector<double> loss_curve;  // one entry per optimizer step
};

/// Trains an adaLN or plain model on `data`; deterministic in cfg.seed.
TeacherResult train_teacher(const TeacherTrainConfig& cfg, const data::Dataset& data);

}  // namespace dsflow::flow
