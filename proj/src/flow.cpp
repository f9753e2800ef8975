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

#include "dsflow/flow.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <iostream>
#include <numbers>

#include "dsflow/rng.hpp"

namespace dsflow::flow {
namespace {

std::atomic<std::size_t> g_guidance_warnings{0};

constexpr std::uint64_t kTeacherNoiseStream = 21;

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw num::ShapeError(std::string(what) + ": shape mismatch " + num::shape_str(a.shape()) +
                          " vs " + num::shape_str(b.shape()));
  }
}

void put_double(std::ostream& out, double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, p - buf);
}

}  // namespace

Tensor interp_state(const Tensor& z, const Tensor& x1, double t) {
  check_same_shape(z, x1, "interp_state");
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("interp_state: t outside [0, 1]");
  Tensor out(z.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * z[i] + t * x1[i];
  return out;
}

Tensor target_velocity(const Tensor& z, const Tensor& x1) {
  check_same_shape(z, x1, "target_velocity");
  Tensor out(z.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x1[i] - z[i];
  return out;
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kUniform: return "uniform";
    case ScheduleKind::kCosine: return "cosine";
    case ScheduleKind::kCustom: return "custom";
  }
  return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "uniform") return ScheduleKind::kUniform;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

Schedule make_schedule(ScheduleKind kind, std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("schedule needs at least one step");
  Schedule s;
  s.kind = kind;
  s.knots.resize(steps + 1);
  const double n = static_cast<double>(steps);
  for (std::size_t i = 0; i <= steps; ++i) {
    const double r = static_cast<double>(i) / n;
    switch (kind) {
      case ScheduleKind::kUniform: s.knots[i] = r; break;
      case ScheduleKind::kCosine: s.knots[i] = (1.0 - std::cos(std::numbers::pi * r)) / 2.0; break;
      case ScheduleKind::kCustom: throw std::invalid_argument("use schedule_from_knots");
    }
  }
  // Exact endpoints and midpoint regardless of rounding in cos().
  s.knots.front() = 0.0;
  s.knots.back() = 1.0;
  if (steps % 2 == 0) s.knots[steps / 2] = 0.5;
  return s;
}

Schedule schedule_from_knots(std::vector<double> knots) {
  if (knots.size() < 2 || knots.front() != 0.0 || knots.back() != 1.0) {
    throw std::invalid_argument("schedule knots must run from exactly 0 to exactly 1");
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i] > knots[i - 1])) throw std::invalid_argument("schedule knots must increase");
  }
  return Schedule{ScheduleKind::kCustom, std::move(knots)};
}

Var cfg_velocity(const VelocityField& field, const Var& x, std::span<const double> t,
                 std::span<const int> cond, double w, std::optional<int> step) {
  if (w < 0.0 || w > 1.0) {
    if (g_guidance_warnings.fetch_add(1) == 0) {
      std::cerr << "warning: guidance weight " << w
                << " is outside [0, 1]; the interpolation form is not comparable with w >= 1 "
                   "guidance scales\n";
    }
  }
  const int null_cond[] = {model::kNullCondition};
  const Var uncond = field.velocity(x, t, null_cond, step);
  if (w == 0.0) return uncond;
  const Var cond_v = field.velocity(x, t, cond, step);
  return num::add(num::scale(uncond, 1.0 - w), num::scale(cond_v, w));
}

std::size_t guidance_warning_count() { return g_guidance_warnings.load(); }

Trajectory euler_solve(const VelocityField& field, const Tensor& z, std::span<const int> cond,
                       const Schedule& schedule, double w, std::optional<int> step) {
  if (schedule.knots.size() < 2) throw std::invalid_argument("schedule has no steps");
  num::NoGradGuard no_grad;
  Trajectory traj;
  traj.schedule = schedule;
  traj.cond.assign(cond.begin(), cond.end());
  traj.w = w;
  traj.step = step;
  traj.states.reserve(schedule.knots.size());
  traj.states.push_back(z);
  for (std::size_t i = 0; i + 1 < schedule.knots.size(); ++i) {
    const double t0 = schedule.knots[i];
    const double dt = schedule.knots[i + 1] - t0;
    const Tensor& x = traj.states.back();
    Tensor v;
    try {
      v = cfg_velocity(field, num::constant(x), std::span<const double>(&t0, 1), cond, w, step)
              .value();
    } catch (const num::NumericError& e) {
      throw SolverError(std::string("euler step ") + std::to_string(i) + ": " + e.what(), i);
    }
    Tensor next(x.shape());
    for (std::size_t k = 0; k < x.size(); ++k) next[k] = x[k] + dt * v[k];
    if (!next.all_finite()) {
      throw SolverError("euler step " + std::to_string(i) + " produced a non-finite state", i);
    }
    traj.velocities.push_back(std::move(v));
    traj.states.push_back(std::move(next));
  }
  return traj;
}

void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
  const std::size_t dim = traj.states.front().cols();
  out << "knot,t,sample";
  for (std::size_t d = 0; d < dim; ++d) out << ",x" << d;
  for (std::size_t d = 0; d < dim; ++d) out << ",v" << d;
  out << '\n';
  for (std::size_t k = 0; k < traj.states.size(); ++k) {
    const Tensor& s = traj.states[k];
    for (std::size_t i = 0; i < s.rows(); ++i) {
      out << k << ',';
      put_double(out, traj.schedule.knots[k]);
      out << ',' << i;
      for (std::size_t d = 0; d < dim; ++d) {
        out << ',';
        put_double(out, s.at(i, d));
      }
      for (std::size_t d = 0; d < dim; ++d) {
        out << ',';
        if (k < traj.velocities.size()) put_double(out, traj.velocities[k].at(i, d));
      }
      out << '\n';
    }
  }
}

Var fm_teacher_loss(const VelocityField& field, const Tensor& z, const Tensor& x1,
                    std::span<const int> cond, double p_uncond, std::mt19937_64& rng) {
  check_same_shape(z, x1, "fm_teacher_loss");
  const std::size_t batch = z.rows();
  if (batch == 0) throw std::invalid_argument("fm_teacher_loss: empty batch");
  if (cond.size() != batch) throw num::ShapeError("fm_teacher_loss: one condition per row");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> t(batch);
  std::vector<int> c(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    t[i] = unit(rng);
    c[i] = unit(rng) < p_uncond ? model::kNullCondition : cond[i];
  }
  Tensor xt(z.shape());
  const std::size_t dim = z.cols();
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t d = 0; d < dim; ++d) {
      xt.at(i, d) = (1.0 - t[i]) * z.at(i, d) + t[i] * x1.at(i, d);
    }
  }
  const Var v = field.velocity(num::constant(std::move(xt)), t, c);
  return num::mean_sq_norm(num::sub(v, num::constant(target_velocity(z, x1))));
}

TeacherResult train_teacher(const TeacherTrainConfig& cfg, const data::Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("train_teacher: empty dataset");
  if (cfg.model.mode == model::Conditioning::kStepToken) {
    throw std::invalid_argument("teachers use adaln or plain conditioning");
  }
  TeacherResult result{VelocityModel(cfg.model, cfg.seed), {}};
  auto rng = rng::stream(cfg.seed, kTeacherNoiseStream);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : data::epoch_batches(data.size(), cfg.batch_size, cfg.seed, epoch)) {
      const Tensor z = data::gather(data.z, idx);
      const Tensor x1 = data::gather(data.x1, idx);
      std::vector<int> c(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) c[i] = data.cond[idx[i]];
      try {
        const Var loss = fm_teacher_loss(result.model, z, x1, c, cfg.p_uncond, rng);
        num::backward(loss);
        num::adam_step(result.model.params(), cfg.adam);
        result.loss_curve.push_back(loss.value().item());
      } catch (const num::NumericError& e) {
        throw TrainingError("teacher training diverged at step " + std::to_string(step) + ": " +
                                e.what(),
                            step);
      }
      ++step;
    }
  }
  return result;
}

}  // namespace dsflow::flow
