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

#include "dsflow/distill.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "dsflow/rng.hpp"

namespace dsflow::distill {
namespace {

constexpr std::uint64_t kSamplerStream = 31;

// Per-row column of a repeated value, shape (rows, 1).
Tensor column(std::span<const double> values) {
  return Tensor({values.size(), 1}, std::vector<double>(values.begin(), values.end()));
}

// Condition ids for n_k stacked copies of a batch.
std::vector<int> tile(std::span<const int> cond, std::size_t batch, std::size_t copies) {
  std::vector<int> out;
  out.reserve(batch * copies);
  for (std::size_t k = 0; k < copies; ++k) {
    for (std::size_t i = 0; i < batch; ++i) out.push_back(cond.size() == 1 ? cond[0] : cond[i]);
  }
  return out;
}

void check_targets(std::span<const IntervalTarget> targets, int n_k) {
  if (targets.empty()) throw std::invalid_argument("no interval targets");
  if (static_cast<std::size_t>(n_k) != targets.size()) {
    throw std::invalid_argument("expected " + std::to_string(n_k) + " interval targets, got " +
                                std::to_string(targets.size()));
  }
}

// Stacked rows of one field of every target.
template <class Get>
Tensor stack(std::span<const IntervalTarget> targets, Get get) {
  std::vector<Tensor> parts;
  parts.reserve(targets.size());
  for (const auto& tg : targets) parts.push_back(get(tg));
  return num::vstack(parts);
}

template <class Get>
std::vector<double> per_row(std::span<const IntervalTarget> targets, Get get) {
  std::vector<double> out;
  for (const auto& tg : targets) out.insert(out.end(), tg.x_start.rows(), get(tg));
  return out;
}

struct MidpointPrediction {
  Var x;
  std::vector<double> t;
  Var v_cond;
};

MidpointPrediction predict_midpoints(const VelocityField& student,
                                     std::span<const IntervalTarget> targets,
                                     std::span<const int> cond, int n_k) {
  const std::size_t batch = targets.front().x_start.rows();
  MidpointPrediction out;
  out.x = num::constant(stack(targets, [](const IntervalTarget& t) { return t.x_mf; }));
  out.t = per_row(targets, [](const IntervalTarget& t) { return t.t_mf; });
  const auto c = tile(cond, batch, targets.size());
  out.v_cond = student.velocity(out.x, out.t, c, n_k);
  return out;
}

Var velocity_term(const MidpointPrediction& mid, std::span<const IntervalTarget> targets) {
  const Tensor v_mean = stack(targets, [](const IntervalTarget& t) { return t.v_mean; });
  return num::mean_sq_norm(num::sub(mid.v_cond, num::constant(v_mean)));
}

Var combine(const Var& endpoint, const Var& velocity, double alpha) {
  return num::add(num::scale(endpoint, alpha), num::scale(velocity, 1.0 - alpha));
}

// Batch, dropout and step-count draws shared by every training loop, so
// loops that differ only in their loss consume identical randomness.
class BatchSampler {
 public:
  struct Draw {
    std::vector<std::size_t> rows;
    std::vector<std::size_t> keys;  // sample index, offset by size() when dropped
    std::vector<int> cond;
    Tensor z;
    int n_k = 1;
  };

  BatchSampler(const data::Dataset& data, const DistillPlan& plan)
      : data_(data),
        plan_(plan),
        batches_(data.size(), plan.batch_size, plan.seed),
        rng_(rng::stream(plan.seed, kSamplerStream)) {}

  Draw next() {
    Draw d;
    d.rows = batches_.next();
    d.z = data::gather(data_.z, d.rows);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t r : d.rows) {
      const bool drop = unit(rng_) < plan_.p_uncond;
      d.cond.push_back(drop ? model::kNullCondition : data_.cond[r]);
      d.keys.push_back(drop ? r + data_.size() : r);
    }
    std::uniform_int_distribution<std::size_t> pick(0, plan_.steps.size() - 1);
    d.n_k = plan_.steps[pick(rng_)];
    return d;
  }

 private:
  const data::Dataset& data_;
  const DistillPlan& plan_;
  data::BatchIterator batches_;
  std::mt19937_64 rng_;
};

// Teacher states at every knot for a draw, from the cache when enabled.
std::vector<Tensor> teacher_states(const VelocityField& teacher, const BatchSampler::Draw& d,
                                   const DistillPlan& plan, const Schedule& grid,
                                   std::optional<TeacherCache>& cache) {
  if (cache) return cache->states(teacher, d.keys, d.z, d.cond, plan.w_teacher);
  return flow::euler_solve(teacher, d.z, d.cond, grid, plan.w_teacher).states;
}

std::optional<TeacherCache> make_cache(const data::Dataset& data, const DistillPlan& plan,
                                       const Schedule& grid) {
  if (!plan.cache_targets) return std::nullopt;
  return TeacherCache(2 * data.size(), grid, data.dim());
}

void check_compatible(const VelocityModel& teacher, const data::Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("distillation needs a non-empty dataset");
  if (data.dim() != teacher.config().data_dim) {
    throw std::invalid_argument("dataset dimension " + std::to_string(data.dim()) +
                                " does not match the teacher's " +
                                std::to_string(teacher.config().data_dim));
  }
}

TrainingError diverged(const char* what, std::size_t step, const std::exception& e) {
  return TrainingError(std::string(what) + " diverged at step " + std::to_string(step) + ": " +
                           e.what(),
                       step);
}

}  // namespace

std::string to_string(RolloutMode mode) {
  return mode == RolloutMode::kTeacherForced ? "teacher-forced" : "free-rollout";
}

RolloutMode rollout_from_string(const std::string& s) {
  if (s == "teacher-forced") return RolloutMode::kTeacherForced;
  if (s == "free-rollout") return RolloutMode::kFreeRollout;
  throw std::invalid_argument("unknown rollout mode: " + s);
}

std::string to_string(MidpointRule rule) {
  return rule == MidpointRule::kGlobal ? "global" : "local";
}

MidpointRule midpoint_from_string(const std::string& s) {
  if (s == "global") return MidpointRule::kGlobal;
  if (s == "local") return MidpointRule::kLocal;
  throw std::invalid_argument("unknown midpoint rule: " + s);
}

Schedule DistillPlan::teacher_grid() const {
  return flow::make_schedule(teacher_schedule, teacher_steps);
}

void DistillPlan::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("lambda must be finite and >= 0");
  }
  if (!(p_uncond >= 0.0 && p_uncond <= 1.0)) {
    throw std::invalid_argument("p_uncond must lie in [0, 1]");
  }
  if (!std::isfinite(w_teacher) || !std::isfinite(w_student)) {
    throw std::invalid_argument("guidance weights must be finite");
  }
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (steps.empty()) throw std::invalid_argument("at least one student step count is required");
  std::set<int> seen;
  const Schedule grid = teacher_grid();
  for (int n : steps) {
    if (!seen.insert(n).second) throw std::invalid_argument("duplicate step count");
    student_knot_indices(grid, n);
  }
}

std::vector<std::size_t> student_knot_indices(const Schedule& teacher, int n) {
  if (n < 1) throw std::invalid_argument("step count must be >= 1");
  const auto& knots = teacher.knots;
  if (static_cast<std::size_t>(n) > teacher.steps()) {
    throw std::invalid_argument("step count " + std::to_string(n) + " exceeds the teacher's " +
                                std::to_string(teacher.steps()) + " steps");
  }
  std::vector<std::size_t> idx(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) {
    const double target = static_cast<double>(k) / n;
    std::size_t best = 0;
    double best_gap = std::abs(knots[0] - target);
    for (std::size_t i = 1; i < knots.size(); ++i) {
      const double gap = std::abs(knots[i] - target);
      if (gap < best_gap) {
        best = i;
        best_gap = gap;
      }
    }
    idx[static_cast<std::size_t>(k)] = best;
  }
  for (std::size_t k = 1; k < idx.size(); ++k) {
    if (idx[k] <= idx[k - 1]) {
      throw std::invalid_argument("step count " + std::to_string(n) +
                                  " has no distinct teacher knots for every boundary");
    }
  }
  return idx;
}

Schedule student_schedule(const Schedule& teacher, int n) {
  std::vector<double> knots;
  for (std::size_t i : student_knot_indices(teacher, n)) knots.push_back(teacher.knots[i]);
  return flow::schedule_from_knots(std::move(knots));
}

std::vector<IntervalTarget> targets_from_states(std::span<const Tensor> states,
                                                const Schedule& teacher, int n,
                                                MidpointRule rule) {
  if (states.size() != teacher.knots.size()) {
    throw std::invalid_argument("need one teacher state per knot");
  }
  const auto idx = student_knot_indices(teacher, n);
  std::vector<IntervalTarget> out(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < out.size(); ++k) {
    IntervalTarget& tg = out[k];
    tg.k = k;
    tg.knot_start = idx[k];
    tg.knot_end = idx[k + 1];
    tg.t_start = teacher.knots[tg.knot_start];
    tg.t_end = teacher.knots[tg.knot_end];
    tg.t_mf = 0.5 * (tg.t_start + tg.t_end);
    tg.x_start = states[tg.knot_start];
    tg.x_end = states[tg.knot_end];
    const double dt = tg.t_end - tg.t_start;
    const double w = rule == MidpointRule::kGlobal ? tg.t_mf : 0.5;
    tg.v_mean = Tensor(tg.x_start.shape());
    tg.x_mf = Tensor(tg.x_start.shape());
    for (std::size_t i = 0; i < tg.x_start.size(); ++i) {
      tg.v_mean[i] = (tg.x_end[i] - tg.x_start[i]) / dt;
      tg.x_mf[i] = (1.0 - w) * tg.x_start[i] + w * tg.x_end[i];
    }
  }
  return out;
}

std::vector<IntervalTarget> teacher_targets(const VelocityField& teacher, const Tensor& z,
                                            std::span<const int> cond, const DistillPlan& plan,
                                            int n_k) {
  if (std::find(plan.steps.begin(), plan.steps.end(), n_k) == plan.steps.end()) {
    throw std::invalid_argument("step count " + std::to_string(n_k) + " is not in the plan");
  }
  const Schedule grid = plan.teacher_grid();
  const flow::Trajectory traj = flow::euler_solve(teacher, z, cond, grid, plan.w_teacher);
  return targets_from_states(traj.states, grid, n_k, plan.midpoint);
}

Var endpoint_loss(const VelocityField& student, std::span<const IntervalTarget> targets,
                  std::span<const int> cond, int n_k, RolloutMode mode) {
  check_targets(targets, n_k);
  if (mode == RolloutMode::kFreeRollout) {
    Var x = num::constant(targets.front().x_start);
    for (const auto& tg : targets) {
      const double t = tg.t_start;
      const Var v = student.velocity(x, std::span<const double>(&t, 1), cond, n_k);
      x = num::add(x, num::scale(v, tg.t_end - tg.t_start));
    }
    return num::mean_sq_norm(num::sub(x, num::constant(targets.back().x_end)));
  }
  const std::size_t batch = targets.front().x_start.rows();
  const Var x = num::constant(stack(targets, [](const IntervalTarget& t) { return t.x_start; }));
  const auto t = per_row(targets, [](const IntervalTarget& tg) { return tg.t_start; });
  const auto dt = per_row(targets, [](const IntervalTarget& tg) { return tg.t_end - tg.t_start; });
  const Var v = student.velocity(x, t, tile(cond, batch, targets.size()), n_k);
  const Var x_next = num::add(x, num::mul(v, num::constant(column(dt))));
  const Tensor x_end = stack(targets, [](const IntervalTarget& tg) { return tg.x_end; });
  return num::mean_sq_norm(num::sub(x_next, num::constant(x_end)));
}

Var velocity_loss(const VelocityField& student, std::span<const IntervalTarget> targets,
                  std::span<const int> cond, int n_k) {
  check_targets(targets, n_k);
  return velocity_term(predict_midpoints(student, targets, cond, n_k), targets);
}

Var dual_loss(const VelocityField& student, std::span<const IntervalTarget> targets,
              std::span<const int> cond, int n_k, double alpha, RolloutMode mode) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  return combine(endpoint_loss(student, targets, cond, n_k, mode),
                 velocity_loss(student, targets, cond, n_k), alpha);
}

Var cfg_regularizer(const VelocityField& student, const Var& x, std::span<const double> t,
                    std::span<const int> cond, int n_k, double lambda) {
  return cfg_regularizer(student, x, t, student.velocity(x, t, cond, n_k), n_k, lambda);
}

Var cfg_regularizer(const VelocityField& student, const Var& x, std::span<const double> t,
                    const Var& v_cond, int n_k, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  const int null_cond[] = {model::kNullCondition};
  const Var v_uncond = student.velocity(x, t, null_cond, n_k);
  return num::scale(num::mean_sq_norm(num::sub(v_uncond, num::stop_gradient(v_cond))), lambda);
}

StepLoss student_step_loss(const VelocityField& student, std::span<const IntervalTarget> targets,
                           std::span<const int> cond, int n_k, const DistillPlan& plan) {
  check_targets(targets, n_k);
  StepLoss out;
  out.endpoint = endpoint_loss(student, targets, cond, n_k, plan.rollout);
  const MidpointPrediction mid = predict_midpoints(student, targets, cond, n_k);
  out.velocity = velocity_term(mid, targets);
  out.total = combine(out.endpoint, out.velocity, plan.alpha);
  if (plan.cfg_reg) {
    out.reg = cfg_regularizer(student, mid.x, mid.t, mid.v_cond, n_k, plan.lambda);
    out.total = num::add(out.total, *out.reg);
  }
  return out;
}

model::ModelConfig student_config(const model::ModelConfig& teacher, const DistillPlan& plan) {
  model::ModelConfig cfg = teacher;
  cfg.mode = plan.student_mode;
  cfg.step_counts = plan.steps;
  cfg.tokens_per_step = plan.tokens_per_step;
  return cfg;
}

TeacherCache::TeacherCache(std::size_t capacity, Schedule grid, std::size_t dim)
    : grid_(std::move(grid)),
      knots_(grid_.knots.size(), Tensor({capacity, dim})),
      filled_(capacity, false) {}

std::vector<Tensor> TeacherCache::states(const VelocityField& teacher,
                                         std::span<const std::size_t> keys, const Tensor& z,
                                         std::span<const int> cond, double w) {
  if (keys.size() != z.rows() || cond.size() != z.rows()) {
    throw num::ShapeError("cache lookup needs one key and condition per row");
  }
  std::vector<std::size_t> missing;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i] >= filled_.size()) throw std::out_of_range("cache key out of range");
    if (!filled_[keys[i]] &&
        std::find_if(missing.begin(), missing.end(),
                     [&](std::size_t j) { return keys[j] == keys[i]; }) == missing.end()) {
      missing.push_back(i);
    }
  }
  if (!missing.empty()) {
    std::vector<int> c;
    for (std::size_t i : missing) c.push_back(cond[i]);
    const auto traj = flow::euler_solve(teacher, data::gather(z, missing), c, grid_, w);
    const std::size_t dim = z.cols();
    for (std::size_t m = 0; m < missing.size(); ++m) {
      const std::size_t key = keys[missing[m]];
      for (std::size_t k = 0; k < knots_.size(); ++k) {
        for (std::size_t d = 0; d < dim; ++d) knots_[k].at(key, d) = traj.states[k].at(m, d);
      }
      filled_[key] = true;
      ++solved_count_;
    }
  }
  std::vector<Tensor> out;
  out.reserve(knots_.size());
  for (const Tensor& all : knots_) out.push_back(data::gather(all, keys));
  return out;
}

namespace {

VelocityModel init_student(const VelocityModel& teacher, const DistillPlan& plan) {
  VelocityModel student(student_config(teacher.config(), plan), plan.seed);
  if (plan.init_from_teacher) student.copy_shared_from(teacher);
  return student;
}

}  // namespace

StepLoss first_iteration_loss(const VelocityModel& teacher, const VelocityModel& student,
                              const data::Dataset& data, const DistillPlan& plan) {
  plan.validate();
  check_compatible(teacher, data);
  const Schedule grid = plan.teacher_grid();
  BatchSampler sampler(data, plan);
  const auto d = sampler.next();
  std::optional<TeacherCache> no_cache;
  const auto states = teacher_states(teacher, d, plan, grid, no_cache);
  const auto targets = targets_from_states(states, grid, d.n_k, plan.midpoint);
  return student_step_loss(student, targets, d.cond, d.n_k, plan);
}

StudentResult train_student(const VelocityModel& teacher, const data::Dataset& data,
                            const DistillPlan& plan) {
  plan.validate();
  check_compatible(teacher, data);
  const Schedule grid = plan.teacher_grid();
  StudentResult res{init_student(teacher, plan), {}, {}, {}, {}, {}, 0};
  const std::size_t calls_before = teacher.forward_calls();
  auto cache = make_cache(data, plan, grid);
  BatchSampler sampler(data, plan);
  for (std::size_t it = 0; it < plan.iters; ++it) {
    try {
      const auto d = sampler.next();
      const auto states = teacher_states(teacher, d, plan, grid, cache);
      const auto targets = targets_from_states(states, grid, d.n_k, plan.midpoint);
      const StepLoss loss = student_step_loss(res.model, targets, d.cond, d.n_k, plan);
      num::backward(loss.total);
      num::adam_step(res.model.params(), plan.adam);
      res.loss_curve.push_back(loss.total.value().item());
      res.endpoint_curve.push_back(loss.endpoint.value().item());
      res.velocity_curve.push_back(loss.velocity.value().item());
      if (loss.reg) res.reg_curve.push_back(loss.reg->value().item());
      res.sampled_steps.push_back(d.n_k);
    } catch (const num::NumericError& e) {
      throw diverged("distillation", it, e);
    } catch (const flow::SolverError& e) {
      throw diverged("teacher solve", it, e);
    }
  }
  res.teacher_forward_calls = teacher.forward_calls() - calls_before;
  return res;
}

DistillPlan endpoint_only_plan(DistillPlan base) {
  base.steps = {1};
  base.alpha = 1.0;
  base.lambda = 0.0;
  base.cfg_reg = false;
  base.rollout = RolloutMode::kFreeRollout;
  base.student_mode = model::Conditioning::kAdaLN;
  return base;
}

EndpointBaselineResult train_endpoint_baseline(const VelocityModel& teacher,
                                               const data::Dataset& data,
                                               const DistillPlan& base) {
  const DistillPlan plan = endpoint_only_plan(base);
  plan.validate();
  check_compatible(teacher, data);
  const Schedule grid = plan.teacher_grid();
  EndpointBaselineResult res{init_student(teacher, plan), {}};
  auto cache = make_cache(data, plan, grid);
  BatchSampler sampler(data, plan);
  const double t0 = 0.0;
  for (std::size_t it = 0; it < plan.iters; ++it) {
    try {
      const auto d = sampler.next();
      const auto states = teacher_states(teacher, d, plan, grid, cache);
      const Var z = num::constant(d.z);
      const Var v = res.model.velocity(z, std::span<const double>(&t0, 1), d.cond, 1);
      const Var x1 = num::add(z, num::scale(v, 1.0));
      const Var loss = num::mean_sq_norm(num::sub(x1, num::constant(states.back())));
      num::backward(loss);
      num::adam_step(res.model.params(), plan.adam);
      res.loss_curve.push_back(loss.value().item());
    } catch (const num::NumericError& e) {
      throw diverged("endpoint distillation", it, e);
    }
  }
  return res;
}

// --- progressive -----------------------------------------------------------

std::vector<int> halving_schedule(std::size_t teacher_steps) {
  if (teacher_steps == 0) throw std::invalid_argument("teacher needs at least one step");
  int p = 1;
  while (static_cast<std::size_t>(p) * 2 <= teacher_steps) p *= 2;
  std::vector<int> out;
  for (; p >= 1; p /= 2) out.push_back(p);
  return out;
}

std::string halving_schedule_string(std::span<const int> schedule) {
  std::ostringstream os;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (i) os << "→";
    os << schedule[i];
  }
  return os.str();
}

Var halving_loss(const VelocityField& prev, double prev_w, std::optional<int> prev_step,
                 const VelocityField& student, int student_step, const Tensor& x_a,
                 std::span<const int> cond, std::span<const double> t_a,
                 std::span<const double> t_m, std::span<const double> t_b) {
  const std::size_t rows = x_a.rows();
  auto expand = [rows](std::span<const double> t) {
    if (t.size() != rows && t.size() != 1) throw num::ShapeError("one time per row expected");
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i] = t.size() == 1 ? t[0] : t[i];
    return out;
  };
  const auto ta = expand(t_a);
  const auto tm = expand(t_m);
  const auto tb = expand(t_b);
  std::vector<double> d1(rows), d2(rows), d(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!(ta[i] < tm[i] && tm[i] < tb[i])) throw std::invalid_argument("need t_a < t_m < t_b");
    d1[i] = tm[i] - ta[i];
    d2[i] = tb[i] - tm[i];
    d[i] = tb[i] - ta[i];
  }
  Tensor target;
  {
    num::NoGradGuard no_grad;
    const Var xa = num::constant(x_a);
    const Var xm = num::add(
        xa, num::mul(flow::cfg_velocity(prev, xa, ta, cond, prev_w, prev_step),
                     num::constant(column(d1))));
    const Var xb = num::add(
        xm, num::mul(flow::cfg_velocity(prev, xm, tm, cond, prev_w, prev_step),
                     num::constant(column(d2))));
    target = xb.value();
  }
  const Var xa = num::constant(x_a);
  const Var v = student.velocity(xa, ta, cond, student_step);
  const Var pred = num::add(xa, num::mul(v, num::constant(column(d))));
  return num::mean_sq_norm(num::sub(pred, num::constant(std::move(target))));
}

ProgressiveResult progressive_distill(const VelocityModel& teacher, const data::Dataset& data,
                                      const DistillPlan& base, const ProgressiveConfig& cfg) {
  DistillPlan plan = base;
  plan.steps = halving_schedule(plan.teacher_steps);
  plan.student_mode = teacher.config().mode;
  plan.validate();
  check_compatible(teacher, data);
  const Schedule grid = plan.teacher_grid();

  ProgressiveResult res{teacher.clone(), plan.steps, halving_schedule_string(plan.steps), {}};
  auto cache = make_cache(data, plan, grid);
  for (std::size_t round = 1; round < plan.steps.size(); ++round) {
    const int n_prev = plan.steps[round - 1];
    const int n = plan.steps[round];
    const auto fine = student_knot_indices(grid, n_prev);
    const auto coarse = student_knot_indices(grid, n);
    // The first round distils the guided teacher; later rounds distil a
    // student whose conditional branch already carries the guidance.
    const double prev_w = round == 1 ? plan.w_teacher : 1.0;
    VelocityModel prev = std::move(res.model);
    res.model = prev.clone();

    DistillPlan round_plan = plan;
    round_plan.seed = rng::mix(plan.seed, round);
    BatchSampler sampler(data, round_plan);
    std::vector<double> curve;
    for (std::size_t it = 0; it < cfg.iters_per_round; ++it) {
      try {
        const auto d = sampler.next();
        const auto states = teacher_states(teacher, d, plan, grid, cache);
        std::vector<Tensor> starts;
        std::vector<double> ta, tm, tb;
        const std::size_t batch = d.rows.size();
        for (int k = 0; k < n; ++k) {
          const std::size_t a = coarse[static_cast<std::size_t>(k)];
          starts.push_back(states[a]);
          ta.insert(ta.end(), batch, grid.knots[a]);
          tm.insert(tm.end(), batch, grid.knots[fine[2 * static_cast<std::size_t>(k) + 1]]);
          tb.insert(tb.end(), batch, grid.knots[coarse[static_cast<std::size_t>(k) + 1]]);
        }
        const auto c = tile(d.cond, batch, static_cast<std::size_t>(n));
        const Var loss = halving_loss(prev, prev_w, n_prev, res.model, n, num::vstack(starts), c,
                                      ta, tm, tb);
        num::backward(loss);
        num::adam_step(res.model.params(), plan.adam);
        curve.push_back(loss.value().item());
      } catch (const num::NumericError& e) {
        throw diverged("progressive round", it, e);
      }
    }
    res.round_curves.push_back(std::move(curve));
  }
  return res;
}

// --- sampling --------------------------------------------------------------

flow::Trajectory student_trajectory(const VelocityField& student, const Tensor& z,
                                    std::span<const int> cond, int n, const Schedule& teacher_grid,
                                    double w) {
  return flow::euler_solve(student, z, cond, student_schedule(teacher_grid, n), w, n);
}

Tensor student_sample(const VelocityField& student, const Tensor& z, std::span<const int> cond,
                      int n, const Schedule& teacher_grid, double w) {
  return student_trajectory(student, z, cond, n, teacher_grid, w).endpoint();
}

}  // namespace dsflow::distill
