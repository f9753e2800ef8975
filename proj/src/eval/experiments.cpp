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

#include "dsflow/eval/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dsflow/rng.hpp"

namespace dsflow::eval {
namespace {

// Stream ids for everything derived from a run seed.
constexpr std::uint64_t kTrainStream = 101;
constexpr std::uint64_t kHeldoutStream = 102;
constexpr std::uint64_t kTeacherStream = 103;
constexpr std::uint64_t kDistillStream = 104;
constexpr std::uint64_t kProjectionStream = 105;
constexpr std::uint64_t kGradStream = 106;

void note(std::ostream* log, const std::string& line) {
  if (log) *log << line << '\n' << std::flush;
}

data::Dataset load_csv_split(const DeskConfig& cfg, bool heldout) {
  data::CsvOptions opts;
  opts.data_dim = cfg.data.data_dim;
  opts.seed = cfg.data.seed;
  const data::Dataset all = data::load_csv(cfg.data_path, opts);
  if (all.size() <= cfg.heldout_size) {
    throw data::DatasetError(cfg.data_path + " has " + std::to_string(all.size()) +
                             " rows, not enough for a held-out set of " +
                             std::to_string(cfg.heldout_size));
  }
  const std::size_t split = all.size() - cfg.heldout_size;
  std::vector<std::size_t> rows(heldout ? cfg.heldout_size : split);
  std::iota(rows.begin(), rows.end(), heldout ? split : 0);
  return all.select(rows);
}

Tensor teacher_samples(const model::VelocityField& teacher, const data::Dataset& held,
                       const distill::DistillPlan& plan) {
  return flow::euler_solve(teacher, held.z, held.cond, plan.teacher_grid(), plan.w_teacher)
      .endpoint();
}

Histogram feature_histogram(std::span<const double> values, double hi) {
  Histogram h(0.0, hi);
  h.add(values);
  return h;
}

}  // namespace

DeskConfig desk_preset() {
  DeskConfig cfg;
  cfg.data.kind = data::DatasetKind::kGaussMixture;
  cfg.data.num_conditions = 4;
  cfg.data.size = 5000;
  cfg.heldout_size = 2000;
  cfg.teacher.model.layers = 4;
  cfg.teacher.model.width = 64;
  cfg.teacher.epochs = 100;
  cfg.teacher.batch_size = 128;
  cfg.teacher.p_uncond = 0.5;
  cfg.plan.iters = 6000;
  cfg.plan.p_uncond = 0.5;
  cfg.plan.cache_targets = true;
  cfg.progressive_iters = 2000;
  return cfg;
}

DeskConfig smoke_preset() {
  DeskConfig cfg = desk_preset();
  cfg.data.size = 400;
  cfg.heldout_size = 300;
  cfg.teacher.model.layers = 2;
  cfg.teacher.model.width = 16;
  cfg.teacher.epochs = 3;
  cfg.teacher.batch_size = 64;
  cfg.plan.iters = 30;
  cfg.plan.batch_size = 16;
  cfg.progressive_iters = 10;
  cfg.projections = 64;
  return cfg;
}

DeskConfig desk_config_from(const RunConfig& rc) {
  const std::string preset = rc.get("preset", "desk");
  DeskConfig cfg;
  if (preset == "desk") {
    cfg = desk_preset();
  } else if (preset == "smoke") {
    cfg = smoke_preset();
  } else {
    throw ConfigError("unknown preset '" + preset + "' (expected desk or smoke)");
  }
  try {
    cfg.data.kind = data::dataset_kind_from_string(rc.get("dataset", to_string(cfg.data.kind)));
    cfg.plan.teacher_schedule = flow::schedule_kind_from_string(
        rc.get("teacher_schedule", flow::to_string(cfg.plan.teacher_schedule)));
    cfg.plan.rollout =
        distill::rollout_from_string(rc.get("rollout", distill::to_string(cfg.plan.rollout)));
    cfg.plan.midpoint =
        distill::midpoint_from_string(rc.get("midpoint", distill::to_string(cfg.plan.midpoint)));
    cfg.plan.student_mode = model::conditioning_from_string(
        rc.get("student_mode", model::to_string(cfg.plan.student_mode)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto as_size = [&](const std::string& key, std::size_t fallback) {
    const auto v = rc.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError("key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
  };
  cfg.data.data_dim = as_size("data_dim", cfg.data.data_dim);
  cfg.data.num_conditions = as_size("conditions", cfg.data.num_conditions);
  cfg.data.size = as_size("size", cfg.data.size);
  cfg.heldout_size = as_size("heldout_size", cfg.heldout_size);
  cfg.teacher.model.layers = as_size("layers", cfg.teacher.model.layers);
  cfg.teacher.model.width = as_size("width", cfg.teacher.model.width);
  cfg.teacher.epochs = as_size("teacher_epochs", cfg.teacher.epochs);
  cfg.teacher.batch_size = as_size("teacher_batch", cfg.teacher.batch_size);
  cfg.teacher.p_uncond = rc.get_double("teacher_p_uncond", cfg.teacher.p_uncond);

  auto& p = cfg.plan;
  p.steps = rc.get_int_list("steps", p.steps);
  p.alpha = rc.get_double("alpha", p.alpha);
  p.lambda = rc.get_double("lambda", p.lambda);
  p.cfg_reg = rc.get_bool("cfg_reg", p.cfg_reg);
  p.w_teacher = rc.get_double("w_teacher", p.w_teacher);
  p.w_student = rc.get_double("w_student", p.w_student);
  p.p_uncond = rc.get_double("p_uncond", p.p_uncond);
  p.teacher_steps = as_size("teacher_steps", p.teacher_steps);
  p.tokens_per_step = as_size("tokens_per_step", p.tokens_per_step);
  p.init_from_teacher = rc.get_bool("init_from_teacher", p.init_from_teacher);
  p.cache_targets = rc.get_bool("cache_targets", p.cache_targets);
  p.batch_size = as_size("batch_size", p.batch_size);
  p.iters = as_size("distill_iters", p.iters);
  p.adam.lr = rc.get_double("lr", p.adam.lr);
  p.adam.weight_decay = rc.get_double("weight_decay", p.adam.weight_decay);
  cfg.teacher.adam = p.adam;
  cfg.progressive_iters = as_size("progressive_iters", cfg.progressive_iters);
  cfg.projections = as_size("projections", cfg.projections);
  cfg.cfg_weights = rc.get_double_list("cfg_weights", cfg.cfg_weights);
  cfg.data_path = rc.get("data_path", cfg.data_path);
  cfg.baselines = rc.get_bool("baselines", cfg.baselines);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (double w : cfg.cfg_weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("cfg_weights must lie in [0, 1]");
  }
  return cfg;
}

data::Dataset desk_train_set(const DeskConfig& cfg, std::uint64_t seed) {
  if (cfg.data.kind == data::DatasetKind::kCsv) return load_csv_split(cfg, false);
  data::DatasetSpec spec = cfg.data;
  spec.seed = rng::mix(seed, kTrainStream);
  return data::generate(spec);
}

data::Dataset desk_heldout_set(const DeskConfig& cfg, std::uint64_t seed) {
  if (cfg.data.kind == data::DatasetKind::kCsv) return load_csv_split(cfg, true);
  data::DatasetSpec spec = cfg.data;
  spec.size = cfg.heldout_size;
  spec.seed = rng::mix(seed, kHeldoutStream);
  return data::generate(spec);
}

std::vector<double> alignment_feature(const Tensor& samples, data::DatasetKind kind) {
  if (kind == data::DatasetKind::kToySequence) {
    return frame_amplitude_feature(samples, data::kSequenceFrames, data::kSequenceChannels);
  }
  return radial_feature(samples);
}

std::vector<double> cfg_sweep(const model::VelocityField& student, const Tensor& z,
                              std::span<const int> cond, const Tensor& reference, int n,
                              const flow::Schedule& teacher_grid,
                              std::span<const double> weights, std::size_t projections,
                              std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(weights.size());
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("sweep weights must lie in [0, 1]");
    const Tensor x = distill::student_sample(student, z, cond, n, teacher_grid, w);
    out.push_back(sliced_wasserstein(x, reference, projections, seed));
  }
  return out;
}

void write_cfg_sweep_csv(std::span<const double> weights, std::span<const double> distances,
                         std::ostream& out) {
  if (weights.size() != distances.size()) {
    throw std::invalid_argument("weights and distances differ in length");
  }
  out << "w,sliced_wasserstein\n";
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out << format_double(weights[i]) << ',' << format_double(distances[i]) << '\n';
  }
}

SeedRun run_desk_seed(const DeskConfig& cfg, std::uint64_t seed, const std::string& config_echo,
                      std::ostream* log) {
  const data::Dataset train = desk_train_set(cfg, seed);
  const data::Dataset held = desk_heldout_set(cfg, seed);
  const std::uint64_t proj_seed = rng::mix(seed, kProjectionStream);
  const auto sw = [&](const Tensor& x) {
    return sliced_wasserstein(x, held.x1, cfg.projections, proj_seed);
  };

  flow::TeacherTrainConfig tc = cfg.teacher;
  tc.model.data_dim = train.dim();
  tc.model.num_conditions = train.num_conditions();
  tc.seed = rng::mix(seed, kTeacherStream);
  distill::DistillPlan plan = cfg.plan;
  plan.seed = rng::mix(seed, kDistillStream);
  const flow::Schedule grid = plan.teacher_grid();

  SeedOutcome o;
  o.seed = seed;
  const model::VelocityModel untrained(tc.model, tc.seed);
  o.sw_untrained = sw(teacher_samples(untrained, held, plan));

  note(log, "seed " + std::to_string(seed) + ": training teacher");
  flow::TeacherResult teacher = flow::train_teacher(tc, train);
  const Tensor teacher_x = teacher_samples(teacher.model, held, plan);
  o.sw_teacher = sw(teacher_x);
  o.teacher_params = teacher.model.total_params();

  note(log, "seed " + std::to_string(seed) + ": distilling");
  distill::StudentResult student = distill::train_student(teacher.model, train, plan);
  o.student_params = student.model.total_params();
  Tensor student_x1;
  for (int n : plan.steps) {
    const Tensor x = distill::student_sample(student.model, held.z, held.cond, n, grid,
                                             plan.w_student);
    o.sw_student[n] = sw(x);
    if (n == 1) student_x1 = x;
  }
  const bool has_one_step = o.sw_student.count(1) != 0;
  if (has_one_step) {
    o.cfg_curve = cfg_sweep(student.model, held.z, held.cond, held.x1, 1, grid, cfg.cfg_weights,
                            cfg.projections, proj_seed);
    o.endpoint_mse = endpoint_mse(student.model, teacher.model, held.z, held.cond, 1,
                                  plan.w_student, grid, plan.w_teacher);
  }

  const auto kind = cfg.data.kind;
  const std::vector<double> f_teacher = alignment_feature(teacher_x, kind);
  const std::vector<double> f_data = alignment_feature(held.x1, kind);
  const double hist_hi = 2.0 * *std::max_element(f_data.begin(), f_data.end());
  MetricReport report("desk-seed-" + std::to_string(seed));
  report.set_histogram("feature.teacher", feature_histogram(f_teacher, hist_hi));

  if (cfg.baselines && has_one_step) {
    std::vector<double> f_student = alignment_feature(student_x1, kind);
    o.ks_dsflow = ks_statistic(f_teacher, f_student);
    report.set_histogram("feature.dsflow", feature_histogram(f_student, hist_hi));

    note(log, "seed " + std::to_string(seed) + ": dual-off arm");
    distill::DistillPlan off = plan;
    off.alpha = 1.0;
    const auto dual_off = distill::train_student(teacher.model, train, off);
    o.sw_dual_off = sw(distill::student_sample(dual_off.model, held.z, held.cond, 1, grid,
                                               plan.w_student));

    note(log, "seed " + std::to_string(seed) + ": endpoint-only arm");
    const auto endpoint = distill::train_endpoint_baseline(teacher.model, train, plan);
    const Tensor endpoint_x =
        distill::student_sample(endpoint.model, held.z, held.cond, 1, grid, plan.w_student);
    o.sw_endpoint = sw(endpoint_x);
    const std::vector<double> f_endpoint = alignment_feature(endpoint_x, kind);
    o.ks_endpoint = ks_statistic(f_teacher, f_endpoint);
    report.set_histogram("feature.endpoint_only", feature_histogram(f_endpoint, hist_hi));

    note(log, "seed " + std::to_string(seed) + ": progressive arm");
    const auto prog = distill::progressive_distill(teacher.model, train, plan,
                                                   distill::ProgressiveConfig{cfg.progressive_iters});
    o.sw_progressive = sw(distill::student_sample(prog.model, held.z, held.cond, 1, grid,
                                                  plan.w_student));
    report.set_note("progressive.schedule", prog.schedule_str);
  }

  report.add_seed(seed);
  report.set_config_echo(config_echo);
  report.set_scalar("sw.untrained", o.sw_untrained);
  report.set_scalar("sw.teacher", o.sw_teacher);
  for (const auto& [n, d] : o.sw_student) report.set_scalar("sw.dsflow.n" + std::to_string(n), d);
  if (o.sw_dual_off) report.set_scalar("sw.dual_off.n1", *o.sw_dual_off);
  if (o.sw_endpoint) report.set_scalar("sw.endpoint_only.n1", *o.sw_endpoint);
  if (o.sw_progressive) report.set_scalar("sw.progressive.n1", *o.sw_progressive);
  if (o.ks_dsflow) report.set_scalar("ks.dsflow.n1", *o.ks_dsflow);
  if (o.ks_endpoint) report.set_scalar("ks.endpoint_only.n1", *o.ks_endpoint);
  if (has_one_step) report.set_scalar("endpoint_mse.dsflow.n1", o.endpoint_mse);
  report.set_scalar("params.teacher", static_cast<double>(o.teacher_params));
  report.set_scalar("params.student", static_cast<double>(o.student_params));
  report.set_scalar("nfe.teacher", static_cast<double>(nfe_for(grid.steps(), plan.w_teacher)));
  report.set_scalar("nfe.dsflow.n1", static_cast<double>(nfe_for(1, plan.w_student)));
  report.set_series("cfg_sweep.weights", cfg.cfg_weights);
  if (!o.cfg_curve.empty()) report.set_series("cfg_sweep.sw", o.cfg_curve);
  report.set_series("loss.teacher", teacher.loss_curve);
  report.set_series("loss.dsflow", student.loss_curve);
  report.set_note("wall_clock", "timings are reported by the bench subcommand only, so that "
                                "reruns of the same config and seed give identical reports");

  return SeedRun{o, std::move(report), std::move(teacher.model), std::move(student.model)};
}

std::string to_string(Axis axis) {
  switch (axis) {
    case Axis::kDual: return "dual";
    case Axis::kWeakCfg: return "weak-cfg";
    case Axis::kStepToken: return "step-token";
  }
  return "?";
}

Axis axis_from_string(const std::string& s) {
  if (s == "dual") return Axis::kDual;
  if (s == "weak-cfg") return Axis::kWeakCfg;
  if (s == "step-token") return Axis::kStepToken;
  throw std::invalid_argument("unknown ablation axis '" + s +
                              "' (expected dual, weak-cfg or step-token)");
}

distill::DistillPlan ablation_plan(const distill::DistillPlan& base, bool dual, bool weak_cfg,
                                   bool step_token) {
  distill::DistillPlan p = base;
  if (!dual) p.alpha = 1.0;
  p.cfg_reg = weak_cfg;
  p.student_mode = step_token ? model::Conditioning::kStepToken : model::Conditioning::kAdaLN;
  return p;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<AblationRow> ablate(const DeskConfig& cfg, const std::vector<Axis>& axes,
                                const std::vector<std::uint64_t>& seeds, std::ostream* log) {
  for (std::size_t i = 0; i < axes.size(); ++i) {
    for (std::size_t j = i + 1; j < axes.size(); ++j) {
      if (axes[i] == axes[j]) throw std::invalid_argument("ablation axis listed twice");
    }
  }
  if (seeds.empty()) throw std::invalid_argument("ablation needs at least one seed");
  const std::size_t cells = std::size_t{1} << axes.size();
  std::vector<AblationRow> rows(cells);
  for (std::size_t mask = 0; mask < cells; ++mask) {
    for (std::size_t a = 0; a < axes.size(); ++a) {
      const bool on = (mask >> (axes.size() - 1 - a)) & 1;
      switch (axes[a]) {
        case Axis::kDual: rows[mask].dual = on; break;
        case Axis::kWeakCfg: rows[mask].weak_cfg = on; break;
        case Axis::kStepToken: rows[mask].step_token = on; break;
      }
    }
  }
  for (std::uint64_t seed : seeds) {
    const data::Dataset train = desk_train_set(cfg, seed);
    const data::Dataset held = desk_heldout_set(cfg, seed);
    flow::TeacherTrainConfig tc = cfg.teacher;
    tc.model.data_dim = train.dim();
    tc.model.num_conditions = train.num_conditions();
    tc.seed = rng::mix(seed, kTeacherStream);
    note(log, "ablate seed " + std::to_string(seed) + ": training teacher");
    const flow::TeacherResult teacher = flow::train_teacher(tc, train);
    for (auto& row : rows) {
      distill::DistillPlan plan = ablation_plan(cfg.plan, row.dual, row.weak_cfg, row.step_token);
      plan.seed = rng::mix(seed, kDistillStream);
      if (std::find(plan.steps.begin(), plan.steps.end(), 1) == plan.steps.end()) {
        throw std::invalid_argument("ablation compares one-step students; steps must include 1");
      }
      note(log, "ablate seed " + std::to_string(seed) + ": dual=" + std::to_string(row.dual) +
                    " weak-cfg=" + std::to_string(row.weak_cfg) +
                    " step-token=" + std::to_string(row.step_token));
      const auto res = distill::train_student(teacher.model, train, plan);
      row.student_params = res.model.total_params();
      const Tensor x = distill::student_sample(res.model, held.z, held.cond, 1,
                                               plan.teacher_grid(), plan.w_student);
      row.distances.push_back(
          sliced_wasserstein(x, held.x1, cfg.projections, rng::mix(seed, kProjectionStream)));
    }
  }
  for (auto& row : rows) row.median = median(row.distances);
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, std::ostream& out) {
  out << "dual,weak_cfg,step_token,student_params,median_sw,seeds\n";
  for (const auto& r : rows) {
    out << (r.dual ? "on" : "off") << ',' << (r.weak_cfg ? "on" : "off") << ','
        << (r.step_token ? "on" : "off") << ',' << r.student_params << ','
        << format_double(r.median) << ',' << r.distances.size() << '\n';
  }
}

GradSuite gradient_suite(std::uint64_t seed) {
  data::DatasetSpec spec;
  spec.size = 6;
  spec.seed = rng::mix(seed, kGradStream);
  const data::Dataset d = data::generate(spec);

  model::ModelConfig tcfg;
  tcfg.layers = 2;
  tcfg.width = 8;
  tcfg.num_conditions = spec.num_conditions;
  const model::VelocityModel teacher(tcfg, rng::mix(seed, 1));

  distill::DistillPlan plan;
  plan.teacher_steps = 4;
  plan.steps = {1, 2};
  model::VelocityModel student(distill::student_config(tcfg, plan), rng::mix(seed, 2));
  // Zero-initialized maps would make some checks trivially exact.
  std::mt19937_64 gen = rng::stream(seed, kGradStream);
  std::normal_distribution<double> normal(0.0, 0.3);
  for (auto& e : student.params().entries()) {
    for (auto& v : e.var.node()->value.storage()) v += normal(gen);
  }

  const int n_k = 2;
  const auto targets = distill::teacher_targets(teacher, d.z, d.cond, plan, n_k);
  auto& store = student.params();
  GradSuite out;
  out.velocity_rel_error =
      num::finite_diff_check([&] { return distill::velocity_loss(student, targets, d.cond, n_k); },
                             store)
          .max_rel_error;
  out.dual_rel_error =
      num::finite_diff_check(
          [&] { return distill::dual_loss(student, targets, d.cond, n_k, plan.alpha); }, store)
          .max_rel_error;

  std::vector<double> t(d.size());
  Tensor x(num::Shape{d.size(), d.dim()});
  for (std::size_t i = 0; i < d.size(); ++i) {
    t[i] = targets[0].t_mf;
    for (std::size_t j = 0; j < d.dim(); ++j) x.at(i, j) = targets[0].x_mf.at(i, j);
  }
  const num::Var xv = num::constant(x);
  // Under stop-gradient the conditional prediction is a constant of the
  // penalty, so the finite differences hold it fixed as well.
  Tensor v_cond_value;
  {
    num::NoGradGuard ng;
    v_cond_value = student.velocity(xv, t, d.cond, n_k).value();
  }
  const num::Var frozen = num::constant(v_cond_value);
  out.reg_rel_error =
      num::finite_diff_check(
          [&] { return distill::cfg_regularizer(student, xv, t, frozen, n_k, 1.0); }, store)
          .max_rel_error;

  // Only the unconditional path may receive gradient: the conditional
  // prediction node and every non-null condition row stay at zero.
  store.zero_grad();
  const num::Var v_cond = student.velocity(xv, t, d.cond, n_k);
  const num::Var reg = distill::cfg_regularizer(student, xv, t, v_cond, n_k, 1.0);
  num::backward(reg);
  const Tensor v_cond_grad = v_cond.grad();
  for (double g : v_cond_grad.data()) out.cond_branch_grad = std::max(out.cond_branch_grad, std::abs(g));
  const Tensor table_grad = store.get("cond.table").grad();
  for (std::size_t r = 0; r < spec.num_conditions; ++r) {
    for (std::size_t c = 0; c < table_grad.cols(); ++c) {
      out.cond_branch_grad = std::max(out.cond_branch_grad, std::abs(table_grad.at(r, c)));
    }
  }
  store.zero_grad();
  return out;
}

}  // namespace dsflow::eval
