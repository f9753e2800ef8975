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

// dsflow command-line entry point.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsflow/datasets.hpp"
#include "dsflow/distill.hpp"
#include "dsflow/eval/checkpoint.hpp"
#include "dsflow/eval/experiments.hpp"
#include "dsflow/eval/metrics.hpp"
#include "dsflow/eval/report.hpp"
#include "dsflow/flow.hpp"
#include "dsflow/models.hpp"

namespace fs = std::filesystem;
using namespace dsflow;
using num::Tensor;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

constexpr const char* kOutEnv = "DSFLOW_OUT_DIR";

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::string steps;
  std::optional<double> w;
  std::string format;
  std::string axes = "dual,weak-cfg,step-token";
  // count-params
  std::uint64_t layers = 16;
  std::uint64_t width = 512;
  std::uint64_t step_kinds = 3;
  std::uint64_t tokens = 1;
};

struct Context {
  eval::RunConfig rc;
  eval::DeskConfig desk;
  std::uint64_t seed = 0;
  fs::path out;
};

fs::path default_out_dir() {
  if (const char* env = std::getenv(kOutEnv); env && *env) return env;
  return "dsflow_out";
}

std::vector<int> parse_steps(const std::string& s) {
  eval::RunConfig tmp = eval::RunConfig::parse("steps = " + s, "--steps");
  return tmp.get_int_list("steps", {});
}

Context make_context(const Flags& f) {
  Context ctx;
  ctx.rc = f.config.empty() ? eval::RunConfig::parse("", "<defaults>")
                            : eval::RunConfig::load(f.config);
  if (f.seed) ctx.rc.set("seed", std::to_string(*f.seed));
  if (!f.mode.empty()) ctx.rc.set("rollout", f.mode);
  ctx.desk = eval::desk_config_from(ctx.rc);
  ctx.seed = static_cast<std::uint64_t>(ctx.rc.get_int("seed", 0));
  if (!f.out.empty()) {
    ctx.out = f.out;
  } else if (ctx.rc.has("out_dir")) {
    ctx.out = ctx.rc.get("out_dir", "");
  } else {
    ctx.out = default_out_dir();
  }
  return ctx;
}

fs::path checkpoint_arg(const Context& ctx, const std::string& key, const std::string& stem) {
  const fs::path p = ctx.rc.has(key) ? fs::path(ctx.rc.get(key, "")) : ctx.out / stem;
  const fs::path manifest = eval::manifest_path(p);
  if (!fs::exists(manifest)) {
    throw eval::ConfigError(key + " checkpoint not found: " + manifest.string());
  }
  return manifest;
}

model::VelocityModel load_model(const fs::path& manifest) {
  return std::move(eval::load_checkpoint(manifest).model);
}

void require_format(const std::string& fmt, std::initializer_list<const char*> allowed,
                    const char* command) {
  for (const char* a : allowed) {
    if (fmt == a) return;
  }
  std::string list;
  for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
  throw eval::ConfigError(std::string(command) + " supports --format " + list);
}

// --- subcommands -----------------------------------------------------------

int cmd_train_teacher(const Flags& f) {
  Context ctx = make_context(f);
  const data::Dataset train = eval::desk_train_set(ctx.desk, ctx.seed);
  const data::Dataset held = eval::desk_heldout_set(ctx.desk, ctx.seed);
  flow::TeacherTrainConfig tc = ctx.desk.teacher;
  tc.model.data_dim = train.dim();
  tc.model.num_conditions = train.num_conditions();
  tc.seed = ctx.seed;
  const model::VelocityModel untrained(tc.model, tc.seed);
  const flow::TeacherResult teacher = flow::train_teacher(tc, train);

  const auto grid = ctx.desk.plan.teacher_grid();
  const double w = f.w.value_or(ctx.desk.plan.w_teacher);
  const auto sw = [&](const model::VelocityField& m) {
    return eval::sliced_wasserstein(flow::euler_solve(m, held.z, held.cond, grid, w).endpoint(),
                                    held.x1, ctx.desk.projections, ctx.seed);
  };
  const fs::path manifest = eval::save_checkpoint(teacher.model, ctx.seed, ctx.out / "teacher");
  eval::MetricReport report("train-teacher");
  report.add_seed(ctx.seed);
  report.set_config_echo(ctx.rc.echo());
  report.set_scalar("sw.untrained", sw(untrained));
  report.set_scalar("sw.teacher", sw(teacher.model));
  report.set_scalar("params.teacher", static_cast<double>(teacher.model.total_params()));
  report.set_series("loss.teacher", teacher.loss_curve);
  report.write(ctx.out / "teacher_report.json");
  std::cout << "teacher checkpoint: " << manifest.string() << "\n"
            << "sliced-Wasserstein untrained " << *report.scalar("sw.untrained") << ", teacher "
            << *report.scalar("sw.teacher") << "\n";
  return kExitOk;
}

int cmd_distill(const Flags& f) {
  Context ctx = make_context(f);
  const fs::path teacher_path = checkpoint_arg(ctx, "teacher", "teacher");
  if (!f.steps.empty()) ctx.desk.plan.steps = parse_steps(f.steps);
  ctx.desk.plan.seed = ctx.seed;
  try {
    ctx.desk.plan.validate();
  } catch (const std::invalid_argument& e) {
    throw eval::ConfigError(e.what());
  }
  const model::VelocityModel teacher = load_model(teacher_path);
  const data::Dataset train = eval::desk_train_set(ctx.desk, ctx.seed);
  const distill::StudentResult res = distill::train_student(teacher, train, ctx.desk.plan);
  const fs::path manifest = eval::save_checkpoint(res.model, ctx.seed, ctx.out / "student");

  eval::MetricReport report("distill");
  report.add_seed(ctx.seed);
  report.set_config_echo(ctx.rc.echo());
  report.set_scalar("params.student", static_cast<double>(res.model.total_params()));
  report.set_scalar("teacher_forward_calls", static_cast<double>(res.teacher_forward_calls));
  report.set_series("loss.total", res.loss_curve);
  report.set_series("loss.endpoint", res.endpoint_curve);
  report.set_series("loss.velocity", res.velocity_curve);
  if (!res.reg_curve.empty()) report.set_series("loss.cfg_reg", res.reg_curve);
  report.set_note("rollout", distill::to_string(ctx.desk.plan.rollout));
  report.write(ctx.out / "distill_report.json");
  std::cout << "student checkpoint: " << manifest.string() << "\n"
            << "final loss " << res.loss_curve.back() << " after " << res.loss_curve.size()
            << " iterations\n";
  return kExitOk;
}

int cmd_sample(const Flags& f) {
  Context ctx = make_context(f);
  const std::string fmt = f.format.empty() ? "csv" : f.format;
  require_format(fmt, {"csv", "json"}, "sample");
  // A student checkpoint is preferred; without one the teacher is sampled.
  const bool use_student =
      ctx.rc.has("student") || fs::exists(eval::manifest_path(ctx.out / "student"));
  const fs::path path = use_student ? checkpoint_arg(ctx, "student", "student")
                                    : checkpoint_arg(ctx, "teacher", "teacher");
  const model::VelocityModel m = load_model(path);
  const data::Dataset held = eval::desk_heldout_set(ctx.desk, ctx.seed);
  const auto grid = ctx.desk.plan.teacher_grid();
  const std::vector<int> steps = f.steps.empty() ? std::vector<int>{1} : parse_steps(f.steps);
  if (steps.size() != 1) throw eval::ConfigError("sample takes a single --steps value");

  const flow::Trajectory traj =
      use_student ? distill::student_trajectory(m, held.z, held.cond, steps[0], grid,
                                                f.w.value_or(ctx.desk.plan.w_student))
                  : flow::euler_solve(m, held.z, held.cond, grid,
                                      f.w.value_or(ctx.desk.plan.w_teacher));
  const fs::path out = ctx.out / (std::string("samples.") + fmt);
  if (fmt == "csv") {
    std::ostringstream os;
    flow::write_trajectory_csv(traj, os);
    eval::write_text(out, os.str());
  } else {
    nlohmann::ordered_json j;
    j["checkpoint"] = path.string();
    j["w"] = traj.w;
    j["knots"] = traj.schedule.knots;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    const Tensor& x = traj.endpoint();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::vector<double> r(x.cols());
      for (std::size_t c = 0; c < x.cols(); ++c) r[c] = x.at(i, c);
      rows.push_back({{"cond", traj.cond[i]}, {"x", r}});
    }
    j["samples"] = std::move(rows);
    eval::write_text(out, j.dump(2) + "\n");
  }
  std::cout << "wrote " << held.size() << " samples to " << out.string() << "\n";
  return kExitOk;
}

int cmd_eval(const Flags& f) {
  Context ctx = make_context(f);
  const std::string fmt = f.format.empty() ? "json" : f.format;
  require_format(fmt, {"json", "csv", "svg"}, "eval");
  const model::VelocityModel teacher = load_model(checkpoint_arg(ctx, "teacher", "teacher"));
  const model::VelocityModel student = load_model(checkpoint_arg(ctx, "student", "student"));
  const data::Dataset held = eval::desk_heldout_set(ctx.desk, ctx.seed);
  const auto& plan = ctx.desk.plan;
  const auto grid = plan.teacher_grid();
  const double w = f.w.value_or(plan.w_student);
  const std::vector<int> steps = f.steps.empty() ? student.config().step_counts
                                                 : parse_steps(f.steps);
  const auto sw = [&](const Tensor& x) {
    return eval::sliced_wasserstein(x, held.x1, ctx.desk.projections, ctx.seed);
  };

  eval::MetricReport report("eval");
  report.add_seed(ctx.seed);
  report.set_config_echo(ctx.rc.echo());
  const Tensor tx = flow::euler_solve(teacher, held.z, held.cond, grid, plan.w_teacher).endpoint();
  report.set_scalar("sw.teacher", sw(tx));
  const auto f_teacher = eval::alignment_feature(tx, ctx.desk.data.kind);
  const auto f_data = eval::alignment_feature(held.x1, ctx.desk.data.kind);
  const double hi = 2.0 * *std::max_element(f_data.begin(), f_data.end());
  std::vector<std::pair<std::string, eval::Histogram>> hists;
  eval::Histogram ht(0.0, hi);
  ht.add(f_teacher);
  hists.emplace_back("teacher", ht);
  for (int n : steps) {
    const Tensor sx = distill::student_sample(student, held.z, held.cond, n, grid, w);
    const std::string tag = "n" + std::to_string(n);
    report.set_scalar("sw.student." + tag, sw(sx));
    const auto fs_ = eval::alignment_feature(sx, ctx.desk.data.kind);
    report.set_scalar("ks.student." + tag, eval::ks_statistic(f_teacher, fs_));
    report.set_scalar("endpoint_mse.student." + tag,
                      eval::endpoint_mse(student, teacher, held.z, held.cond, n, w, grid,
                                         plan.w_teacher));
    report.set_scalar("nfe.student." + tag, static_cast<double>(eval::nfe_for(n, w)));
    eval::Histogram h(0.0, hi);
    h.add(fs_);
    report.set_histogram("feature.student." + tag, h);
    hists.emplace_back("student " + tag, h);
  }
  report.set_histogram("feature.teacher", ht);
  report.set_scalar("nfe.teacher", static_cast<double>(eval::nfe_for(grid.steps(), plan.w_teacher)));
  report.set_scalar("params.teacher", static_cast<double>(teacher.total_params()));
  report.set_scalar("params.student", static_cast<double>(student.total_params()));

  fs::path out;
  if (fmt == "json") {
    out = ctx.out / "eval_report.json";
    report.write(out);
  } else if (fmt == "csv") {
    out = ctx.out / "eval_scalars.csv";
    std::ostringstream os;
    os << "metric,value\n";
    for (const auto& [k, v] : report.scalars()) os << k << ',' << eval::format_double(v) << '\n';
    eval::write_text(out, os.str());
  } else {
    out = ctx.out / "eval_histograms.svg";
    eval::write_text(out, eval::svg_histograms(hists, "feature histograms"));
  }
  for (const auto& [k, v] : report.scalars()) std::cout << k << " = " << v << "\n";
  std::cout << "wrote " << out.string() << "\n";
  return kExitOk;
}

int cmd_ablate(const Flags& f) {
  Context ctx = make_context(f);
  std::vector<eval::Axis> axes;
  {
    std::istringstream in(f.axes);
    std::string item;
    try {
      while (std::getline(in, item, ',')) {
        if (!item.empty()) axes.push_back(eval::axis_from_string(item));
      }
    } catch (const std::invalid_argument& e) {
      throw eval::ConfigError(e.what());
    }
  }
  std::vector<std::uint64_t> seeds;
  for (int s : ctx.rc.get_int_list("seeds", {static_cast<int>(ctx.seed)})) {
    if (s < 0) throw eval::ConfigError("seeds must be non-negative");
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  const auto rows = eval::ablate(ctx.desk, axes, seeds, &std::cerr);
  std::ostringstream os;
  eval::write_ablation_csv(rows, os);
  eval::write_text(ctx.out / "ablation.csv", os.str());
  std::cout << os.str();
  return kExitOk;
}

int cmd_cfg_sweep(const Flags& f) {
  Context ctx = make_context(f);
  const model::VelocityModel student = load_model(checkpoint_arg(ctx, "student", "student"));
  const data::Dataset held = eval::desk_heldout_set(ctx.desk, ctx.seed);
  const std::vector<int> steps = f.steps.empty() ? std::vector<int>{1} : parse_steps(f.steps);
  if (steps.size() != 1) throw eval::ConfigError("cfg-sweep takes a single --steps value");
  const auto& weights = ctx.desk.cfg_weights;
  const auto curve = eval::cfg_sweep(student, held.z, held.cond, held.x1, steps[0],
                                     ctx.desk.plan.teacher_grid(), weights,
                                     ctx.desk.projections, ctx.seed);
  std::ostringstream csv;
  eval::write_cfg_sweep_csv(weights, curve, csv);
  eval::write_text(ctx.out / "cfg_sweep.csv", csv.str());
  const eval::Series s{std::to_string(steps[0]) + "-step student", weights, curve};
  eval::write_text(ctx.out / "cfg_sweep.svg",
                   eval::svg_line_plot({s}, "guidance sweep", "w", "sliced Wasserstein"));
  std::cout << csv.str();
  return kExitOk;
}

int cmd_bench(const Flags& f) {
  Context ctx = make_context(f);
  const model::VelocityModel teacher = load_model(checkpoint_arg(ctx, "teacher", "teacher"));
  const model::VelocityModel student = load_model(checkpoint_arg(ctx, "student", "student"));
  const data::Dataset held = eval::desk_heldout_set(ctx.desk, ctx.seed);
  const auto& plan = ctx.desk.plan;
  const auto grid = plan.teacher_grid();
  const int n = f.steps.empty() ? 1 : parse_steps(f.steps).at(0);
  const double w = f.w.value_or(plan.w_student);
  const auto t = eval::latency_bench(teacher, held.z, held.cond, grid, plan.w_teacher,
                                     std::nullopt, 9);
  const auto s = eval::latency_bench(student, held.z, held.cond,
                                     distill::student_schedule(grid, n), w, n, 9);
  eval::MetricReport report("bench");
  report.add_seed(ctx.seed);
  report.set_config_echo(ctx.rc.echo());
  report.set_scalar("seconds_per_sample.teacher", t.seconds_per_sample);
  report.set_scalar("seconds_per_sample.student", s.seconds_per_sample);
  report.set_scalar("nfe.teacher", static_cast<double>(t.nfe));
  report.set_scalar("nfe.student", static_cast<double>(s.nfe));
  report.set_note("analogy", "wall-clock seconds per generated sample stand in for a "
                             "real-time factor; toy samples have no audio duration");
  report.write(ctx.out / "bench_report.json");
  std::cout << "teacher  " << grid.steps() << "-step: " << t.seconds_per_sample
            << " s/sample, NFE " << t.nfe << "\n"
            << "student  " << n << "-step: " << s.seconds_per_sample << " s/sample, NFE "
            << s.nfe << "\n"
            << "(median wall-clock per sample; the toy analogue of a real-time factor)\n";
  return kExitOk;
}

int cmd_check_grads(const Flags& f) {
  const std::uint64_t seed = f.seed.value_or(0);
  const eval::GradSuite g = eval::gradient_suite(seed);
  constexpr double kTol = 1e-4;
  std::cout << "velocity loss   max rel error " << g.velocity_rel_error << "\n"
            << "dual loss       max rel error " << g.dual_rel_error << "\n"
            << "cfg penalty     max rel error " << g.reg_rel_error << "\n"
            << "cond-branch gradient through stop-gradient " << g.cond_branch_grad << "\n";
  const bool ok = g.velocity_rel_error < kTol && g.dual_rel_error < kTol &&
                  g.reg_rel_error < kTol && g.cond_branch_grad == 0.0;
  std::cout << (ok ? "gradients ok\n" : "gradient check FAILED\n");
  return ok ? kExitOk : kExitNumeric;
}

int cmd_count_params(const Flags& f) {
  const auto c = model::count_conditioning_params(f.step_kinds, f.layers, f.width, f.tokens);
  const auto prior = model::uniform_prior(f.step_kinds);
  std::vector<int> steps(f.step_kinds);
  for (std::size_t i = 0; i < steps.size(); ++i) steps[i] = 1 << i;
  const double bits = model::step_entropy_bits(steps, prior);
  const auto bound = model::entropy_lower_bound_params(f.step_kinds, f.width);
  const auto bound_exact = model::entropy_lower_bound_params_exact(f.step_kinds, f.width);
  if (f.format == "json") {
    nlohmann::ordered_json j;
    j["layers"] = f.layers;
    j["width"] = f.width;
    j["step_kinds"] = f.step_kinds;
    j["tokens_per_step"] = f.tokens;
    j["token_params"] = c.token;
    j["adaln_params"] = c.adaln;
    j["ratio"] = c.ratio;
    j["ratio_rounded"] = c.ratio_rounded;
    j["step_entropy_bits"] = bits;
    j["entropy_lower_bound"] = bound;
    j["entropy_lower_bound_exact"] = bound_exact;
    std::cout << j.dump(2) << "\n";
    return kExitOk;
  }
  if (!f.format.empty() && f.format != "csv") {
    throw eval::ConfigError("count-params supports --format csv or json");
  }
  std::cout << "token parameters:  " << c.token << "\n"
            << "adaLN parameters:  " << c.adaln << "\n"
            << "ratio:             " << c.ratio_rounded << " (" << c.ratio << ")\n"
            << "step entropy bits: " << bits << "\n"
            << "entropy lower bound: " << bound << " (exact log2: " << bound_exact << ")\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dsflow: desk-scale flow-matching distillation"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "key = value config file");
  app.add_option("--seed", f.seed, "run seed");
  app.add_option("--out", f.out, std::string("output directory (default $") + kOutEnv +
                                     " or ./dsflow_out)");
  app.add_option("--mode", f.mode, "teacher-forced or free-rollout")
      ->check(CLI::IsMember({"teacher-forced", "free-rollout"}));
  app.add_option("--steps", f.steps, "student step count(s), e.g. 1 or 1,2,4");
  app.add_option("--w", f.w, "guidance weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
  app.add_option("--format", f.format, "csv, json or svg")
      ->check(CLI::IsMember({"csv", "json", "svg"}));

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const Flags&);
  };
  const Sub subs[] = {
      {"train-teacher", "train the many-step teacher", cmd_train_teacher},
      {"distill", "distill a few-step student from a teacher checkpoint", cmd_distill},
      {"sample", "sample from a student (or teacher) checkpoint", cmd_sample},
      {"eval", "distribution metrics of a student against its teacher", cmd_eval},
      {"ablate", "train every component combination over the configured seeds", cmd_ablate},
      {"cfg-sweep", "student distance across guidance weights", cmd_cfg_sweep},
      {"bench", "per-sample wall-clock and NFE of teacher and student", cmd_bench},
      {"check-grads", "finite-difference checks of the distillation losses", cmd_check_grads},
      {"count-params", "conditioning parameter counts and entropy bound", cmd_count_params},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Flags&)>> handlers;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    if (std::string(s.name) == "ablate") {
      sub->add_option("--axes", f.axes, "comma-separated subset of dual,weak-cfg,step-token");
    }
    if (std::string(s.name) == "count-params") {
      sub->add_option("--layers", f.layers, "transformer layers L");
      sub->add_option("--width", f.width, "hidden width D");
      sub->add_option("--step-kinds", f.step_kinds, "number of supported step counts K");
      sub->add_option("--tokens", f.tokens, "tokens per step m");
    }
    handlers.emplace_back(sub, s.run);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    for (const auto& [sub, run] : handlers) {
      if (sub->parsed()) return run(f);
    }
  } catch (const num::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const flow::SolverError& e) {
    std::cerr << "solver failure at step " << e.step() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const flow::TrainingError& e) {
    std::cerr << "training failure at step " << e.step() << ": " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
