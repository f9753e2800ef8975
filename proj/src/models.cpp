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

#include "dsflow/models.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "dsflow/rng.hpp"

namespace dsflow::model {
namespace {

constexpr std::uint64_t kInitStream = 11;

Tensor gaussian(num::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = stddev * n01(rng);
  return t;
}

std::string layer_name(const char* prefix, std::size_t i, const char* suffix) {
  return std::string(prefix) + std::to_string(i) + "." + suffix;
}

}  // namespace

std::string to_string(Conditioning mode) {
  switch (mode) {
    case Conditioning::kAdaLN: return "adaln";
    case Conditioning::kStepToken: return "step-token";
    case Conditioning::kPlain: return "plain";
  }
  return "unknown";
}

Conditioning conditioning_from_string(const std::string& s) {
  if (s == "adaln") return Conditioning::kAdaLN;
  if (s == "step-token") return Conditioning::kStepToken;
  if (s == "plain") return Conditioning::kPlain;
  throw ModelError("unknown conditioning mode: " + s);
}

void ModelConfig::validate() const {
  if (layers < 1) throw ModelError("layers must be >= 1");
  if (width < 1) throw ModelError("width must be >= 1");
  if (data_dim < 1) throw ModelError("data_dim must be >= 1");
  if (num_conditions < 1) throw ModelError("num_conditions must be >= 1");
  if (tokens_per_step < 1) throw ModelError("tokens_per_step must be >= 1");
  if (mode == Conditioning::kStepToken && step_counts.empty()) {
    throw ModelError("step-token conditioning needs at least one step count");
  }
  std::set<int> seen;
  for (int s : step_counts) {
    if (s < 1) throw ModelError("step counts must be positive");
    if (!seen.insert(s).second) throw ModelError("duplicate step count " + std::to_string(s));
  }
}

Tensor time_embedding(std::span<const double> t, std::size_t width) {
  const std::size_t half = width / 2;
  Tensor out({t.size(), width});
  for (std::size_t j = 0; j < half; ++j) {
    const double freq =
        half > 1 ? std::pow(1000.0, static_cast<double>(j) / static_cast<double>(half - 1)) : 1.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      out.at(i, j) = std::sin(freq * t[i]);
      out.at(i, half + j) = std::cos(freq * t[i]);
    }
  }
  return out;
}

VelocityModel::VelocityModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  auto rng = rng::stream(seed, kInitStream);
  const std::size_t d = config_.width;
  const std::size_t in_dim = config_.data_dim + config_.time_embed_width();
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(d));

  params_.add("in.w", gaussian({in_dim, d}, 1.0 / std::sqrt(static_cast<double>(in_dim)), rng));
  params_.add("in.b", Tensor({1, d}));
  params_.add("cond.table", gaussian({config_.num_conditions + 1, d}, embed_std, rng));
  for (std::size_t l = 0; l < config_.layers; ++l) {
    params_.add(layer_name("layer", l, "w"), gaussian({d, d}, embed_std, rng));
    params_.add(layer_name("layer", l, "b"), Tensor({1, d}));
  }
  params_.add("out.w", gaussian({d, config_.data_dim}, embed_std, rng));
  params_.add("out.b", Tensor({1, config_.data_dim}));

  if (config_.mode == Conditioning::kAdaLN) {
    for (std::size_t l = 0; l < config_.layers; ++l) {
      params_.add(layer_name("adaln", l, "w1"), gaussian({config_.time_embed_width(), d}, embed_std, rng));
      // Zero second stage: scale, shift and gate all start at 0.
      params_.add(layer_name("adaln", l, "w2"), Tensor({d, 3 * d}));
    }
  } else if (config_.mode == Conditioning::kStepToken) {
    params_.add("step.tokens",
                gaussian({config_.step_counts.size() * config_.tokens_per_step, d}, embed_std, rng));
  }
}

VelocityModel VelocityModel::clone() const {
  VelocityModel out(config_, 0);
  out.params_ = params_.clone();
  return out;
}

std::size_t VelocityModel::adaln_params() const {
  std::size_t n = 0;
  for (const auto& e : params_.entries()) {
    if (e.name.rfind("adaln", 0) == 0) n += e.var.value().size();
  }
  return n;
}

std::size_t VelocityModel::token_params() const {
  return params_.contains("step.tokens") ? params_.get("step.tokens").value().size() : 0;
}

std::size_t VelocityModel::copy_shared_from(const VelocityModel& other) {
  std::size_t copied = 0;
  for (auto& e : params_.entries()) {
    if (!other.params_.contains(e.name)) continue;
    const Tensor& src = other.params_.get(e.name).value();
    if (src.shape() != e.var.shape()) continue;
    e.var.node()->value = src;
    ++copied;
  }
  return copied;
}

std::vector<std::size_t> VelocityModel::token_rows(int step) const {
  const auto& s = config_.step_counts;
  auto it = std::find(s.begin(), s.end(), step);
  if (it == s.end()) {
    throw ModelError("step count " + std::to_string(step) + " is not supported by this model");
  }
  const auto slot = static_cast<std::size_t>(it - s.begin());
  std::vector<std::size_t> rows(config_.tokens_per_step);
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = slot * config_.tokens_per_step + k;
  return rows;
}

Var VelocityModel::evaluate(const Var& x, std::span<const double> t, std::span<const int> cond,
                            std::optional<int> step) const {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.cols() != config_.data_dim) {
    throw num::ShapeError("model input must be (batch, " + std::to_string(config_.data_dim) +
                          "), got " + num::shape_str(xv.shape()));
  }
  const std::size_t batch = xv.rows();
  if (t.size() != batch && t.size() != 1) throw num::ShapeError("one time per row expected");
  if (cond.size() != batch && cond.size() != 1) {
    throw num::ShapeError("one condition per row expected");
  }
  for (double ti : t) {
    if (!(ti >= 0.0 && ti <= 1.0)) throw ModelError("time outside [0, 1]");
  }
  if (config_.mode == Conditioning::kStepToken && !step) {
    throw ModelError("step-token model needs a step count");
  }

  std::vector<double> times(batch);
  for (std::size_t i = 0; i < batch; ++i) times[i] = t.size() == 1 ? t[0] : t[i];
  std::vector<std::size_t> cond_rows(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const int c = cond.size() == 1 ? cond[0] : cond[i];
    if (c == kNullCondition) {
      cond_rows[i] = config_.num_conditions;
    } else if (c >= 0 && static_cast<std::size_t>(c) < config_.num_conditions) {
      cond_rows[i] = static_cast<std::size_t>(c);
    } else {
      throw ModelError("condition id " + std::to_string(c) + " out of range");
    }
  }

  const Var temb = num::constant(time_embedding(times, config_.time_embed_width()));
  const Var inputs[] = {x, temb};
  Var h = num::add(num::matmul(num::concat_cols(inputs), params_.get("in.w")), params_.get("in.b"));
  h = num::add(h, num::gather_rows(params_.get("cond.table"), cond_rows));
  if (config_.mode == Conditioning::kStepToken) {
    const auto rows = token_rows(*step);
    h = num::add(h, num::mean_rows(num::gather_rows(params_.get("step.tokens"), rows)));
  }

  const std::size_t d = config_.width;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Var u = num::layer_norm(h);
    std::optional<Var> gate;
    if (config_.mode == Conditioning::kAdaLN) {
      const Var mod = num::matmul(num::silu(num::matmul(temb, params_.get(layer_name("adaln", l, "w1")))),
                                  params_.get(layer_name("adaln", l, "w2")));
      const Var scale = num::slice_cols(mod, 0, d);
      const Var shift = num::slice_cols(mod, d, 2 * d);
      gate = num::slice_cols(mod, 2 * d, 3 * d);
      u = num::add(num::mul(u, num::add_scalar(scale, 1.0)), shift);
    }
    Var f = num::silu(num::add(num::matmul(u, params_.get(layer_name("layer", l, "w"))),
                               params_.get(layer_name("layer", l, "b"))));
    if (gate) f = num::mul(f, num::add_scalar(*gate, 1.0));
    h = num::add(h, f);
  }
  return num::add(num::matmul(h, params_.get("out.w")), params_.get("out.b"));
}

ConditioningCounts count_conditioning_params(std::uint64_t steps, std::uint64_t layers,
                                             std::uint64_t width, std::uint64_t tokens_per_step) {
  ConditioningCounts c;
  c.token = steps * tokens_per_step * width;
  c.adaln = 4 * layers * width * width;
  if (c.token > 0) {
    c.ratio = static_cast<double>(c.adaln) / static_cast<double>(c.token);
    // Round half up in integer arithmetic.
    c.ratio_rounded = (2 * c.adaln + c.token) / (2 * c.token);
  }
  return c;
}

ConditioningCounts count_conditioning_params(const ModelConfig& config) {
  return count_conditioning_params(config.step_counts.size(), config.layers, config.width,
                                   config.tokens_per_step);
}

double step_entropy_bits(std::span<const int> steps, std::span<const double> prior) {
  if (steps.size() != prior.size()) {
    throw std::invalid_argument("prior must have one probability per step count");
  }
  double total = 0.0;
  for (double p : prior) {
    if (p < 0.0) throw std::invalid_argument("negative probability in step prior");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("step prior does not sum to 1");
  double h = 0.0;
  for (double p : prior) {
    if (p > 0.0) h -= p * std::log2(p);
  }
  return h;
}

std::vector<double> uniform_prior(std::size_t k) {
  return std::vector<double>(k, 1.0 / static_cast<double>(k));
}

std::uint64_t entropy_lower_bound_params(std::uint64_t steps, std::uint64_t width) {
  if (steps == 0) return 0;
  const double bits = std::round(std::log2(static_cast<double>(steps)) * 100.0) / 100.0;
  return static_cast<std::uint64_t>(std::ceil(bits * static_cast<double>(width) - 1e-9));
}

std::uint64_t entropy_lower_bound_params_exact(std::uint64_t steps, std::uint64_t width) {
  if (steps == 0) return 0;
  return static_cast<std::uint64_t>(
      std::ceil(std::log2(static_cast<double>(steps)) * static_cast<double>(width) - 1e-9));
}

}  // namespace dsflow::model
