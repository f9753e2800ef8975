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

#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsflow/numerics/autodiff.hpp"
#include "dsflow/numerics/params.hpp"

namespace dsflow::model {

using num::Tensor;
using num::Var;

/// Condition id selecting the learned null-condition row.
inline constexpr int kNullCondition = -1;

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A velocity field v(x_t, t, c[, n]) that can be evaluated on a graph.
///
/// `t` holds one time per row of `x` or a single shared time; `cond` likewise
/// holds one id per row or a single shared id. `step` selects the step-aware
/// token for models that use one. Every call is counted as one function
/// evaluation regardless of batch size.
class VelocityField {
 public:
  VelocityField() = default;
  VelocityField(const VelocityField&) = delete;
  VelocityField& operator=(const VelocityField&) = delete;
  VelocityField(VelocityField&& other) noexcept : calls_(other.forward_calls()) {}
  VelocityField& operator=(VelocityField&& other) noexcept {
    calls_.store(other.forward_calls(), std::memory_order_relaxed);
    return *this;
  }
  virtual ~VelocityField() = default;

  Var velocity(const Var& x, std::span<const double> t, std::span<const int> cond,
               std::optional<int> step = std::nullopt) const {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return evaluate(x, t, cond, step);
  }

  std::size_t forward_calls() const { return calls_.load(std::memory_order_relaxed); }
  void reset_forward_calls() { calls_.store(0, std::memory_order_relaxed); }

 protected:
  virtual Var evaluate(const Var& x, std::span<const double> t, std::span<const int> cond,
                       std::optional<int> step) const = 0;

 private:
  mutable std::atomic<std::size_t> calls_{0};
};

enum class Conditioning { kAdaLN, kStepToken, kPlain };

std::string to_string(Conditioning mode);
Conditioning conditioning_from_string(const std::string& s);

struct ModelConfig {
  std::size_t layers = 4;
  std::size_t width = 64;
  std::size_t data_dim = 2;
  std::size_t num_conditions = 4;
  Conditioning mode = Conditioning::kAdaLN;
  std::size_t tokens_per_step = 3;
  std::vector<int> step_counts{1, 2, 4};

  /// Sinusoidal time features; always equal to the hidden width.
  std::size_t time_embed_width() const { return width; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Sinusoidal features of t: width/2 geometric frequencies from 1 to 1000,
/// sines then cosines. One row per time.
Tensor time_embedding(std::span<const double> t, std::size_t width);

/// MLP velocity field with a selectable conditioning pathway.
///
/// Backbone: h = W_in [x, emb(t)] + b_in + E_cond[c] (+ pooled step tokens),
/// then `layers` residual blocks
///   h += (1 + gate) * silu(W ((1 + scale) * norm(h) + shift) + b),
/// then a linear read-out. In adaLN mode (scale, shift, gate) come from a
/// bias-free two-stage map of emb(t) whose second stage starts at zero; in the
/// other modes they are identically zero, so every mode shares one backbone.
class VelocityModel : public VelocityField {
 public:
  VelocityModel(ModelConfig config, std::uint64_t seed);
  VelocityModel(VelocityModel&&) noexcept = default;
  VelocityModel& operator=(VelocityModel&&) noexcept = default;

  /// Independent copy with the same parameter values.
  VelocityModel clone() const;

  const ModelConfig& config() const { return config_; }
  num::ParamStore& params() { return params_; }
  const num::ParamStore& params() const { return params_; }

  std::size_t total_params() const { return params_.total_param_count(); }
  /// Parameters of the adaLN modulation maps (zero outside adaLN mode).
  std::size_t adaln_params() const;
  /// Parameters of the step-token table (zero outside step-token mode).
  std::size_t token_params() const;

  /// Copies every parameter whose name and shape also exist in `other`.
  /// Returns the number of tensors copied.
  std::size_t copy_shared_from(const VelocityModel& other);

  /// Rows of the token table used for a supported step count.
  std::vector<std::size_t> token_rows(int step) const;

 protected:
  Var evaluate(const Var& x, std::span<const double> t, std::span<const int> cond,
               std::optional<int> step) const override;

 private:
  ModelConfig config_;
  num::ParamStore params_;
};

struct ConditioningCounts {
  std::uint64_t token = 0;
  std::uint64_t adaln = 0;
  double ratio = 0.0;              // adaln / token
  std::uint64_t ratio_rounded = 0;  // nearest integer
};

/// Parameter counts of the two step-conditioning pathways:
/// token = steps * tokens_per_step * width, adaln = 4 * layers * width^2.
ConditioningCounts count_conditioning_params(std::uint64_t steps, std::uint64_t layers,
                                             std::uint64_t width,
                                             std::uint64_t tokens_per_step = 1);
ConditioningCounts count_conditioning_params(const ModelConfig& config);

/// Shannon entropy in bits of a prior over step counts.
double step_entropy_bits(std::span<const int> steps, std::span<const double> prior);

/// Uniform prior over `k` step counts.
std::vector<double> uniform_prior(std::size_t k);

/// Parameter floor log2(K) * D with the bit count taken to two decimals
/// (1.58 for K = 3), rounded up.
std::uint64_t entropy_lower_bound_params(std::uint64_t steps, std::uint64_t width);

/// Same floor with the unrounded log2(K).
std::uint64_t entropy_lower_bound_params_exact(std::uint64_t steps, std::uint64_t width);

}  // namespace dsflow::model
