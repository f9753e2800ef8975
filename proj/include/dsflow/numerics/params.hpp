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

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dsflow/numerics/autodiff.hpp"

namespace dsflow::num {

/// Named trainable tensors in insertion order, with optimizer state.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Var var;
    bool trainable = true;
    Tensor m;  // first moment
    Tensor v;  // second moment
  };

  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Var add(const std::string& name, Tensor init, bool trainable = true);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t total_param_count() const;
  void zero_grad();

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t s) { step_count_ = s; }

  /// Deep copy of values; graph state and optimizer moments are not shared.
  ParamStore clone() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
  std::int64_t step_count_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled (AdamW-style) decay, off by default.
  double weight_decay = 0.0;
};

/// One bias-corrected Adam update of every trainable entry, then zero_grad().
void adam_step(ParamStore& store, const AdamConfig& cfg);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `loss_fn` with central differences.
///
/// The relative error per element is |ad - fd| / (|fd| + 1e-8). Throws
/// std::runtime_error if two evaluations at the same point disagree.
/// `filter`, when set, restricts the check to matching parameter names.
GradCheckResult finite_diff_check(const std::function<Var()>& loss_fn, ParamStore& store,
                                  double h = 1e-5,
                                  const std::function<bool(const std::string&)>& filter = {});

}  // namespace dsflow::num
