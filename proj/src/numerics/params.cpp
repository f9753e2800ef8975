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

#include "dsflow/numerics/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dsflow::num {

Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Var v = trainable ? parameter(std::move(init)) : constant(std::move(init));
  const Shape shape = v.shape();
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, v, trainable, Tensor(shape), Tensor(shape)});
  return v;
}

const Var& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return entries_[it->second].var;
}

std::size_t ParamStore::total_param_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.var.node()->clear_grad();
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& e : entries_) {
    out.add(e.name, e.var.value(), e.trainable);
    out.entries_.back().m = e.m;
    out.entries_.back().v = e.v;
  }
  out.step_count_ = step_count_;
  return out;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  const std::int64_t t = store.step_count() + 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& e : store.entries()) {
    if (!e.trainable) continue;
    Node* node = e.var.node();
    Tensor& p = node->value;
    const Tensor g = e.var.grad();
    for (std::size_t i = 0; i < p.size(); ++i) {
      e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g[i];
      e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      if (cfg.weight_decay != 0.0) p[i] -= cfg.lr * cfg.weight_decay * p[i];
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    if (!p.all_finite()) throw NumericError("optimizer produced non-finite value in " + e.name);
  }
  store.set_step_count(t);
  store.zero_grad();
}

GradCheckResult finite_diff_check(const std::function<Var()>& loss_fn, ParamStore& store, double h,
                                  const std::function<bool(const std::string&)>& filter) {
  store.zero_grad();
  Var loss = loss_fn();
  const double base = loss.value().item();
  backward(loss);
  {
    NoGradGuard ng;
    if (loss_fn().value().item() != base) {
      throw std::runtime_error("finite_diff_check: loss function is not deterministic");
    }
  }

  GradCheckResult result;
  NoGradGuard ng;
  for (auto& e : store.entries()) {
    if (!e.trainable || (filter && !filter(e.name))) continue;
    const Tensor ad = e.var.grad();
    Tensor& p = e.var.node()->value;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = loss_fn().value().item();
      p[i] = orig - h;
      const double down = loss_fn().value().item();
      p[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(ad[i] - fd) / (std::abs(fd) + 1e-8);
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        result.max_rel_error = std::max(rel, result.max_rel_error);
        result.worst_param = e.name;
        result.worst_index = i;
      }
    }
  }
  store.zero_grad();
  return result;
}

}  // namespace dsflow::num
