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

// Reverse-mode differentiation over a dynamic tape.
//
// Each op builds a Node holding its value, its parents and a backward rule.
// Backward rules operate on plain Tensors and never create Nodes, so a graph
// built here is first order by construction: there is no way to differentiate
// a gradient. inspect_graph() reports the derivative order of every node so
// callers can assert this.

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dsflow/numerics/tensor.hpp"

namespace dsflow::num {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool is_param = false;
  const char* op = "leaf";
  // 0 for every node built by this library; a node computed from a gradient
  // would carry 1 + the order of its inputs.
  int derivative_order = 0;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;

  /// Gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
  void clear_grad();
};

/// Handle to a graph node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  /// Accumulated gradient, or zeros if none reached this node.
  Tensor grad() const;

  Node* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  NodePtr node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Leaves.
Var constant(Tensor value);
Var parameter(Tensor value);

// Matrix product of rank-2 operands.
Var matmul(const Var& a, const Var& b);

// Binary ops broadcast a (1, n), (n) or scalar operand against a full one.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var tanh(const Var& a);
Var silu(const Var& a);
Var square(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Per-row sum, result (rows, 1).
Var sum_cols(const Var& a);
/// Per-column mean over rows, result (1, cols).
Var mean_rows(const Var& a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);

/// Rows of `table` selected by index; the gradient scatters back.
Var gather_rows(const Var& table, std::span<const std::size_t> indices);

/// Per-row standardization without affine parameters.
Var layer_norm(const Var& a, double eps = 1e-5);

/// Value identity that passes no gradient to its input.
Var stop_gradient(const Var& a);

/// Mean over rows of the squared L2 norm of each row; sum over features.
Var mean_sq_norm(const Var& diff);

/// Populates grads of every node reachable from a scalar root.
void backward(const Var& root);

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t parameters = 0;
  std::size_t detached = 0;
  int max_derivative_order = 0;
  std::size_t higher_order_nodes = 0;
  std::map<std::string, std::size_t> op_counts;
};

GraphStats inspect_graph(const Var& root);

}  // namespace dsflow::num
