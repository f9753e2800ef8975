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

#include "dsflow/numerics/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "dsflow/kernels/gemm.hpp"

namespace dsflow::num {
namespace {

thread_local bool g_grad_enabled = true;

Var make_node(Tensor value, const char* op, std::span<const Var> parents,
              std::function<void(Node&)> rule) {
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite value produced by ") + op);
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  int order = 0;
  for (const auto& p : parents) {
    needs = needs || p.requires_grad();
    order = std::max(order, p.node()->derivative_order);
  }
  node->derivative_order = order;
  if (needs && g_grad_enabled) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.ptr());
    node->backward = std::move(rule);
  }
  return Var(std::move(node));
}

Var make_node(Tensor value, const char* op, std::initializer_list<Var> parents,
              std::function<void(Node&)> rule) {
  return make_node(std::move(value), op, std::span<const Var>(parents.begin(), parents.size()),
                   std::move(rule));
}

// 2-D view of a tensor of rank <= 2.
struct View {
  std::size_t r, c;
};
View view_of(const Tensor& t) { return {t.rows(), t.cols()}; }

// Operands are broadcast when one of them is full and the other has extent
// 1 or equal in each view dimension.
bool covers(View full, View part) {
  return (part.r == full.r || part.r == 1) && (part.c == full.c || part.c == 1);
}

// Sums a full-shaped gradient down to a broadcast operand's shape.
Tensor reduce_to(const Tensor& g, const Tensor& like) {
  if (g.shape() == like.shape()) return g;
  const View gv = view_of(g);
  const View lv = view_of(like);
  Tensor out(like.shape());
  for (std::size_t i = 0; i < gv.r; ++i) {
    for (std::size_t j = 0; j < gv.c; ++j) {
      const std::size_t oi = lv.r == 1 ? 0 : i;
      const std::size_t oj = lv.c == 1 ? 0 : j;
      out[oi * lv.c + oj] += g[i * gv.c + j];
    }
  }
  return out;
}

template <class F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, const char* op, F f) {
  const View av = view_of(a);
  const View bv = view_of(b);
  const bool a_full = covers(av, bv);
  const bool b_full = covers(bv, av);
  if (!a_full && !b_full) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const Tensor& full = (a_full && (a.size() >= b.size())) ? a : b;
  Tensor out(full.shape());
  const View ov = view_of(full);
  for (std::size_t i = 0; i < ov.r; ++i) {
    for (std::size_t j = 0; j < ov.c; ++j) {
      const double x = a[(av.r == 1 ? 0 : i) * av.c + (av.c == 1 ? 0 : j)];
      const double y = b[(bv.r == 1 ? 0 : i) * bv.c + (bv.c == 1 ? 0 : j)];
      out[i * ov.c + j] = f(x, y);
    }
  }
  return out;
}

// Reads operand element (i, j) of the broadcast output grid.
double bcast_at(const Tensor& t, std::size_t i, std::size_t j) {
  const View v = view_of(t);
  return t[(v.r == 1 ? 0 : i) * v.c + (v.c == 1 ? 0 : j)];
}

template <class F, class D>
Var unary(const Var& a, const char* op, F f, D df) {
  Tensor out(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return make_node(std::move(out), op, {a}, [df](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor g(in.value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = self.grad[i] * df(in.value[i], self.value[i]);
    }
    in.accumulate(g);
  });
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Tensor& Node::grad_buffer() {
  if (!has_grad) {
    grad = Tensor(value.shape());
    has_grad = true;
  }
  return grad;
}

void Node::accumulate(const Tensor& g) {
  Tensor& buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Node::clear_grad() {
  if (has_grad) grad.fill(0.0);
}

Tensor Var::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor(node_->value.shape());
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Var(std::move(node));
}

Var parameter(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite parameter");
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "parameter";
  node->requires_grad = true;
  node->is_param = true;
  return Var(std::move(node));
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows()) {
    throw ShapeError("matmul: shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()) +
                     " do not compose");
  }
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  Tensor out({m, n});
  kernels::gemm(kernels::Trans::kNo, kernels::Trans::kNo, m, n, k, x.data().data(), k,
                y.data().data(), n, out.data().data());
  return make_node(std::move(out), "matmul", {a, b}, [m, n, k](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      // dA = dC * B^T
      kernels::gemm(kernels::Trans::kNo, kernels::Trans::kYes, m, k, n, self.grad.data().data(), n,
                    pb.value.data().data(), n, pa.grad_buffer().data().data());
    }
    if (pb.requires_grad) {
      // dB = A^T * dC
      kernels::gemm(kernels::Trans::kYes, kernels::Trans::kNo, k, n, m, pa.value.data().data(), k,
                    self.grad.data().data(), n, pb.grad_buffer().data().data());
    }
  });
}

Var add(const Var& a, const Var& b) {
  Tensor out = broadcast_apply(a.value(), b.value(), "add", [](double x, double y) { return x + y; });
  return make_node(std::move(out), "add", {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(reduce_to(self.grad, p->value));
    }
  });
}

Var sub(const Var& a, const Var& b) {
  Tensor out = broadcast_apply(a.value(), b.value(), "sub", [](double x, double y) { return x - y; });
  return make_node(std::move(out), "sub", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(reduce_to(self.grad, pa.value));
    if (pb.requires_grad) {
      Tensor neg = self.grad;
      for (auto& v : neg.storage()) v = -v;
      pb.accumulate(reduce_to(neg, pb.value));
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Tensor out = broadcast_apply(a.value(), b.value(), "mul", [](double x, double y) { return x * y; });
  return make_node(std::move(out), "mul", {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const View ov = view_of(self.value);
    auto partial = [&](const Tensor& other) {
      Tensor g(self.value.shape());
      for (std::size_t i = 0; i < ov.r; ++i) {
        for (std::size_t j = 0; j < ov.c; ++j) {
          g[i * ov.c + j] = self.grad[i * ov.c + j] * bcast_at(other, i, j);
        }
      }
      return g;
    };
    if (pa.requires_grad) pa.accumulate(reduce_to(partial(pb.value), pa.value));
    if (pb.requires_grad) pb.accumulate(reduce_to(partial(pa.value), pb.value));
  });
}

Var scale(const Var& a, double s) {
  return unary(
      a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var tanh(const Var& a) {
  return unary(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var silu(const Var& a) {
  return unary(
      a, "silu", [](double x) { return x * sigmoid(x); },
      [](double x, double) {
        const double s = sigmoid(x);
        return s * (1.0 + x * (1.0 - s));
      });
}

Var square(const Var& a) {
  return unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_node(Tensor::scalar(s), "sum", {a}, [](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    const double up = self.grad[0];
    for (auto& v : g.storage()) v += up;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_node(Tensor::scalar(s / n), "mean", {a}, [n](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    const double up = self.grad[0] / n;
    for (auto& v : g.storage()) v += up;
  });
}

Var sum_cols(const Var& a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out({r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j];
    out[i] = s;
  }
  return make_node(std::move(out), "sum_cols", {a}, [r, c](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i];
    }
  });
}

Var mean_rows(const Var& a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out({1, c});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j] += x[i * c + j];
  }
  for (auto& v : out.storage()) v /= static_cast<double>(r);
  return make_node(std::move(out), "mean_rows", {a}, [r, c](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j] * inv;
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t r = parts.front().value().rows();
  std::size_t c = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.value().rows() != r) throw ShapeError("concat_cols row mismatch");
    widths.push_back(p.value().cols());
    c += p.value().cols();
  }
  Tensor out({r, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.value().cols();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) out[i * c + off + j] = p.value()[i * w + j];
    }
    off += w;
  }
  return make_node(std::move(out), "concat_cols", parts, [r, c, widths](Node& self) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      Node& in = *self.parents[k];
      const std::size_t w = widths[k];
      if (in.requires_grad) {
        Tensor& g = in.grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * c + o + j];
        }
      }
      o += w;
    }
  });
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (begin > end || end > c) throw ShapeError("slice_cols out of range");
  const std::size_t w = end - begin;
  Tensor out({r, w});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * c + begin + j];
  }
  return make_node(std::move(out), "slice_cols", {a}, [r, c, w, begin](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += self.grad[i * w + j];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  std::vector<Tensor> values;
  values.reserve(parts.size());
  for (const auto& p : parts) values.push_back(p.value());
  return make_node(vstack(values), "concat_rows", parts, [](Node& self) {
    std::size_t off = 0;
    for (auto& p : self.parents) {
      const std::size_t n = p->value.size();
      if (p->requires_grad) {
        Tensor& g = p->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  Tensor out = x.row_slice(begin, end);
  const std::size_t c = x.cols();
  return make_node(std::move(out), "slice_rows", {a}, [begin, c](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    const std::size_t off = begin * c;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[off + i] += self.grad[i];
  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> indices) {
  const Tensor& t = table.value();
  if (t.rank() != 2) throw ShapeError("gather_rows needs a rank-2 table");
  const std::size_t c = t.cols();
  Tensor out({indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows()) throw ShapeError("gather_rows index out of range");
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = t[indices[i] * c + j];
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return make_node(std::move(out), "gather_rows", {table}, [idx = std::move(idx), c](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
    }
  });
}

Var layer_norm(const Var& a, double eps) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(x.shape());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += x[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = x[i * c + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = (x[i * c + j] - mu) * inv_std[i];
  }
  return make_node(std::move(out), "layer_norm", {a}, [r, c, inv_std](Node& self) {
    Node& in = *self.parents[0];
    if (!in.requires_grad) return;
    Tensor& g = in.grad_buffer();
    const double n = static_cast<double>(c);
    for (std::size_t i = 0; i < r; ++i) {
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        mean_g += self.grad[i * c + j];
        mean_gy += self.grad[i * c + j] * self.value[i * c + j];
      }
      mean_g /= n;
      mean_gy /= n;
      for (std::size_t j = 0; j < c; ++j) {
        g[i * c + j] +=
            inv_std[i] * (self.grad[i * c + j] - mean_g - self.value[i * c + j] * mean_gy);
      }
    }
  });
}

Var stop_gradient(const Var& a) {
  auto node = std::make_shared<Node>();
  node->value = a.value();
  node->op = "stop_gradient";
  node->derivative_order = a.node()->derivative_order;
  // Deliberately no parents: the subgraph under `a` is unreachable from here.
  return Var(std::move(node));
}

Var mean_sq_norm(const Var& diff) {
  const double rows = static_cast<double>(diff.value().rows());
  return scale(sum(square(diff)), 1.0 / rows);
}

namespace {

std::vector<Node*> topo_order(Node* root) {
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;  // parents before children
}

}  // namespace

void backward(const Var& root) {
  if (root.value().size() != 1) {
    throw ShapeError("backward needs a scalar root, got " + shape_str(root.shape()));
  }
  auto order = topo_order(root.node());
  for (Node* n : order) {
    if (!n->is_param) n->clear_grad();
  }
  root.node()->grad_buffer().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->has_grad && n->backward) n->backward(*n);
  }
}

GraphStats inspect_graph(const Var& root) {
  GraphStats stats;
  auto order = topo_order(root.node());
  for (Node* n : order) {
    ++stats.nodes;
    if (n->is_param) ++stats.parameters;
    if (std::string_view(n->op) == "stop_gradient") ++stats.detached;
    stats.max_derivative_order = std::max(stats.max_derivative_order, n->derivative_order);
    if (n->derivative_order > 0) ++stats.higher_order_nodes;
    ++stats.op_counts[n->op];
  }
  return stats;
}

}  // namespace dsflow::num
