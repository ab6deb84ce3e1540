// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/autodiff.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fdm::ad {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

ConstMatMap view(const Array& a) {
  return ConstMatMap(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                     static_cast<Eigen::Index>(a.cols()));
}
MatMap view(Array& a) {
  return MatMap(a.data().data(), static_cast<Eigen::Index>(a.rows()),
                static_cast<Eigen::Index>(a.cols()));
}

[[noreturn]] void shape_error(Op op, const Array& a, const Array& b) {
  throw std::invalid_argument(fmt::format("{}: incompatible shapes {} and {}", op_name(op),
                                          a.shape_string(), b.shape_string()));
}

bool broadcasts(const Array& a, const Array& b) {
  return b.cols() == 1 && a.rows() == b.rows() && a.cols() != 1;
}

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <class F>
Array map(const Array& a, F f) {
  Array out(a.rows(), a.cols());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = f(src[i]);
  }
  return out;
}

// out += g, summing over columns when out is the broadcast column.
void accumulate(Array& out, const Array& g, double sign) {
  if (out.same_shape(g)) {
    auto o = out.data();
    auto s = g.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
      o[i] += sign * s[i];
    }
    return;
  }
  for (std::size_t r = 0; r < g.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < g.cols(); ++c) {
      acc += g(r, c);
    }
    out(r, 0) += sign * acc;
  }
}

}  // namespace

Array::Array(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Array::Array(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument(
        fmt::format("Array: {} values do not fill shape {}x{}", data_.size(), rows, cols));
  }
}

Array Array::column(std::span<const double> v) {
  return Array(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

double Array::item() const {
  if (data_.size() != 1) {
    throw std::invalid_argument(fmt::format("item() on non-scalar array {}", shape_string()));
  }
  return data_[0];
}

std::string Array::shape_string() const { return fmt::format("{}x{}", rows_, cols_); }

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::matmul: return "matmul";
    case Op::tanh: return "tanh";
    case Op::softplus: return "softplus";
    case Op::exp: return "exp";
    case Op::neg: return "neg";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::scale: return "scale";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::squared_norm: return "squared_norm";
  }
  return "unknown";
}

const Array& Gradients::at(NodeId leaf) const {
  auto it = grads_.find(leaf);
  if (it == grads_.end()) {
    throw std::out_of_range(fmt::format("no gradient recorded for node {}", leaf));
  }
  return it->second;
}

void Tape::check_id(NodeId id, const char* what) const {
  if (id >= nodes_.size()) {
    throw std::out_of_range(fmt::format("{}: node id {} not on tape (size {})", what, id,
                                        nodes_.size()));
  }
}

NodeId Tape::push(Node node) {
  for (NodeId in : node.inputs) {
    check_id(in, op_name(node.op));
    node.grad = node.grad || nodes_[in].grad;
  }
  if (node.op != Op::leaf) {
    node.value = forward(node);
  }
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

NodeId Tape::variable(Array value) {
  Node n;
  n.value = std::move(value);
  n.grad = true;
  return push(std::move(n));
}

NodeId Tape::constant(Array value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_id(a, "add");
  check_id(b, "add");
  const Array& x = nodes_[a].value;
  const Array& y = nodes_[b].value;
  if (!x.same_shape(y) && !broadcasts(x, y)) {
    shape_error(Op::add, x, y);
  }
  Node n;
  n.op = Op::add;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check_id(a, "sub");
  check_id(b, "sub");
  const Array& x = nodes_[a].value;
  const Array& y = nodes_[b].value;
  if (!x.same_shape(y) && !broadcasts(x, y)) {
    shape_error(Op::sub, x, y);
  }
  Node n;
  n.op = Op::sub;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_id(a, "mul");
  check_id(b, "mul");
  if (!nodes_[a].value.same_shape(nodes_[b].value)) {
    shape_error(Op::mul, nodes_[a].value, nodes_[b].value);
  }
  Node n;
  n.op = Op::mul;
  n.inputs = {a, b};
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  check_id(a, "matmul");
  check_id(b, "matmul");
  if (nodes_[a].value.cols() != nodes_[b].value.rows()) {
    shape_error(Op::matmul, nodes_[a].value, nodes_[b].value);
  }
  Node n;
  n.op = Op::matmul;
  n.inputs = {a, b};
  return push(std::move(n));
}

#define FDM_UNARY(fn, kind)       \
  NodeId Tape::fn(NodeId a) {     \
    Node n;                       \
    n.op = Op::kind;              \
    n.inputs = {a};               \
    return push(std::move(n));    \
  }

FDM_UNARY(tanh, tanh)
FDM_UNARY(softplus, softplus)
FDM_UNARY(exp, exp)
FDM_UNARY(neg, neg)
FDM_UNARY(sum, sum)
FDM_UNARY(mean, mean)
FDM_UNARY(squared_norm, squared_norm)

#undef FDM_UNARY

NodeId Tape::scale(NodeId a, double factor) {
  Node n;
  n.op = Op::scale;
  n.inputs = {a};
  n.factor = factor;
  return push(std::move(n));
}

NodeId Tape::concat(std::span<const NodeId> inputs, int axis) {
  if (inputs.empty()) {
    throw std::invalid_argument("concat: no inputs");
  }
  if (axis != 0 && axis != 1) {
    throw std::invalid_argument(fmt::format("concat: axis must be 0 or 1, got {}", axis));
  }
  for (NodeId id : inputs) {
    check_id(id, "concat");
  }
  const Array& first = nodes_[inputs[0]].value;
  for (NodeId id : inputs) {
    const Array& v = nodes_[id].value;
    if ((axis == 0 && v.cols() != first.cols()) || (axis == 1 && v.rows() != first.rows())) {
      shape_error(Op::concat, first, v);
    }
  }
  Node n;
  n.op = Op::concat;
  n.inputs.assign(inputs.begin(), inputs.end());
  n.axis = axis;
  return push(std::move(n));
}

NodeId Tape::slice(NodeId a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
                   std::size_t col_end) {
  check_id(a, "slice");
  const Array& v = nodes_[a].value;
  if (row_begin >= row_end || col_begin >= col_end || row_end > v.rows() || col_end > v.cols()) {
    throw std::invalid_argument(fmt::format("slice: range [{}, {}) x [{}, {}) invalid for {}",
                                            row_begin, row_end, col_begin, col_end,
                                            v.shape_string()));
  }
  Node n;
  n.op = Op::slice;
  n.inputs = {a};
  n.r0 = row_begin;
  n.r1 = row_end;
  n.c0 = col_begin;
  n.c1 = col_end;
  return push(std::move(n));
}

const Array& Tape::value(NodeId id) const {
  check_id(id, "value");
  return nodes_[id].value;
}

Op Tape::op(NodeId id) const {
  check_id(id, "op");
  return nodes_[id].op;
}

std::span<const NodeId> Tape::inputs(NodeId id) const {
  check_id(id, "inputs");
  return nodes_[id].inputs;
}

bool Tape::requires_grad(NodeId id) const {
  check_id(id, "requires_grad");
  return nodes_[id].grad;
}

void Tape::set_leaf_value(NodeId leaf, Array value) {
  check_id(leaf, "set_leaf_value");
  Node& n = nodes_[leaf];
  if (n.op != Op::leaf) {
    throw std::invalid_argument(fmt::format("set_leaf_value: node {} is a {} node", leaf,
                                            op_name(n.op)));
  }
  if (!n.value.same_shape(value)) {
    shape_error(Op::leaf, n.value, value);
  }
  n.value = std::move(value);
}

void Tape::replay() {
  for (Node& n : nodes_) {
    if (n.op != Op::leaf) {
      n.value = forward(n);
    }
  }
}

Array Tape::forward(const Node& node) const {
  auto in = [&](std::size_t k) -> const Array& { return nodes_[node.inputs[k]].value; };
  switch (node.op) {
    case Op::leaf:
      return node.value;
    case Op::add:
    case Op::sub: {
      const Array& a = in(0);
      const Array& b = in(1);
      const double sign = node.op == Op::add ? 1.0 : -1.0;
      Array out = a;
      if (a.same_shape(b)) {
        auto o = out.data();
        auto s = b.data();
        for (std::size_t i = 0; i < o.size(); ++i) {
          o[i] += sign * s[i];
        }
      } else {
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const double v = sign * b(r, 0);
          for (std::size_t c = 0; c < a.cols(); ++c) {
            out(r, c) += v;
          }
        }
      }
      return out;
    }
    case Op::mul: {
      Array out = in(0);
      auto o = out.data();
      auto s = in(1).data();
      for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] *= s[i];
      }
      return out;
    }
    case Op::matmul: {
      Array out(in(0).rows(), in(1).cols());
      view(out).noalias() = view(in(0)) * view(in(1));
      return out;
    }
    case Op::tanh:
      return map(in(0), [](double x) { return std::tanh(x); });
    case Op::softplus:
      return map(in(0), softplus_value);
    case Op::exp:
      return map(in(0), [](double x) { return std::exp(x); });
    case Op::neg:
      return map(in(0), [](double x) { return -x; });
    case Op::scale: {
      const double f = node.factor;
      return map(in(0), [f](double x) { return f * x; });
    }
    case Op::sum:
    case Op::mean: {
      double acc = 0.0;
      for (double x : in(0).data()) {
        acc += x;
      }
      if (node.op == Op::mean) {
        acc /= static_cast<double>(in(0).size());
      }
      return Array::scalar(acc);
    }
    case Op::squared_norm: {
      double acc = 0.0;
      for (double x : in(0).data()) {
        acc += x * x;
      }
      return Array::scalar(acc);
    }
    case Op::concat: {
      std::size_t rows = 0, cols = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        if (node.axis == 0) {
          rows += in(k).rows();
          cols = in(k).cols();
        } else {
          cols += in(k).cols();
          rows = in(k).rows();
        }
      }
      Array out(rows, cols);
      std::size_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Array& part = in(k);
        for (std::size_t r = 0; r < part.rows(); ++r) {
          for (std::size_t c = 0; c < part.cols(); ++c) {
            if (node.axis == 0) {
              out(offset + r, c) = part(r, c);
            } else {
              out(r, offset + c) = part(r, c);
            }
          }
        }
        offset += node.axis == 0 ? part.rows() : part.cols();
      }
      return out;
    }
    case Op::slice: {
      const Array& a = in(0);
      Array out(node.r1 - node.r0, node.c1 - node.c0);
      for (std::size_t r = node.r0; r < node.r1; ++r) {
        for (std::size_t c = node.c0; c < node.c1; ++c) {
          out(r - node.r0, c - node.c0) = a(r, c);
        }
      }
      return out;
    }
  }
  throw std::logic_error("unhandled op");
}

Gradients Tape::backward(NodeId root) const {
  check_id(root, "backward");
  const Array& root_value = nodes_[root].value;
  if (root_value.size() != 1) {
    throw std::invalid_argument(
        fmt::format("backward: root must be scalar, got shape {}", root_value.shape_string()));
  }

  std::vector<Array> adj(root + 1);
  std::vector<bool> live(root + 1, false);
  adj[root] = Array::scalar(1.0);
  live[root] = true;

  auto grad_of = [&](NodeId id) -> Array& {
    if (!live[id]) {
      adj[id] = Array(nodes_[id].value.rows(), nodes_[id].value.cols());
      live[id] = true;
    }
    return adj[id];
  };

  for (NodeId id = root + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!live[id] || !n.grad || n.op == Op::leaf) {
      continue;
    }
    const Array& g = adj[id];
    auto input = [&](std::size_t k) -> NodeId { return n.inputs[k]; };
    auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].grad; };

    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add:
      case Op::sub:
        if (wants(0)) accumulate(grad_of(input(0)), g, 1.0);
        if (wants(1)) accumulate(grad_of(input(1)), g, n.op == Op::add ? 1.0 : -1.0);
        break;
      case Op::mul: {
        for (std::size_t k = 0; k < 2; ++k) {
          if (!wants(k)) continue;
          Array& out = grad_of(input(k));
          auto o = out.data();
          auto other = nodes_[input(1 - k)].value.data();
          auto gs = g.data();
          for (std::size_t i = 0; i < o.size(); ++i) {
            o[i] += gs[i] * other[i];
          }
        }
        break;
      }
      case Op::matmul: {
        const Array& a = nodes_[input(0)].value;
        const Array& b = nodes_[input(1)].value;
        if (wants(0)) view(grad_of(input(0))).noalias() += view(g) * view(b).transpose();
        if (wants(1)) view(grad_of(input(1))).noalias() += view(a).transpose() * view(g);
        break;
      }
      case Op::tanh:
      case Op::softplus:
      case Op::exp: {
        if (!wants(0)) break;
        Array& out = grad_of(input(0));
        auto o = out.data();
        auto gs = g.data();
        auto y = n.value.data();
        auto x = nodes_[input(0)].value.data();
        for (std::size_t i = 0; i < o.size(); ++i) {
          double d = 0.0;
          if (n.op == Op::tanh) {
            d = 1.0 - y[i] * y[i];
          } else if (n.op == Op::softplus) {
            d = sigmoid(x[i]);
          } else {
            d = y[i];
          }
          o[i] += gs[i] * d;
        }
        break;
      }
      case Op::neg:
        if (wants(0)) accumulate(grad_of(input(0)), g, -1.0);
        break;
      case Op::scale:
        if (wants(0)) accumulate(grad_of(input(0)), g, n.factor);
        break;
      case Op::sum:
      case Op::mean: {
        if (!wants(0)) break;
        Array& out = grad_of(input(0));
        double s = g.item();
        if (n.op == Op::mean) {
          s /= static_cast<double>(out.size());
        }
        for (double& v : out.data()) {
          v += s;
        }
        break;
      }
      case Op::squared_norm: {
        if (!wants(0)) break;
        Array& out = grad_of(input(0));
        const double s = 2.0 * g.item();
        auto x = nodes_[input(0)].value.data();
        auto o = out.data();
        for (std::size_t i = 0; i < o.size(); ++i) {
          o[i] += s * x[i];
        }
        break;
      }
      case Op::concat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Array& part = nodes_[input(k)].value;
          if (wants(k)) {
            Array& out = grad_of(input(k));
            for (std::size_t r = 0; r < part.rows(); ++r) {
              for (std::size_t c = 0; c < part.cols(); ++c) {
                out(r, c) += n.axis == 0 ? g(offset + r, c) : g(r, offset + c);
              }
            }
          }
          offset += n.axis == 0 ? part.rows() : part.cols();
        }
        break;
      }
      case Op::slice: {
        if (!wants(0)) break;
        Array& out = grad_of(input(0));
        for (std::size_t r = n.r0; r < n.r1; ++r) {
          for (std::size_t c = n.c0; c < n.c1; ++c) {
            out(r, c) += g(r - n.r0, c - n.c0);
          }
        }
        break;
      }
    }
  }

  Gradients result;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (n.op != Op::leaf || !n.grad) {
      continue;
    }
    if (id <= root && live[id]) {
      result.grads_.emplace(id, std::move(adj[id]));
    } else {
      result.grads_.emplace(id, Array(n.value.rows(), n.value.cols()));
    }
  }
  return result;
}

}  // namespace fdm::ad
