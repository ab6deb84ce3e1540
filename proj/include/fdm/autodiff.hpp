// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fdm::ad {

/// Dense row-major matrix of doubles. Scalars are 1x1, vectors are n x 1.
/// The shape is fixed at construction.
class Array {
 public:
  Array() = default;
  Array(std::size_t rows, std::size_t cols, double fill = 0.0);
  Array(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Array scalar(double v) { return Array(1, 1, v); }
  static Array column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> shape() const { return {rows_, cols_}; }
  bool same_shape(const Array& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double item() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  std::string shape_string() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using NodeId = std::size_t;

enum class Op {
  leaf,
  add,
  sub,
  mul,
  matmul,
  tanh,
  softplus,
  exp,
  neg,
  sum,
  mean,
  scale,
  concat,
  slice,
  squared_norm,
};

const char* op_name(Op op);

/// Leaf gradients produced by Tape::backward. Every differentiable leaf on the
/// tape has an entry, zero when the root does not depend on it.
class Gradients {
 public:
  const Array& at(NodeId leaf) const;
  bool contains(NodeId leaf) const { return grads_.count(leaf) != 0; }
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<NodeId, Array> grads_;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
/// every input id is smaller than the id of the node consuming it.
///
/// Broadcasting is limited to add/sub of an (m x n) matrix with an (m x 1)
/// column, which covers bias addition.
///
/// Not thread-safe: one writer per tape.
class Tape {
 public:
  /// Differentiable leaf (a parameter).
  NodeId variable(Array value);
  /// Non-differentiable leaf (data, noise, selectors).
  NodeId constant(Array value);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId tanh(NodeId a);
  NodeId softplus(NodeId a);
  NodeId exp(NodeId a);
  NodeId neg(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId scale(NodeId a, double factor);
  /// axis 0 stacks rows, axis 1 stacks columns.
  NodeId concat(std::span<const NodeId> inputs, int axis);
  /// Rows [row_begin, row_end) and columns [col_begin, col_end).
  NodeId slice(NodeId a, std::size_t row_begin, std::size_t row_end, std::size_t col_begin,
               std::size_t col_end);
  NodeId squared_norm(NodeId a);

  const Array& value(NodeId id) const;
  Op op(NodeId id) const;
  std::span<const NodeId> inputs(NodeId id) const;
  bool requires_grad(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  /// Replace the value of a leaf; downstream values are stale until replay().
  void set_leaf_value(NodeId leaf, Array value);
  /// Recompute every non-leaf value from the current leaf values.
  void replay();

  Gradients backward(NodeId root) const;

 private:
  struct Node {
    Op op = Op::leaf;
    std::vector<NodeId> inputs;
    Array value;
    bool grad = false;
    double factor = 0.0;            // scale
    int axis = 0;                   // concat
    std::size_t r0 = 0, r1 = 0;     // slice
    std::size_t c0 = 0, c1 = 0;
  };

  NodeId push(Node node);
  void check_id(NodeId id, const char* what) const;
  Array forward(const Node& node) const;

  std::vector<Node> nodes_;
};

}  // namespace fdm::ad
