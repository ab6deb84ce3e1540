// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fdm {

/// A batch of sampled trajectories sharing one time grid. Values are laid out
/// path-major: values[(path * grid_size + t) * dim + d].
class PathsBatch {
 public:
  PathsBatch() = default;
  PathsBatch(std::vector<double> grid, std::size_t count, std::size_t dim);
  PathsBatch(std::vector<double> grid, std::size_t count, std::size_t dim,
             std::vector<double> values);

  std::size_t count() const { return count_; }
  std::size_t dim() const { return dim_; }
  std::size_t grid_size() const { return grid_.size(); }
  std::span<const double> grid() const { return grid_; }

  double operator()(std::size_t path, std::size_t t, std::size_t d) const {
    return values_[(path * grid_.size() + t) * dim_ + d];
  }
  double& operator()(std::size_t path, std::size_t t, std::size_t d) {
    return values_[(path * grid_.size() + t) * dim_ + d];
  }

  /// Observation of one path at one grid index (length dim).
  std::span<const double> at(std::size_t path, std::size_t t) const {
    return std::span<const double>(values_).subspan((path * grid_.size() + t) * dim_, dim_);
  }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  /// New batch with the listed paths, in order.
  PathsBatch select(std::span<const std::size_t> paths) const;
  /// Append all paths of `other`; grids must match.
  void append(const PathsBatch& other);

  /// Strictly increasing grid and finite values; throws otherwise.
  void validate() const;

 private:
  std::vector<double> grid_;
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> values_;
};

/// 0 = t_0 < ... < t_steps = horizon, evenly spaced.
std::vector<double> uniform_grid(double horizon, std::size_t steps);

}  // namespace fdm
