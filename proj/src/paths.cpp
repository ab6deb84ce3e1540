// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/paths.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

namespace fdm {

PathsBatch::PathsBatch(std::vector<double> grid, std::size_t count, std::size_t dim)
    : grid_(std::move(grid)), count_(count), dim_(dim), values_(count_ * grid_.size() * dim_) {}

PathsBatch::PathsBatch(std::vector<double> grid, std::size_t count, std::size_t dim,
                       std::vector<double> values)
    : grid_(std::move(grid)), count_(count), dim_(dim), values_(std::move(values)) {
  if (values_.size() != count_ * grid_.size() * dim_) {
    throw std::invalid_argument(fmt::format(
        "PathsBatch: {} values for {} paths x {} times x {} dims", values_.size(), count_,
        grid_.size(), dim_));
  }
}

PathsBatch PathsBatch::select(std::span<const std::size_t> paths) const {
  PathsBatch out(grid_, paths.size(), dim_);
  const std::size_t stride = grid_.size() * dim_;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    if (paths[k] >= count_) {
      throw std::out_of_range(fmt::format("select: path {} of {}", paths[k], count_));
    }
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(paths[k] * stride), stride,
                out.values_.begin() + static_cast<std::ptrdiff_t>(k * stride));
  }
  return out;
}

void PathsBatch::append(const PathsBatch& other) {
  if (count_ == 0 && grid_.empty()) {
    *this = other;
    return;
  }
  if (other.grid_ != grid_ || other.dim_ != dim_) {
    throw std::invalid_argument("append: grid or dimension mismatch");
  }
  values_.insert(values_.end(), other.values_.begin(), other.values_.end());
  count_ += other.count_;
}

void PathsBatch::validate() const {
  for (std::size_t k = 1; k < grid_.size(); ++k) {
    if (!(grid_[k] > grid_[k - 1])) {
      throw std::invalid_argument(
          fmt::format("grid not strictly increasing at index {} ({} <= {})", k, grid_[k],
                      grid_[k - 1]));
    }
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      const std::size_t per_path = grid_.size() * dim_;
      throw std::invalid_argument(fmt::format("non-finite value at path {}, time index {}",
                                              i / per_path, (i % per_path) / dim_));
    }
  }
}

std::vector<double> uniform_grid(double horizon, std::size_t steps) {
  if (!(horizon > 0.0) || steps == 0) {
    throw std::invalid_argument(
        fmt::format("uniform_grid: need horizon > 0 and steps >= 1 (got {}, {})", horizon, steps));
  }
  std::vector<double> grid(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) {
    grid[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
  }
  return grid;
}

}  // namespace fdm
