// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fdm/paths.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace fdm {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value at
/// effective size n_a n_b / (n_a + n_b).
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

struct ReportOptions {
  std::vector<std::size_t> eval_indices;  ///< empty: default_eval_indices(grid size)
  std::size_t batch_size = 128;
  std::size_t num_batches = 100;
  /// Held-out batches are drawn independently (distinct paths within a
  /// batch) instead of partitioning one permutation of the held-out set.
  bool with_replacement = false;
  double alpha = 0.05;
  std::size_t threads = 1;
};

struct KsCell {
  std::size_t time_index = 0;
  std::size_t dim = 0;
  double mean_statistic = 0.0;
  double rejection_pct = 0.0;
};

struct KsReport {
  std::vector<KsCell> cells;
  std::vector<std::size_t> eval_indices;
  std::size_t batch_size = 0;
  std::size_t num_batches = 0;
  bool with_replacement = false;

  double mean_statistic() const;
  double mean_rejection_pct() const;

  /// timestamp,dimension,mean_ks,rejection_pct
  void write_csv(const std::filesystem::path& path) const;
  void print_table(std::ostream& out) const;
};

/// {6, 19, 32, 44, 57} on a 64-point grid, scaled proportionally otherwise.
std::vector<std::size_t> default_eval_indices(std::size_t grid_size);

/// Produces generated batch `batch` with `count` paths.
using BatchSource = std::function<PathsBatch(std::size_t batch, std::size_t count)>;

/// Per evaluation index and output dimension, KS tests of fresh generated
/// batches against held-out batches. Throws std::out_of_range naming any
/// evaluation index outside the grid, and std::invalid_argument when the
/// held-out set is too small without replacement.
KsReport marginal_report(const BatchSource& generated, const PathsBatch& heldout,
                         const ReportOptions& options, std::uint64_t seed);

/// Same, drawing generated batches from a fixed pool with the held-out rules.
KsReport marginal_report(const PathsBatch& generated, const PathsBatch& heldout,
                         const ReportOptions& options, std::uint64_t seed);

/// Tidy CSV source,t,value_a,value_b with one row per path and timestamp,
/// real rows first. `timestamps` are grid indices.
void joint_scatter_export(const PathsBatch& generated, const PathsBatch& data,
                          std::size_t dim_a, std::size_t dim_b,
                          std::span<const std::size_t> timestamps,
                          const std::filesystem::path& out);

}  // namespace fdm
