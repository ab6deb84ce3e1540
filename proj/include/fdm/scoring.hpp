// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fdm/autodiff.hpp"
#include "fdm/paths.hpp"
#include "fdm/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstddef>
#include <span>
#include <vector>

namespace fdm {

/// k(x, y) = exp(-gamma * |x - y|^2).
double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma);

struct TimestampPair {
  std::size_t first = 0;
  std::size_t second = 0;
  friend bool operator==(const TimestampPair&, const TimestampPair&) = default;
};

/// Law of the evaluation timestamps over ordered pairs of distinct grid
/// indices. Uniform, or a weight matrix (grid_size x grid_size, zero
/// diagonal, entries summing to one).
class PairSampler {
 public:
  PairSampler() = default;
  static PairSampler uniform() { return PairSampler(); }
  /// Row-major weights[i * grid_size + j] for the pair (i, j). Throws on a
  /// non-square size, negative or non-finite entries, mass on the diagonal,
  /// or a total that is not 1 (tolerance 1e-9).
  static PairSampler weighted(std::size_t grid_size, std::vector<double> weights);

  bool is_uniform() const { return weights_.empty(); }
  std::size_t grid_size() const { return grid_size_; }
  std::span<const double> weights() const { return weights_; }
  /// True when every off-diagonal weight is strictly positive, i.e. the
  /// sampling law charges every pair, as properness requires.
  bool charges_every_pair() const;

  /// Probability of drawing (i, j) on a grid with `grid_size` points.
  double probability(std::size_t grid_size, TimestampPair pair) const;

  /// B independent pairs; throws when grid_size < 2 or when a weighted
  /// sampler was built for a different grid.
  std::vector<TimestampPair> sample(std::size_t grid_size, std::size_t count, Philox& rng) const;

 private:
  std::size_t grid_size_ = 0;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
};

enum class Estimator { main, concat, adjacent };

struct ScoreConfig {
  double gamma = 1.0;
  Estimator estimator = Estimator::main;
  std::size_t concat_count = 3;
  PairSampler sampler;

  void validate() const;
};

void to_json(nlohmann::json& j, const ScoreConfig& config);
void from_json(const nlohmann::json& j, ScoreConfig& config);

/// Per-path tuples of N distinct grid indices, drawn uniformly.
std::vector<std::vector<std::size_t>> sample_tuples(std::size_t grid_size, std::size_t count,
                                                    std::size_t tuple_size, Philox& rng);

/// Empirical score with timestamp pairs indexed by data path j:
///   1/(2B(B-1)) sum_{i != j} k([x^i_{t_j}, x^i_{t'_j}], [x^j_{t_j}, x^j_{t'_j}])
///   - 1/B^2 sum_{i, j} k([x^i_{t_j}, x^i_{t'_j}], [y^j_{t_j}, y^j_{t'_j}])
double score_main(const PathsBatch& gen, const PathsBatch& data,
                  std::span<const TimestampPair> pairs, double gamma);

/// Same double sum with N observations concatenated per path.
double score_concat(const PathsBatch& gen, const PathsBatch& data,
                    std::span<const std::vector<std::size_t>> tuples, double gamma);

/// Average of score_main over the M - 1 adjacent grid pairs, each pair used
/// for every path.
double score_adjacent(const PathsBatch& gen, const PathsBatch& data, double gamma);

/// First (generator-generator) and second (generator-data) terms of the
/// tuple estimator, before subtraction. score = first - second.
struct ScoreTerms {
  double first = 0.0;
  double second = 0.0;
  double value() const { return first - second; }
};
ScoreTerms score_terms(const PathsBatch& gen, const PathsBatch& data,
                       std::span<const std::vector<std::size_t>> tuples, double gamma);

// Tape-recorded variants. `gen` holds one d_x x B node per grid index (as
// produced by record_simulation); the returned node is the scalar score.

ad::NodeId record_score_main(ad::Tape& tape, std::span<const ad::NodeId> gen,
                             const PathsBatch& data, std::span<const TimestampPair> pairs,
                             double gamma);
ad::NodeId record_score_concat(ad::Tape& tape, std::span<const ad::NodeId> gen,
                               const PathsBatch& data,
                               std::span<const std::vector<std::size_t>> tuples, double gamma);
ad::NodeId record_score_adjacent(ad::Tape& tape, std::span<const ad::NodeId> gen,
                                 const PathsBatch& data, double gamma);

/// E_{X ~ N(mean, cov)} exp(-gamma |X - z|^2)
///   = det(I + 2 gamma cov)^{-1/2} exp(-gamma (z - mean)^T (I + 2 gamma cov)^{-1} (z - mean)).
/// `cov` is row-major n x n; throws unless symmetric positive semidefinite.
double expected_rbf_gaussian(std::span<const double> mean, std::span<const double> cov,
                             std::span<const double> z, double gamma);

}  // namespace fdm
