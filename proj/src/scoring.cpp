// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/scoring.hpp"

#include "fdm/json_fields.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fdm {

using nlohmann::json;

namespace {

void check_batches(const PathsBatch& gen, const PathsBatch& data, std::size_t tuples) {
  if (gen.count() < 2) {
    throw std::invalid_argument(
        fmt::format("score: need at least 2 generated paths, got {}", gen.count()));
  }
  if (gen.count() != data.count() || tuples != data.count()) {
    throw std::invalid_argument(fmt::format(
        "score: batch sizes differ (generated {}, data {}, timestamp tuples {})", gen.count(),
        data.count(), tuples));
  }
  if (gen.dim() != data.dim()) {
    throw std::invalid_argument(
        fmt::format("score: dimension mismatch (generated {}, data {})", gen.dim(), data.dim()));
  }
  if (!std::equal(gen.grid().begin(), gen.grid().end(), data.grid().begin(), data.grid().end())) {
    throw std::invalid_argument("score: generated and data paths must share one grid");
  }
}

void check_tuple(std::span<const std::size_t> tuple, std::size_t grid_size) {
  if (tuple.size() < 2) {
    throw std::invalid_argument("score: each timestamp tuple needs at least two indices");
  }
  for (std::size_t a = 0; a < tuple.size(); ++a) {
    if (tuple[a] >= grid_size) {
      throw std::invalid_argument(
          fmt::format("score: grid index {} out of range (grid size {})", tuple[a], grid_size));
    }
    for (std::size_t b = 0; b < a; ++b) {
      if (tuple[a] == tuple[b]) {
        throw std::invalid_argument(
            fmt::format("score: repeated grid index {} in timestamp tuple", tuple[a]));
      }
    }
  }
}

std::vector<std::vector<std::size_t>> pairs_to_tuples(std::span<const TimestampPair> pairs) {
  std::vector<std::vector<std::size_t>> tuples;
  tuples.reserve(pairs.size());
  for (const TimestampPair& p : pairs) {
    tuples.push_back({p.first, p.second});
  }
  return tuples;
}

const char* estimator_name(Estimator e) {
  switch (e) {
    case Estimator::main: return "main";
    case Estimator::concat: return "concat";
    case Estimator::adjacent: return "adjacent";
  }
  return "main";
}

}  // namespace

double rbf_kernel(std::span<const double> x, std::span<const double> y, double gamma) {
  if (x.size() != y.size()) {
    throw std::invalid_argument(
        fmt::format("rbf_kernel: length mismatch {} vs {}", x.size(), y.size()));
  }
  double d2 = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - y[k];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

PairSampler PairSampler::weighted(std::size_t grid_size, std::vector<double> weights) {
  if (grid_size < 2) {
    throw std::invalid_argument("weighted sampler: grid needs at least two points");
  }
  if (weights.size() != grid_size * grid_size) {
    throw std::invalid_argument(fmt::format(
        "weighted sampler: {} weights for a {}-point grid (expected {})", weights.size(),
        grid_size, grid_size * grid_size));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < grid_size; ++i) {
    for (std::size_t j = 0; j < grid_size; ++j) {
      const double w = weights[i * grid_size + j];
      if (!std::isfinite(w) || w < 0.0) {
        throw std::invalid_argument(
            fmt::format("weighted sampler: weight ({}, {}) = {} is not a nonnegative number", i,
                        j, w));
      }
      if (i == j && w != 0.0) {
        throw std::invalid_argument(
            fmt::format("weighted sampler: diagonal pair ({}, {}) must carry zero weight", i, j));
      }
      total += w;
    }
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(
        fmt::format("weighted sampler: weights sum to {}, expected 1", total));
  }
  PairSampler s;
  s.grid_size_ = grid_size;
  s.weights_ = std::move(weights);
  s.cumulative_.resize(s.weights_.size());
  std::partial_sum(s.weights_.begin(), s.weights_.end(), s.cumulative_.begin());
  return s;
}

bool PairSampler::charges_every_pair() const {
  if (is_uniform()) {
    return true;
  }
  for (std::size_t i = 0; i < grid_size_; ++i) {
    for (std::size_t j = 0; j < grid_size_; ++j) {
      if (i != j && !(weights_[i * grid_size_ + j] > 0.0)) {
        return false;
      }
    }
  }
  return true;
}

double PairSampler::probability(std::size_t grid_size, TimestampPair pair) const {
  if (pair.first >= grid_size || pair.second >= grid_size || pair.first == pair.second) {
    return 0.0;
  }
  if (is_uniform()) {
    return 1.0 / static_cast<double>(grid_size * (grid_size - 1));
  }
  if (grid_size != grid_size_) {
    throw std::invalid_argument("weighted sampler: grid size differs from the weight matrix");
  }
  return weights_[pair.first * grid_size_ + pair.second];
}

std::vector<TimestampPair> PairSampler::sample(std::size_t grid_size, std::size_t count,
                                               Philox& rng) const {
  if (grid_size < 2) {
    throw std::invalid_argument(
        fmt::format("sample_pairs: grid has {} point(s); at least 2 required", grid_size));
  }
  if (!is_uniform() && grid_size != grid_size_) {
    throw std::invalid_argument(fmt::format(
        "sample_pairs: weighted sampler built for {} points, grid has {}", grid_size_, grid_size));
  }
  std::vector<TimestampPair> pairs(count);
  for (TimestampPair& p : pairs) {
    if (is_uniform()) {
      p.first = rng.index(grid_size);
      p.second = rng.index(grid_size - 1);
      if (p.second >= p.first) {
        ++p.second;
      }
    } else {
      const double u = rng.uniform() * cumulative_.back();
      auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
      std::size_t k = static_cast<std::size_t>(std::distance(cumulative_.begin(), it));
      k = std::min(k, cumulative_.size() - 1);
      // Skip zero-weight cells that share a cumulative value with their successor.
      while (weights_[k] == 0.0 && k + 1 < weights_.size()) {
        ++k;
      }
      p.first = k / grid_size_;
      p.second = k % grid_size_;
    }
  }
  return pairs;
}

void ScoreConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw std::invalid_argument(fmt::format("score.gamma: must be > 0, got {}", gamma));
  }
  if (estimator == Estimator::concat && concat_count < 2) {
    throw std::invalid_argument("score.concat_count: must be >= 2");
  }
  if (!sampler.charges_every_pair()) {
    throw std::invalid_argument(
        "score.weights: every off-diagonal pair needs strictly positive weight");
  }
}

void to_json(json& j, const ScoreConfig& c) {
  j = json{{"gamma", c.gamma},
           {"estimator", estimator_name(c.estimator)},
           {"concat_count", c.concat_count},
           {"sampler", c.sampler.is_uniform() ? "uniform" : "weighted"}};
  if (!c.sampler.is_uniform()) {
    const std::size_t m = c.sampler.grid_size();
    json rows = json::array();
    for (std::size_t i = 0; i < m; ++i) {
      rows.push_back(std::vector<double>(c.sampler.weights().begin() + static_cast<long>(i * m),
                                         c.sampler.weights().begin() + static_cast<long>((i + 1) * m)));
    }
    j["weights"] = rows;
  }
}

void from_json(const json& j, ScoreConfig& c) {
  constexpr std::string_view s = "score";
  reject_unknown_keys(j, {"gamma", "estimator", "concat_count", "sampler", "weights"}, s);
  read_field(j, "gamma", s, c.gamma);
  read_field(j, "concat_count", s, c.concat_count);
  std::string est = estimator_name(c.estimator);
  read_field(j, "estimator", s, est);
  if (est == "main") {
    c.estimator = Estimator::main;
  } else if (est == "concat") {
    c.estimator = Estimator::concat;
  } else if (est == "adjacent") {
    c.estimator = Estimator::adjacent;
  } else {
    throw ConfigError(
        fmt::format("score.estimator: expected main, concat or adjacent, got '{}'", est));
  }
  std::string sampler = c.sampler.is_uniform() ? "uniform" : "weighted";
  read_field(j, "sampler", s, sampler);
  if (sampler == "uniform") {
    if (j.contains("weights")) {
      throw ConfigError("score.weights: only valid with sampler = weighted");
    }
    c.sampler = PairSampler::uniform();
  } else if (sampler == "weighted") {
    std::vector<std::vector<double>> rows;
    read_field(j, "weights", s, rows);
    if (rows.empty()) {
      throw ConfigError("score.weights: required for sampler = weighted");
    }
    std::vector<double> flat;
    for (const auto& row : rows) {
      if (row.size() != rows.size()) {
        throw ConfigError("score.weights: must be a square matrix");
      }
      flat.insert(flat.end(), row.begin(), row.end());
    }
    try {
      c.sampler = PairSampler::weighted(rows.size(), std::move(flat));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(fmt::format("score.weights: {}", e.what()));
    }
  } else {
    throw ConfigError(
        fmt::format("score.sampler: expected uniform or weighted, got '{}'", sampler));
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<std::vector<std::size_t>> sample_tuples(std::size_t grid_size, std::size_t count,
                                                    std::size_t tuple_size, Philox& rng) {
  if (tuple_size < 2 || tuple_size > grid_size) {
    throw std::invalid_argument(fmt::format(
        "sample_tuples: tuple size {} invalid for a {}-point grid", tuple_size, grid_size));
  }
  std::vector<std::vector<std::size_t>> tuples(count);
  std::vector<std::size_t> perm(grid_size);
  for (auto& tuple : tuples) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t k = 0; k < tuple_size; ++k) {
      std::swap(perm[k], perm[k + rng.index(grid_size - k)]);
    }
    tuple.assign(perm.begin(), perm.begin() + static_cast<long>(tuple_size));
  }
  return tuples;
}

ScoreTerms score_terms(const PathsBatch& gen, const PathsBatch& data,
                       std::span<const std::vector<std::size_t>> tuples, double gamma) {
  check_batches(gen, data, tuples.size());
  const std::size_t b = gen.count();
  const std::size_t d = gen.dim();
  double self_sum = 0.0;
  double cross_sum = 0.0;
  for (std::size_t j = 0; j < b; ++j) {
    const auto& tuple = tuples[j];
    check_tuple(tuple, gen.grid_size());
    for (std::size_t i = 0; i < b; ++i) {
      double d_self = 0.0;
      double d_cross = 0.0;
      for (std::size_t t : tuple) {
        for (std::size_t k = 0; k < d; ++k) {
          const double x = gen(i, t, k);
          const double e1 = x - gen(j, t, k);
          const double e2 = x - data(j, t, k);
          d_self += e1 * e1;
          d_cross += e2 * e2;
        }
      }
      if (i != j) {
        self_sum += std::exp(-gamma * d_self);
      }
      cross_sum += std::exp(-gamma * d_cross);
    }
  }
  const double bd = static_cast<double>(b);
  return {self_sum / (2.0 * bd * (bd - 1.0)), cross_sum / (bd * bd)};
}

double score_main(const PathsBatch& gen, const PathsBatch& data,
                  std::span<const TimestampPair> pairs, double gamma) {
  const auto tuples = pairs_to_tuples(pairs);
  return score_terms(gen, data, tuples, gamma).value();
}

double score_concat(const PathsBatch& gen, const PathsBatch& data,
                    std::span<const std::vector<std::size_t>> tuples, double gamma) {
  return score_terms(gen, data, tuples, gamma).value();
}

double score_adjacent(const PathsBatch& gen, const PathsBatch& data, double gamma) {
  const std::size_t m = gen.grid_size();
  if (m < 2) {
    throw std::invalid_argument("score_adjacent: grid needs at least two points");
  }
  double total = 0.0;
  for (std::size_t t = 0; t + 1 < m; ++t) {
    const std::vector<TimestampPair> pairs(data.count(), TimestampPair{t, t + 1});
    total += score_main(gen, data, pairs, gamma);
  }
  return total / static_cast<double>(m - 1);
}

ad::NodeId record_score_concat(ad::Tape& tape, std::span<const ad::NodeId> gen,
                               const PathsBatch& data,
                               std::span<const std::vector<std::size_t>> tuples, double gamma) {
  if (gen.size() != data.grid_size()) {
    throw std::invalid_argument(fmt::format(
        "score: {} generated time nodes for a {}-point data grid", gen.size(), data.grid_size()));
  }
  const ad::Array& first = tape.value(gen.front());
  const std::size_t b = first.cols();
  const std::size_t d = first.rows();
  if (b < 2) {
    throw std::invalid_argument(fmt::format("score: need at least 2 generated paths, got {}", b));
  }
  if (b != data.count() || tuples.size() != b) {
    throw std::invalid_argument(fmt::format(
        "score: batch sizes differ (generated {}, data {}, timestamp tuples {})", b, data.count(),
        tuples.size()));
  }
  if (d != data.dim()) {
    throw std::invalid_argument(
        fmt::format("score: dimension mismatch (generated {}, data {})", d, data.dim()));
  }

  std::vector<ad::NodeId> ones_by_size;
  auto ones_row = [&](std::size_t n) {
    if (ones_by_size.size() <= n) {
      ones_by_size.resize(n + 1, static_cast<ad::NodeId>(-1));
    }
    if (ones_by_size[n] == static_cast<ad::NodeId>(-1)) {
      ones_by_size[n] = tape.constant(ad::Array(1, n, 1.0));
    }
    return ones_by_size[n];
  };

  // Sum over columns i of exp(-gamma |F[:, i] - center|^2).
  auto kernel_row_sum = [&](ad::NodeId features, ad::NodeId center, std::size_t rows) {
    const ad::NodeId diff = tape.sub(features, center);
    const ad::NodeId dist = tape.matmul(ones_row(rows), tape.mul(diff, diff));
    return tape.sum(tape.exp(tape.scale(dist, -gamma)));
  };

  std::vector<ad::NodeId> self_terms;
  std::vector<ad::NodeId> cross_terms;
  self_terms.reserve(b);
  cross_terms.reserve(b);
  std::vector<ad::NodeId> parts;
  for (std::size_t j = 0; j < b; ++j) {
    const auto& tuple = tuples[j];
    check_tuple(tuple, data.grid_size());
    parts.clear();
    ad::Array target(tuple.size() * d, 1);
    for (std::size_t a = 0; a < tuple.size(); ++a) {
      parts.push_back(gen[tuple[a]]);
      for (std::size_t k = 0; k < d; ++k) {
        target(a * d + k, 0) = data(j, tuple[a], k);
      }
    }
    const std::size_t rows = tuple.size() * d;
    const ad::NodeId features = parts.size() == 1 ? parts[0] : tape.concat(parts, 0);
    const ad::NodeId own = tape.slice(features, 0, rows, j, j + 1);
    // The i = j column contributes exp(0) = 1 exactly; it is removed below.
    self_terms.push_back(kernel_row_sum(features, own, rows));
    cross_terms.push_back(kernel_row_sum(features, tape.constant(std::move(target)), rows));
  }

  auto total = [&](const std::vector<ad::NodeId>& terms) {
    ad::NodeId acc = terms[0];
    for (std::size_t k = 1; k < terms.size(); ++k) {
      acc = tape.add(acc, terms[k]);
    }
    return acc;
  };
  const double bd = static_cast<double>(b);
  const ad::NodeId self_sum =
      tape.sub(total(self_terms), tape.constant(ad::Array::scalar(bd)));
  const ad::NodeId first_term = tape.scale(self_sum, 1.0 / (2.0 * bd * (bd - 1.0)));
  const ad::NodeId second_term = tape.scale(total(cross_terms), 1.0 / (bd * bd));
  return tape.sub(first_term, second_term);
}

ad::NodeId record_score_main(ad::Tape& tape, std::span<const ad::NodeId> gen,
                             const PathsBatch& data, std::span<const TimestampPair> pairs,
                             double gamma) {
  const auto tuples = pairs_to_tuples(pairs);
  return record_score_concat(tape, gen, data, tuples, gamma);
}

ad::NodeId record_score_adjacent(ad::Tape& tape, std::span<const ad::NodeId> gen,
                                 const PathsBatch& data, double gamma) {
  const std::size_t m = data.grid_size();
  if (m < 2) {
    throw std::invalid_argument("score_adjacent: grid needs at least two points");
  }
  ad::NodeId acc = 0;
  for (std::size_t t = 0; t + 1 < m; ++t) {
    const std::vector<TimestampPair> pairs(data.count(), TimestampPair{t, t + 1});
    const ad::NodeId s = record_score_main(tape, gen, data, pairs, gamma);
    acc = t == 0 ? s : tape.add(acc, s);
  }
  return tape.scale(acc, 1.0 / static_cast<double>(m - 1));
}

double expected_rbf_gaussian(std::span<const double> mean, std::span<const double> cov,
                             std::span<const double> z, double gamma) {
  const std::size_t n = mean.size();
  if (z.size() != n || cov.size() != n * n) {
    throw std::invalid_argument(fmt::format(
        "expected_rbf_gaussian: mean {}, z {}, cov {} entries are inconsistent", n, z.size(),
        cov.size()));
  }
  if (!(gamma > 0.0)) {
    throw std::invalid_argument("expected_rbf_gaussian: gamma must be > 0");
  }
  const auto dim = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd sigma(dim, dim);
  double scale = 0.0;
  for (Eigen::Index r = 0; r < dim; ++r) {
    for (Eigen::Index c = 0; c < dim; ++c) {
      sigma(r, c) = cov[static_cast<std::size_t>(r * dim + c)];
      scale = std::max(scale, std::abs(sigma(r, c)));
    }
  }
  const double tol = 1e-12 * std::max(1.0, scale);
  if (n > 0 && (sigma - sigma.transpose()).cwiseAbs().maxCoeff() > tol) {
    throw std::invalid_argument("expected_rbf_gaussian: covariance is not symmetric");
  }
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, scale)) {
      throw std::invalid_argument(fmt::format(
          "expected_rbf_gaussian: covariance is not positive semidefinite (min eigenvalue {})",
          eig.eigenvalues().minCoeff()));
    }
  }
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(dim, dim) + 2.0 * gamma * sigma;
  const Eigen::LLT<Eigen::MatrixXd> llt(m);
  Eigen::VectorXd diff(dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    diff(k) = z[static_cast<std::size_t>(k)] - mean[static_cast<std::size_t>(k)];
  }
  const double quad = diff.dot(llt.solve(diff));
  double log_det = 0.0;
  for (Eigen::Index k = 0; k < dim; ++k) {
    log_det += 2.0 * std::log(llt.matrixL()(k, k));
  }
  return std::exp(-0.5 * log_det - gamma * quad);
}

}  // namespace fdm
