// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "gradcheck.hpp"

#include "fdm/paths.hpp"
#include "fdm/processes.hpp"
#include "fdm/scoring.hpp"
#include "fdm/verify.hpp"

#include <cmath>
#include <map>

using namespace fdm;

namespace {

PathsBatch random_paths(std::size_t count, std::size_t grid_size, std::size_t dim,
                        std::uint64_t seed, double spread = 1.0) {
  PathsBatch b(uniform_grid(1.0, grid_size - 1), count, dim);
  Philox rng(seed);
  for (double& v : b.values()) v = spread * (2.0 * rng.uniform() - 1.0);
  return b;
}

PathsBatch constant_paths(std::span<const double> levels, std::size_t grid_size) {
  PathsBatch b(uniform_grid(1.0, grid_size - 1), levels.size(), 1);
  for (std::size_t p = 0; p < levels.size(); ++p) {
    for (std::size_t t = 0; t < grid_size; ++t) b(p, t, 0) = levels[p];
  }
  return b;
}

// Independent reference: gathers the feature vector of path p at `times`
// and evaluates both double sums with plain loops.
std::vector<double> features(const PathsBatch& b, std::size_t p,
                             const std::vector<std::size_t>& times) {
  std::vector<double> out;
  for (std::size_t t : times) {
    for (std::size_t d = 0; d < b.dim(); ++d) out.push_back(b(p, t, d));
  }
  return out;
}

double kernel(const std::vector<double>& a, const std::vector<double>& b, double gamma) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::exp(-gamma * s);
}

double brute_force(const PathsBatch& gen, const PathsBatch& data,
                   const std::vector<std::vector<std::size_t>>& tuples, double gamma) {
  const std::size_t n = gen.count();
  double first = 0.0, second = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto xi = features(gen, i, tuples[j]);
      if (i != j) first += kernel(xi, features(gen, j, tuples[j]), gamma);
      second += kernel(xi, features(data, j, tuples[j]), gamma);
    }
  }
  const double b = static_cast<double>(n);
  return first / (2.0 * b * (b - 1.0)) - second / (b * b);
}

std::vector<std::vector<std::size_t>> as_tuples(std::span<const TimestampPair> pairs) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& p : pairs) out.push_back({p.first, p.second});
  return out;
}

}  // namespace

TEST_CASE("rbf kernel values") {
  const std::vector<double> x{0.3, -1.2};
  CHECK(rbf_kernel(x, x, 2.0) == 1.0);
  const std::vector<double> a{0.0}, b{1.0};
  CHECK(rbf_kernel(a, b, 1.0) == doctest::Approx(0.367879441171).epsilon(1e-12));
  double previous = 1.0;
  for (double gamma : {0.5, 1.0, 4.0, 16.0, 64.0}) {
    const double k = rbf_kernel(a, b, gamma);
    CHECK(k < previous);
    previous = k;
  }
  CHECK(previous < 1e-20);
  const std::vector<double> longer{0.0, 1.0};
  CHECK_THROWS_AS(rbf_kernel(a, longer, 1.0), std::invalid_argument);
}

TEST_CASE("pair sampler support and frequencies") {
  Philox rng(1);
  SUBCASE("two-point grid") {
    for (const auto& p : PairSampler::uniform().sample(2, 500, rng)) {
      CHECK(((p.first == 0 && p.second == 1) || (p.first == 1 && p.second == 0)));
    }
  }
  SUBCASE("degenerate grid is rejected") {
    CHECK_THROWS_AS(PairSampler::uniform().sample(1, 3, rng), std::invalid_argument);
  }
  SUBCASE("uniform over 56 ordered pairs") {
    const std::size_t n = 100000;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> counts;
    for (const auto& p : PairSampler::uniform().sample(8, n, rng)) {
      REQUIRE(p.first != p.second);
      ++counts[{p.first, p.second}];
    }
    CHECK(counts.size() == 56);
    const double prob = 1.0 / 56.0;
    const double sd = std::sqrt(n * prob * (1.0 - prob));
    for (const auto& [pair, c] : counts) {
      CHECK(std::abs(static_cast<double>(c) - n * prob) < 5.0 * sd);
    }
  }
  SUBCASE("all weight on one pair") {
    std::vector<double> w(64, 0.0);
    w[2 * 8 + 5] = 1.0;
    const PairSampler s = PairSampler::weighted(8, w);
    CHECK_FALSE(s.charges_every_pair());
    for (const auto& p : s.sample(8, 1000, rng)) {
      CHECK(p.first == 2);
      CHECK(p.second == 5);
    }
  }
  SUBCASE("invalid weights") {
    std::vector<double> w(9, 1.0 / 6.0);
    CHECK_THROWS_AS(PairSampler::weighted(3, w), std::invalid_argument);  // diagonal mass
    w = std::vector<double>(9, 0.0);
    w[1] = 0.5;
    CHECK_THROWS_AS(PairSampler::weighted(3, w), std::invalid_argument);  // total 0.5
    CHECK_THROWS_AS(PairSampler::weighted(4, w), std::invalid_argument);  // wrong size
  }
}

TEST_CASE("score config requires a pair law charging every pair") {
  ScoreConfig c;
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ScoreConfig{};
  std::vector<double> w(9, 0.0);
  w[1] = 1.0;
  c.sampler = PairSampler::weighted(3, w);
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = ScoreConfig{};
  c.estimator = Estimator::concat;
  c.concat_count = 1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("identical constant paths score exactly -1/2") {
  const std::vector<double> levels(6, 0.7);
  const PathsBatch x = constant_paths(levels, 5);
  Philox rng(3);
  const auto pairs = PairSampler::uniform().sample(5, 6, rng);
  CHECK(score_main(x, x, pairs, 1.0) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(score_concat(x, x, sample_tuples(5, 6, 3, rng), 1.0) ==
        doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(score_adjacent(x, x, 1.0) == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("hand-evaluated two-path instance") {
  const std::vector<double> levels{0.0, 1.0};
  const PathsBatch x = constant_paths(levels, 4);
  Philox rng(4);
  const auto pairs = PairSampler::uniform().sample(4, 2, rng);
  const ScoreTerms terms = score_terms(x, x, as_tuples(pairs), 1.0);
  CHECK(terms.first == doctest::Approx(std::exp(-2.0) / 2.0).epsilon(1e-14));
  CHECK(terms.second == doctest::Approx((1.0 + std::exp(-2.0)) / 2.0).epsilon(1e-14));
  CHECK(score_main(x, x, pairs, 1.0) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(brute_force(x, x, as_tuples(pairs), 1.0) == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("distant paths score approach zero from below") {
  const std::vector<double> gen_levels{100.0, 200.0, 300.0};
  const std::vector<double> data_levels{-100.0, -200.0, -300.0};
  const PathsBatch g = constant_paths(gen_levels, 3);
  const PathsBatch y = constant_paths(data_levels, 3);
  Philox rng(5);
  const double s = score_main(g, y, PairSampler::uniform().sample(3, 3, rng), 1.0);
  CHECK(s <= 0.0);
  CHECK(s > -1e-12);
}

TEST_CASE("batch of one is rejected") {
  const PathsBatch x = random_paths(1, 4, 1, 1);
  const std::vector<TimestampPair> pairs{{0, 1}};
  CHECK_THROWS_AS(score_main(x, x, pairs, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(score_adjacent(x, x, 1.0), std::invalid_argument);
}

TEST_CASE("estimators match brute-force loops") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CAPTURE(seed);
    Philox rng(seed + 100);
    {  // main
      const PathsBatch g = random_paths(5, 6, 2, seed);
      const PathsBatch y = random_paths(5, 6, 2, seed + 50);
      const auto pairs = PairSampler::uniform().sample(6, 5, rng);
      CHECK(std::abs(score_main(g, y, pairs, 0.8) - brute_force(g, y, as_tuples(pairs), 0.8)) <
            1e-12);
      CHECK(score_concat(g, y, as_tuples(pairs), 0.8) == score_main(g, y, pairs, 0.8));
    }
    {  // concat, B = 3, N = 3
      const PathsBatch g = random_paths(3, 7, 1, seed + 7);
      const PathsBatch y = random_paths(3, 7, 1, seed + 8);
      const auto tuples = sample_tuples(7, 3, 3, rng);
      for (const auto& t : tuples) {
        CHECK(t.size() == 3);
        CHECK(t[0] != t[1]);
        CHECK(t[1] != t[2]);
        CHECK(t[0] != t[2]);
      }
      CHECK(std::abs(score_concat(g, y, tuples, 1.0) - brute_force(g, y, tuples, 1.0)) < 1e-12);
    }
    {  // adjacent, B = 3, M = 4
      const PathsBatch g = random_paths(3, 4, 1, seed + 11);
      const PathsBatch y = random_paths(3, 4, 1, seed + 12);
      double expected = 0.0;
      for (std::size_t m = 0; m + 1 < 4; ++m) {
        const std::vector<std::vector<std::size_t>> same(3, {m, m + 1});
        expected += brute_force(g, y, same, 1.0);
      }
      expected /= 3.0;
      CHECK(std::abs(score_adjacent(g, y, 1.0) - expected) < 1e-12);
    }
  }
}

TEST_CASE("adjacent estimator on a two-point grid is the main estimator") {
  const PathsBatch g = random_paths(4, 2, 1, 1);
  const PathsBatch y = random_paths(4, 2, 1, 2);
  const std::vector<TimestampPair> pairs(4, TimestampPair{0, 1});
  CHECK(score_adjacent(g, y, 1.0) == doctest::Approx(score_main(g, y, pairs, 1.0)).epsilon(1e-15));
}

TEST_CASE("score is below 1/2 on randomized inputs") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Philox rng(seed);
    const std::size_t b = 2 + rng.index(6);
    const PathsBatch g = random_paths(b, 5, 1 + rng.index(2), seed, 0.01 + 3.0 * rng.uniform());
    const PathsBatch y = random_paths(b, 5, g.dim(), seed + 1000, 0.01 + 3.0 * rng.uniform());
    const auto pairs = PairSampler::uniform().sample(5, b, rng);
    const ScoreTerms t = score_terms(g, y, as_tuples(pairs), 0.1 + rng.uniform());
    CHECK(t.first > 0.0);
    CHECK(t.first <= 0.5);
    CHECK(t.second > 0.0);
    CHECK(t.second <= 1.0);
    CHECK(t.value() < 0.5);
  }
}

TEST_CASE("symmetry of the estimator terms") {
  const PathsBatch g = random_paths(5, 6, 1, 1);
  const PathsBatch y = random_paths(5, 6, 1, 2);
  Philox rng(9);
  const auto tuples = as_tuples(PairSampler::uniform().sample(6, 5, rng));
  const ScoreTerms base = score_terms(g, y, tuples, 1.0);

  // First term: relabeling generated paths leaves it unchanged when the
  // timestamp draws are shared by every path.
  const std::vector<std::vector<std::size_t>> shared(5, tuples[0]);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  CHECK(score_terms(g.select(perm), y, shared, 1.0).first ==
        doctest::Approx(score_terms(g, y, shared, 1.0).first).epsilon(1e-14));

  // Second term: permuting data paths together with their tuples.
  std::vector<std::vector<std::size_t>> moved;
  for (std::size_t k : perm) moved.push_back(tuples[k]);
  CHECK(score_terms(g, y.select(perm), moved, 1.0).second ==
        doctest::Approx(base.second).epsilon(1e-14));
}

TEST_CASE("taped estimators equal the plain ones and pass gradcheck") {
  const PathsBatch y = random_paths(4, 5, 2, 77);
  const PathsBatch g0 = random_paths(4, 5, 2, 78);
  Philox rng(10);
  const auto pairs = PairSampler::uniform().sample(5, 4, rng);
  const auto tuples = sample_tuples(5, 4, 3, rng);

  auto leaves_of = [&](const PathsBatch& b) {
    std::vector<ad::Array> out;
    for (std::size_t t = 0; t < b.grid_size(); ++t) {
      ad::Array a(b.dim(), b.count());
      for (std::size_t p = 0; p < b.count(); ++p) {
        for (std::size_t d = 0; d < b.dim(); ++d) a(d, p) = b(p, t, d);
      }
      out.push_back(a);
    }
    return out;
  };
  const auto leaves = leaves_of(g0);

  testing::Recorder main_rec = [&](ad::Tape& t, const std::vector<ad::NodeId>& x) {
    return record_score_main(t, x, y, pairs, 0.9);
  };
  testing::Recorder concat_rec = [&](ad::Tape& t, const std::vector<ad::NodeId>& x) {
    return record_score_concat(t, x, y, tuples, 0.9);
  };
  testing::Recorder adjacent_rec = [&](ad::Tape& t, const std::vector<ad::NodeId>& x) {
    return record_score_adjacent(t, x, y, 0.9);
  };
  CHECK(testing::evaluate(main_rec, leaves) ==
        doctest::Approx(score_main(g0, y, pairs, 0.9)).epsilon(1e-13));
  CHECK(testing::evaluate(concat_rec, leaves) ==
        doctest::Approx(score_concat(g0, y, tuples, 0.9)).epsilon(1e-13));
  CHECK(testing::evaluate(adjacent_rec, leaves) ==
        doctest::Approx(score_adjacent(g0, y, 0.9)).epsilon(1e-13));
  CHECK(testing::gradcheck(main_rec, leaves).worst < 1e-4);
  CHECK(testing::gradcheck(concat_rec, leaves).worst < 1e-4);
  CHECK(testing::gradcheck(adjacent_rec, leaves).worst < 1e-4);
}

TEST_CASE("Gaussian kernel expectation") {
  const std::vector<double> zero1{0.0};
  SUBCASE("degenerate covariance is the kernel") {
    const std::vector<double> mean{0.4, -0.3}, z{1.0, 0.5}, cov(4, 0.0);
    CHECK(expected_rbf_gaussian(mean, cov, z, 1.3) ==
          doctest::Approx(rbf_kernel(mean, z, 1.3)).epsilon(1e-14));
  }
  SUBCASE("standard normal at gamma 1 is 1/sqrt(3), confirmed by Monte Carlo") {
    const std::vector<double> cov{1.0};
    const double closed = expected_rbf_gaussian(zero1, cov, zero1, 1.0);
    CHECK(closed == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-14));
    Philox rng(12);
    const std::size_t n = 1000000;
    double s = 0.0, s2 = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double x = rng.normal();
      const double v = std::exp(-x * x);
      s += v;
      s2 += v * v;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean - closed) < 3.0 * se);
  }
  SUBCASE("vanishing bandwidth") {
    const std::vector<double> mean{2.0}, cov{3.0};
    CHECK(expected_rbf_gaussian(mean, cov, zero1, 1e-12) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("non-PSD covariance is rejected") {
    const std::vector<double> mean{0.0, 0.0}, cov{1.0, 2.0, 2.0, 1.0};
    CHECK_THROWS_AS(expected_rbf_gaussian(mean, cov, mean, 1.0), std::invalid_argument);
    const std::vector<double> asym{1.0, 0.5, 0.0, 1.0};
    CHECK_THROWS_AS(expected_rbf_gaussian(mean, asym, mean, 1.0), std::invalid_argument);
  }
}

TEST_CASE("estimator is unbiased for Brownian generator and data") {
  const auto grid = uniform_grid(1.0, 15);
  const ReferenceProcess gen = ReferenceProcess::brownian(0.0, 1.0);
  const ReferenceProcess data = ReferenceProcess::brownian(0.2, 0.8);
  const double expected = analytic_expected_score(gen, data, grid, PairSampler::uniform(), 1.0);
  const std::size_t trials = 2000;
  double s = 0.0, s2 = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const double v = reference_score(gen, data, grid, 32, 1.0, 99, t);
    s += v;
    s2 += v * v;
  }
  const double mean = s / trials;
  const double se = std::sqrt((s2 / trials - mean * mean) / trials);
  CAPTURE(expected);
  CAPTURE(mean);
  CHECK(std::abs(mean - expected) < 3.0 * se);
}
