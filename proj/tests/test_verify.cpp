// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "fdm/verify.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

using namespace fdm;

TEST_CASE("concentration bound values") {
  CHECK(concentration_bound(128, 0.05) ==
        doctest::Approx(std::sqrt(47.0 * std::log(40.0) / 1024.0)).epsilon(1e-14));
  CHECK(concentration_bound(128, 0.05) == doctest::Approx(0.4116).epsilon(1e-3));
  for (std::size_t b : {8u, 32u, 100u, 512u}) {
    CHECK(concentration_bound(2 * b, 0.05) / concentration_bound(b, 0.05) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-14));
    CHECK(concentration_bound(b, 0.05) > concentration_bound(2 * b, 0.05));
  }
  CHECK(concentration_bound(64, 0.05, 2.0) == doctest::Approx(2.0 * concentration_bound(64, 0.05)));
  CHECK_THROWS_AS(concentration_bound(1, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(concentration_bound(10, 1.5), std::invalid_argument);
}

TEST_CASE("through-origin fit") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{2, 4, 6, 8};
  const OriginFit exact = fit_through_origin(x, y);
  CHECK(exact.slope == doctest::Approx(2.0));
  CHECK(exact.r_squared == doctest::Approx(1.0));
  const std::vector<double> flat{1, 1, 1, 1};
  const OriginFit f = fit_through_origin(x, flat);
  CHECK(f.slope == doctest::Approx(10.0 / 30.0));
  CHECK(f.r_squared < 1.0);
}

TEST_CASE("bootstrap interval brackets the sample mean and is seeded") {
  Philox rng(1);
  std::vector<double> v(300);
  for (double& x : v) x = rng.normal() + 2.0;
  const Interval a = bootstrap_mean_ci(v, 0.99, 2000, 5);
  const Interval b = bootstrap_mean_ci(v, 0.99, 2000, 5);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= 300.0;
  CHECK(a.lower < mean);
  CHECK(a.upper > mean);
  CHECK(a.lower == b.lower);
  CHECK(a.upper == b.upper);
  // Width close to 2 * 2.576 * sd / sqrt(n) with sd near 1.
  CHECK(a.upper - a.lower == doctest::Approx(2.0 * 2.576 / std::sqrt(300.0)).epsilon(0.2));
}

TEST_CASE("analytic expected score") {
  const auto grid = uniform_grid(1.0, 7);
  const ReferenceProcess bm = ReferenceProcess::brownian(0.0, 1.0);
  const double matched = analytic_expected_score(bm, bm, grid, PairSampler::uniform(), 1.0);
  const double shifted = analytic_expected_score(ReferenceProcess::brownian(0.5, 1.0), bm, grid,
                                                 PairSampler::uniform(), 1.0);
  // The estimator is lower-is-better: a matching generator attains the minimum.
  CHECK(matched < shifted);
  CHECK(matched < 0.0);
  CHECK(matched > -0.5);

  // Independent coordinates factorize the kernel expectation.
  const double two_dim = analytic_expected_score(ReferenceProcess::brownian(0, 1, 2),
                                                 ReferenceProcess::brownian(0, 1, 2), grid,
                                                 PairSampler::uniform(), 1.0);
  CHECK(two_dim > matched);
  CHECK_THROWS_AS(analytic_expected_score(ReferenceProcess::gbm(0, 0.2, 1), bm, grid,
                                          PairSampler::uniform(), 1.0),
                  std::invalid_argument);
}

TEST_CASE("properness on small instances") {
  VerifySettings s;
  s.grid = uniform_grid(1.0, 15);
  s.seed = 3;
  const ReferenceProcess q = ReferenceProcess::brownian(0.0, 1.0);
  const PropernessResult r = check_properness(q, ReferenceProcess::brownian(1.0, 1.0), 64, 100, s);
  CHECK(r.pass);
  CHECK(r.gap_ci.lower <= r.gap_ci.upper);
  CHECK(r.mean_score_matched > r.mean_score_mismatched);

  const PropernessResult same = check_properness(q, q, 64, 100, s);
  CHECK(same.gap_ci.contains(0.0));
  CHECK_FALSE(same.pass);

  const PropernessResult again = check_properness(q, ReferenceProcess::brownian(1.0, 1.0), 64, 100, s);
  CHECK(again.gap_ci.lower == r.gap_ci.lower);
}

TEST_CASE("concentration on small instances") {
  VerifySettings s;
  s.grid = uniform_grid(1.0, 15);
  const std::vector<std::size_t> batches{16, 64};
  const ConcentrationResult r =
      check_concentration(ReferenceProcess::ou(1.0, 0.0, 0.5), batches, 100, s);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.pass);
  for (const ConcentrationRow& row : r.rows) {
    CHECK(row.violation_fraction <= 0.05 + 2.0 * std::sqrt(0.05 * 0.95 / 100.0));
    CHECK(row.median_deviation <= row.q95_deviation);
    CHECK(row.q95_deviation <= row.max_deviation);
  }
  CHECK(r.rows[0].bound > r.rows[1].bound);
}

TEST_CASE("sensitivity on small instances") {
  VerifySettings s;
  s.grid = uniform_grid(1.0, 15);
  const std::vector<double> deltas{0.05, 0.1, 0.2, 0.4};
  const SensitivityResult r =
      check_sensitivity(ReferenceProcess::brownian(0.0, 1.0), deltas, 64, 60, s);
  REQUIRE(r.rows.size() == 4);
  CHECK(r.control == 0.0);  // identical noise at zero perturbation
  for (std::size_t k = 1; k < r.rows.size(); ++k) {
    CHECK(r.rows[k].mean_abs_difference >= r.rows[k - 1].mean_abs_difference);
  }
  CHECK(r.slope > 0.0);

  const std::vector<double> bad{0.0, 0.1};
  CHECK_THROWS_AS(check_sensitivity(ReferenceProcess::brownian(0, 1), bad, 64, 10, s),
                  std::invalid_argument);
  const std::vector<double> unordered{0.2, 0.1};
  CHECK_THROWS_AS(check_sensitivity(ReferenceProcess::brownian(0, 1), unordered, 64, 10, s),
                  std::invalid_argument);
}

TEST_CASE("result CSV files") {
  VerifySettings s;
  s.grid = uniform_grid(1.0, 7);
  const auto dir = std::filesystem::temp_directory_path();
  const PropernessResult p = check_properness(ReferenceProcess::brownian(0, 1),
                                              ReferenceProcess::brownian(0.5, 1), 16, 10, s);
  write_csv(p, dir / "fdm_prop.csv");
  std::ifstream in(dir / "fdm_prop.csv");
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header.find("gap_ci_lower") != std::string::npos);
  CHECK((row.find("PASS") != std::string::npos || row.find("FAIL") != std::string::npos));
  std::filesystem::remove(dir / "fdm_prop.csv");
}
