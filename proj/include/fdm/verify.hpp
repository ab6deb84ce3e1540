// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fdm/processes.hpp"
#include "fdm/scoring.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fdm {

/// Expected value of the main estimator for independent generator and data
/// reference processes (brownian or ou), averaging the analytic two-time
/// Gaussian expectations over the pair law on `grid`.
double analytic_expected_score(const ReferenceProcess& generator, const ReferenceProcess& data,
                               std::span<const double> grid, const PairSampler& sampler,
                               double gamma);

/// Main-estimator value for one batch of reference paths. Trial `trial`
/// uses streams derived from (seed, role, trial).
double reference_score(const ReferenceProcess& generator, const ReferenceProcess& data,
                       std::span<const double> grid, std::size_t batch, double gamma,
                       std::uint64_t seed, std::uint64_t trial);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double x) const { return lower <= x && x <= upper; }
};

/// Percentile bootstrap interval for the mean of `values`.
Interval bootstrap_mean_ci(std::span<const double> values, double level, std::size_t resamples,
                           std::uint64_t seed);

struct VerifySettings {
  std::vector<double> grid = uniform_grid(1.0, 63);
  double gamma = 1.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

/// Scores here are oriented higher-is-better, i.e. the negated estimator.
struct PropernessResult {
  std::string description;
  double mean_score_mismatched = 0.0;  ///< generator p, data q
  double mean_score_matched = 0.0;     ///< generator q, data q
  Interval gap_ci;                     ///< for matched - mismatched, 99%
  std::size_t batch = 0;
  std::size_t trials = 0;
  bool pass = false;
};

/// Over `trials` batches, each sharing data and timestamp draws between the
/// two generators, estimates the gap score(q, q) - score(p, q). PASS when the
/// 99% bootstrap interval lies strictly above zero.
PropernessResult check_properness(const ReferenceProcess& q, const ReferenceProcess& p,
                                  std::size_t batch, std::size_t trials,
                                  const VerifySettings& settings);

struct ConcentrationRow {
  std::size_t batch = 0;
  double bound = 0.0;
  double median_deviation = 0.0;
  double q95_deviation = 0.0;
  double max_deviation = 0.0;
  double violation_fraction = 0.0;
};

struct ConcentrationResult {
  double delta = 0.05;
  double kernel_bound = 1.0;
  std::size_t trials = 0;
  std::vector<ConcentrationRow> rows;
  bool pass = false;
};

/// K sqrt(47 ln(2 / delta) / (8 B)).
double concentration_bound(std::size_t batch, double delta, double kernel_bound = 1.0);

/// For each B, `trials` independent scores with generator and data both
/// drawn from q; deviations from their grand mean are compared with the
/// bound at delta. PASS when every violation fraction is <= delta.
ConcentrationResult check_concentration(const ReferenceProcess& q,
                                        std::span<const std::size_t> batches, std::size_t trials,
                                        const VerifySettings& settings, double delta = 0.05);

struct SensitivityRow {
  double delta = 0.0;
  double mean_abs_difference = 0.0;
  double std_error = 0.0;
};

struct SensitivityResult {
  std::string description;
  double control = 0.0;  ///< mean |difference| at delta = 0
  std::vector<SensitivityRow> rows;
  double slope = 0.0;
  double r_squared = 0.0;
  bool pass = false;
};

/// Through-origin least squares y = slope * x; R^2 = 1 - SS_res / sum y^2.
struct OriginFit {
  double slope = 0.0;
  double r_squared = 0.0;
};
OriginFit fit_through_origin(std::span<const double> x, std::span<const double> y);

/// For each drift perturbation delta, the mean over trials of
/// |score(base, data) - score(perturbed(base, delta, 0), data)| where both
/// generators share noise, data and timestamps. PASS when R^2 > 0.9 and every
/// mean difference is at most 1.25 * slope * delta.
SensitivityResult check_sensitivity(const ReferenceProcess& base, std::span<const double> deltas,
                                    std::size_t batch, std::size_t trials,
                                    const VerifySettings& settings);

void write_csv(const PropernessResult& r, const std::filesystem::path& path);
void write_csv(const ConcentrationResult& r, const std::filesystem::path& path);
void write_csv(const SensitivityResult& r, const std::filesystem::path& path);

}  // namespace fdm
