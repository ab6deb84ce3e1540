// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/verify.hpp"

#include "fdm/parallel.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace fdm {

namespace {

struct TrialDraws {
  PathsBatch data;
  std::vector<TimestampPair> pairs;
};

TrialDraws draw_trial(const ReferenceProcess& data_process, std::span<const double> grid,
                      std::size_t batch, std::uint64_t seed, std::uint64_t trial) {
  TrialDraws d;
  d.data = simulate_exact(data_process, grid, batch, CounterNormals(derive_seed(seed, "data", trial)));
  Philox rng(derive_seed(seed, "pairs", trial));
  d.pairs = PairSampler::uniform().sample(grid.size(), batch, rng);
  return d;
}

PathsBatch generate(const ReferenceProcess& process, std::span<const double> grid,
                    std::size_t batch, std::uint64_t seed, const char* role, std::uint64_t trial) {
  return simulate_exact(process, grid, batch, CounterNormals(derive_seed(seed, role, trial)));
}

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  }
  return out;
}

}  // namespace

double analytic_expected_score(const ReferenceProcess& generator, const ReferenceProcess& data,
                               std::span<const double> grid, const PairSampler& sampler,
                               double gamma) {
  if (generator.dim != data.dim) {
    throw std::invalid_argument("analytic_expected_score: dimension mismatch");
  }
  if (grid.size() < 2) {
    throw std::invalid_argument("analytic_expected_score: grid needs at least two points");
  }
  const double dims = static_cast<double>(generator.dim);
  const std::array<double, 2> zero{0.0, 0.0};
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = 0; j < grid.size(); ++j) {
      const double w = sampler.probability(grid.size(), {i, j});
      if (w == 0.0) continue;
      const double t1 = grid[i] - grid.front();
      const double t2 = grid[j] - grid.front();
      const GaussianJoint g = two_time_joint(generator, t1, t2);
      const GaussianJoint y = two_time_joint(data, t1, t2);
      // Coordinates are independent, so the kernel expectation factorizes.
      std::array<double, 4> self_cov{};
      std::array<double, 4> cross_cov{};
      for (std::size_t k = 0; k < 4; ++k) {
        self_cov[k] = 2.0 * g.cov[k];
        cross_cov[k] = g.cov[k] + y.cov[k];
      }
      const std::array<double, 2> cross_mean{g.mean[0] - y.mean[0], g.mean[1] - y.mean[1]};
      const double first = std::pow(expected_rbf_gaussian(zero, self_cov, zero, gamma), dims);
      const double second = std::pow(expected_rbf_gaussian(cross_mean, cross_cov, zero, gamma), dims);
      total += w * (0.5 * first - second);
    }
  }
  return total;
}

double reference_score(const ReferenceProcess& generator, const ReferenceProcess& data,
                       std::span<const double> grid, std::size_t batch, double gamma,
                       std::uint64_t seed, std::uint64_t trial) {
  const TrialDraws d = draw_trial(data, grid, batch, seed, trial);
  const PathsBatch gen = generate(generator, grid, batch, seed, "gen", trial);
  return score_main(gen, d.data, d.pairs, gamma);
}

Interval bootstrap_mean_ci(std::span<const double> values, double level, std::size_t resamples,
                           std::uint64_t seed) {
  if (values.empty()) {
    throw std::invalid_argument("bootstrap_mean_ci: no values");
  }
  if (!(level > 0.0 && level < 1.0) || resamples == 0) {
    throw std::invalid_argument("bootstrap_mean_ci: need level in (0, 1) and resamples >= 1");
  }
  Philox rng(derive_seed(seed, "bootstrap"));
  std::vector<double> means(resamples);
  for (double& m : means) {
    double s = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      s += values[rng.index(values.size())];
    }
    m = s / static_cast<double>(values.size());
  }
  const double tail = 0.5 * (1.0 - level);
  return {quantile(means, tail), quantile(means, 1.0 - tail)};
}

PropernessResult check_properness(const ReferenceProcess& q, const ReferenceProcess& p,
                                  std::size_t batch, std::size_t trials,
                                  const VerifySettings& settings) {
  if (batch < 2 || trials < 2) {
    throw std::invalid_argument("check_properness: need batch >= 2 and trials >= 2");
  }
  std::vector<double> matched(trials), mismatched(trials), gaps(trials);
  parallel_for(trials, settings.threads, [&](std::size_t t) {
    const TrialDraws d = draw_trial(q, settings.grid, batch, settings.seed, t);
    const PathsBatch gen_q = generate(q, settings.grid, batch, settings.seed, "gen-q", t);
    const PathsBatch gen_p = generate(p, settings.grid, batch, settings.seed, "gen-p", t);
    // Oriented so that larger is better, the direction properness speaks to.
    matched[t] = -score_main(gen_q, d.data, d.pairs, settings.gamma);
    mismatched[t] = -score_main(gen_p, d.data, d.pairs, settings.gamma);
    gaps[t] = matched[t] - mismatched[t];
  });
  PropernessResult r;
  r.description = fmt::format("data {} vs generator {}", q.describe(), p.describe());
  r.mean_score_matched = mean_of(matched);
  r.mean_score_mismatched = mean_of(mismatched);
  r.gap_ci = bootstrap_mean_ci(gaps, 0.99, 4000, settings.seed);
  r.batch = batch;
  r.trials = trials;
  r.pass = r.gap_ci.lower > 0.0;
  return r;
}

double concentration_bound(std::size_t batch, double delta, double kernel_bound) {
  if (batch < 2 || !(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("concentration_bound: need batch >= 2 and delta in (0, 1)");
  }
  return kernel_bound *
         std::sqrt(47.0 * std::log(2.0 / delta) / (8.0 * static_cast<double>(batch)));
}

ConcentrationResult check_concentration(const ReferenceProcess& q,
                                        std::span<const std::size_t> batches, std::size_t trials,
                                        const VerifySettings& settings, double delta) {
  if (trials < 2) {
    throw std::invalid_argument("check_concentration: need trials >= 2");
  }
  ConcentrationResult r;
  r.delta = delta;
  r.trials = trials;
  r.pass = true;
  for (std::size_t b : batches) {
    if (b < 2) {
      throw std::invalid_argument(fmt::format("check_concentration: batch {} < 2", b));
    }
    const std::uint64_t seed = derive_seed(settings.seed, "concentration", b);
    std::vector<double> scores(trials);
    parallel_for(trials, settings.threads, [&](std::size_t t) {
      scores[t] = reference_score(q, q, settings.grid, b, settings.gamma, seed, t);
    });
    const double centre = mean_of(scores);
    std::vector<double> dev(trials);
    for (std::size_t t = 0; t < trials; ++t) dev[t] = std::abs(scores[t] - centre);
    ConcentrationRow row;
    row.batch = b;
    row.bound = concentration_bound(b, delta, r.kernel_bound);
    row.median_deviation = quantile(dev, 0.5);
    row.q95_deviation = quantile(dev, 0.95);
    row.max_deviation = *std::max_element(dev.begin(), dev.end());
    row.violation_fraction =
        static_cast<double>(std::count_if(dev.begin(), dev.end(),
                                          [&](double x) { return x > row.bound; })) /
        static_cast<double>(trials);
    r.pass = r.pass && row.violation_fraction <= delta;
    r.rows.push_back(row);
  }
  return r;
}

OriginFit fit_through_origin(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) {
    throw std::invalid_argument("fit_through_origin: need equally sized, non-empty inputs");
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += x[k] * y[k];
    sxx += x[k] * x[k];
    syy += y[k] * y[k];
  }
  OriginFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  double ss_res = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double e = y[k] - fit.slope * x[k];
    ss_res += e * e;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 0.0;
  return fit;
}

SensitivityResult check_sensitivity(const ReferenceProcess& base, std::span<const double> deltas,
                                    std::size_t batch, std::size_t trials,
                                    const VerifySettings& settings) {
  if (deltas.empty() || !(deltas.front() > 0.0)) {
    throw std::invalid_argument("check_sensitivity: delta grid must start above 0");
  }
  for (std::size_t k = 1; k < deltas.size(); ++k) {
    if (!(deltas[k] > deltas[k - 1])) {
      throw std::invalid_argument("check_sensitivity: delta grid must be strictly increasing");
    }
  }
  if (batch < 2 || trials < 2) {
    throw std::invalid_argument("check_sensitivity: need batch >= 2 and trials >= 2");
  }
  std::vector<double> all_deltas{0.0};
  all_deltas.insert(all_deltas.end(), deltas.begin(), deltas.end());
  // diffs[t][k]: |difference| in trial t at all_deltas[k].
  std::vector<std::vector<double>> diffs(trials, std::vector<double>(all_deltas.size()));
  parallel_for(trials, settings.threads, [&](std::size_t t) {
    const TrialDraws d = draw_trial(base, settings.grid, batch, settings.seed, t);
    const PathsBatch gen_base = generate(base, settings.grid, batch, settings.seed, "gen", t);
    const double s_base = score_main(gen_base, d.data, d.pairs, settings.gamma);
    for (std::size_t k = 0; k < all_deltas.size(); ++k) {
      const ReferenceProcess moved = perturbed(base, all_deltas[k], 0.0);
      const PathsBatch gen = generate(moved, settings.grid, batch, settings.seed, "gen", t);
      diffs[t][k] = std::abs(s_base - score_main(gen, d.data, d.pairs, settings.gamma));
    }
  });
  SensitivityResult r;
  r.description = fmt::format("drift perturbations of {}", base.describe());
  std::vector<double> means;
  for (std::size_t k = 0; k < all_deltas.size(); ++k) {
    std::vector<double> col(trials);
    for (std::size_t t = 0; t < trials; ++t) col[t] = diffs[t][k];
    const double m = mean_of(col);
    double ss = 0.0;
    for (double v : col) ss += (v - m) * (v - m);
    const double se = std::sqrt(ss / static_cast<double>(trials - 1) / static_cast<double>(trials));
    if (k == 0) {
      r.control = m;
    } else {
      r.rows.push_back({all_deltas[k], m, se});
      means.push_back(m);
    }
  }
  const OriginFit fit = fit_through_origin(deltas, means);
  r.slope = fit.slope;
  r.r_squared = fit.r_squared;
  bool bounded = true;
  for (const SensitivityRow& row : r.rows) {
    bounded = bounded && row.mean_abs_difference <= 1.25 * fit.slope * row.delta;
  }
  r.pass = fit.r_squared > 0.9 && bounded;
  return r;
}

void write_csv(const PropernessResult& r, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "description,batch,trials,mean_score_mismatched,mean_score_matched,gap_ci_lower,"
         "gap_ci_upper,verdict\n";
  fmt::print(out, "\"{}\",{},{},{},{},{},{},{}\n", r.description, r.batch, r.trials,
             r.mean_score_mismatched, r.mean_score_matched, r.gap_ci.lower, r.gap_ci.upper,
             r.pass ? "PASS" : "FAIL");
}

void write_csv(const ConcentrationResult& r, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "batch,trials,delta,bound,median_deviation,q95_deviation,max_deviation,"
         "violation_fraction\n";
  for (const ConcentrationRow& row : r.rows) {
    fmt::print(out, "{},{},{},{},{},{},{},{}\n", row.batch, r.trials, r.delta, row.bound,
               row.median_deviation, row.q95_deviation, row.max_deviation,
               row.violation_fraction);
  }
}

void write_csv(const SensitivityResult& r, const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "delta,mean_abs_difference,std_error,fitted\n";
  fmt::print(out, "0,{},0,0\n", r.control);
  for (const SensitivityRow& row : r.rows) {
    fmt::print(out, "{},{},{},{}\n", row.delta, row.mean_abs_difference, row.std_error,
               r.slope * row.delta);
  }
}

}  // namespace fdm
