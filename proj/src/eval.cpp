// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/eval.hpp"

#include "fdm/parallel.hpp"
#include "fdm/rng.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace fdm {

namespace {

constexpr std::size_t kReferenceGrid = 64;
constexpr std::array<std::size_t, 5> kReferenceIndices{6, 19, 32, 44, 57};

std::vector<std::size_t> draw_distinct(Philox& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(perm[i], perm[i + rng.index(n - i)]);
  }
  perm.resize(k);
  return perm;
}

// Index sets for each batch drawn from a pool of `pool` paths.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t pool, const ReportOptions& o,
                                                    Philox& rng, const char* what) {
  std::vector<std::vector<std::size_t>> out(o.num_batches);
  if (o.with_replacement) {
    if (pool < o.batch_size) {
      throw std::invalid_argument(fmt::format("{} set has {} paths, batch size is {}", what, pool,
                                              o.batch_size));
    }
    for (auto& b : out) {
      b = draw_distinct(rng, pool, o.batch_size);
    }
    return out;
  }
  if (pool < o.batch_size * o.num_batches) {
    throw std::invalid_argument(fmt::format(
        "{} set has {} paths; {} batches of {} need {} without replacement", what, pool,
        o.num_batches, o.batch_size, o.batch_size * o.num_batches));
  }
  const auto perm = draw_distinct(rng, pool, pool);
  for (std::size_t k = 0; k < o.num_batches; ++k) {
    out[k].assign(perm.begin() + static_cast<long>(k * o.batch_size),
                  perm.begin() + static_cast<long>((k + 1) * o.batch_size));
  }
  return out;
}

std::vector<double> column(const PathsBatch& batch, std::size_t t, std::size_t d) {
  std::vector<double> v(batch.count());
  for (std::size_t p = 0; p < batch.count(); ++p) {
    v[p] = batch(p, t, d);
  }
  return v;
}

}  // namespace

double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) {
    return 1.0;
  }
  constexpr double kTol = 1e-10;
  if (lambda < 1.18) {
    // P(K <= x) = sqrt(2 pi) / x * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 x^2)).
    const double f = -std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int k = 1; k < 1000; ++k) {
      const double m = 2.0 * k - 1.0;
      const double term = std::exp(f * m * m);
      cdf += term;
      if (term < kTol) {
        break;
      }
    }
    cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  // P(K > x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
  double q = 0.0;
  double sign = 1.0;
  for (int k = 1; k < 1000; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    q += sign * term;
    sign = -sign;
    if (term < kTol) {
      break;
    }
  }
  return std::clamp(2.0 * q, 0.0, 1.0);
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument(
        fmt::format("ks_two_sample: empty sample (sizes {} and {})", a.size(), b.size()));
  }
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  return {d, kolmogorov_survival(std::sqrt(ne) * d)};
}

std::vector<std::size_t> default_eval_indices(std::size_t grid_size) {
  if (grid_size == kReferenceGrid) {
    return {kReferenceIndices.begin(), kReferenceIndices.end()};
  }
  if (grid_size < 2) {
    throw std::invalid_argument("default_eval_indices: grid needs at least two points");
  }
  std::vector<std::size_t> out;
  for (std::size_t idx : kReferenceIndices) {
    const double scaled = static_cast<double>(idx) * static_cast<double>(grid_size - 1) /
                          static_cast<double>(kReferenceGrid - 1);
    const auto k = static_cast<std::size_t>(std::lround(scaled));
    if (out.empty() || out.back() != k) {
      out.push_back(std::min(k, grid_size - 1));
    }
  }
  return out;
}

double KsReport::mean_statistic() const {
  if (cells.empty()) return 0.0;
  double s = 0.0;
  for (const KsCell& c : cells) s += c.mean_statistic;
  return s / static_cast<double>(cells.size());
}

double KsReport::mean_rejection_pct() const {
  if (cells.empty()) return 0.0;
  double s = 0.0;
  for (const KsCell& c : cells) s += c.rejection_pct;
  return s / static_cast<double>(cells.size());
}

void KsReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  }
  out << "timestamp,dimension,mean_ks,rejection_pct\n";
  for (const KsCell& c : cells) {
    fmt::print(out, "{},{},{},{}\n", c.time_index, c.dim, c.mean_statistic, c.rejection_pct);
  }
  if (!out) {
    throw std::runtime_error(fmt::format("failed writing {}", path.string()));
  }
}

void KsReport::print_table(std::ostream& out) const {
  fmt::print(out, "KS report: {} batches of {} paths{}\n", num_batches, batch_size,
             with_replacement ? " (held-out drawn with replacement)" : "");
  fmt::print(out, "{:>9} {:>5} {:>10} {:>13}\n", "timestamp", "dim", "mean KS", "reject % @5%");
  for (const KsCell& c : cells) {
    fmt::print(out, "{:>9} {:>5} {:>10.4f} {:>13.2f}\n", c.time_index, c.dim, c.mean_statistic,
               c.rejection_pct);
  }
  fmt::print(out, "{:>9} {:>5} {:>10.4f} {:>13.2f}\n", "mean", "", mean_statistic(),
             mean_rejection_pct());
}

KsReport marginal_report(const BatchSource& generated, const PathsBatch& heldout,
                         const ReportOptions& options, std::uint64_t seed) {
  if (options.batch_size == 0 || options.num_batches == 0) {
    throw std::invalid_argument("marginal_report: batch size and batch count must be >= 1");
  }
  const std::vector<std::size_t> indices = options.eval_indices.empty()
                                               ? default_eval_indices(heldout.grid_size())
                                               : options.eval_indices;
  for (std::size_t idx : indices) {
    if (idx >= heldout.grid_size()) {
      throw std::out_of_range(fmt::format(
          "evaluation index {} outside the grid (valid 0..{})", idx, heldout.grid_size() - 1));
    }
  }
  Philox rng(derive_seed(seed, "eval-heldout"));
  const auto held_batches = batch_indices(heldout.count(), options, rng, "held-out");

  const std::size_t dims = heldout.dim();
  const std::size_t cells = indices.size() * dims;
  std::vector<std::vector<KsResult>> results(options.num_batches,
                                             std::vector<KsResult>(cells));
  parallel_for(options.num_batches, options.threads, [&](std::size_t k) {
    const PathsBatch gen = generated(k, options.batch_size);
    if (gen.grid_size() != heldout.grid_size() || gen.dim() != dims) {
      throw std::invalid_argument("marginal_report: generated paths do not match the held-out grid");
    }
    const PathsBatch held = heldout.select(held_batches[k]);
    for (std::size_t a = 0; a < indices.size(); ++a) {
      for (std::size_t d = 0; d < dims; ++d) {
        results[k][a * dims + d] =
            ks_two_sample(column(gen, indices[a], d), column(held, indices[a], d));
      }
    }
  });

  KsReport report;
  report.eval_indices = indices;
  report.batch_size = options.batch_size;
  report.num_batches = options.num_batches;
  report.with_replacement = options.with_replacement;
  for (std::size_t a = 0; a < indices.size(); ++a) {
    for (std::size_t d = 0; d < dims; ++d) {
      double stat = 0.0;
      std::size_t rejected = 0;
      for (const auto& batch : results) {
        stat += batch[a * dims + d].statistic;
        rejected += batch[a * dims + d].p_value < options.alpha ? 1 : 0;
      }
      const double n = static_cast<double>(options.num_batches);
      report.cells.push_back(
          {indices[a], d, stat / n, 100.0 * static_cast<double>(rejected) / n});
    }
  }
  return report;
}

KsReport marginal_report(const PathsBatch& generated, const PathsBatch& heldout,
                         const ReportOptions& options, std::uint64_t seed) {
  Philox rng(derive_seed(seed, "eval-generated"));
  const auto gen_batches = batch_indices(generated.count(), options, rng, "generated");
  return marginal_report(
      [&](std::size_t k, std::size_t) { return generated.select(gen_batches[k]); }, heldout,
      options, seed);
}

void joint_scatter_export(const PathsBatch& generated, const PathsBatch& data,
                          std::size_t dim_a, std::size_t dim_b,
                          std::span<const std::size_t> timestamps,
                          const std::filesystem::path& out_path) {
  std::ofstream out(out_path);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", out_path.string()));
  }
  out << "source,t,value_a,value_b\n";
  auto emit = [&](const PathsBatch& batch, const char* source) {
    if (batch.count() == 0) {
      return;
    }
    if (dim_a >= batch.dim() || dim_b >= batch.dim()) {
      throw std::out_of_range(fmt::format("scatter export: dimensions ({}, {}) invalid for {}-d paths",
                                          dim_a, dim_b, batch.dim()));
    }
    for (std::size_t t : timestamps) {
      if (t >= batch.grid_size()) {
        throw std::out_of_range(
            fmt::format("scatter export: grid index {} outside {}-point grid", t, batch.grid_size()));
      }
    }
    for (std::size_t p = 0; p < batch.count(); ++p) {
      for (std::size_t t : timestamps) {
        fmt::print(out, "{},{},{},{}\n", source, batch.grid()[t], batch(p, t, dim_a),
                   batch(p, t, dim_b));
      }
    }
  };
  emit(data, "real");
  emit(generated, "generated");
  if (!out) {
    throw std::runtime_error(fmt::format("failed writing {}", out_path.string()));
  }
}

}  // namespace fdm
