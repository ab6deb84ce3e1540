// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/processes.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace fdm {

ReferenceProcess ReferenceProcess::brownian(double drift, double scale, std::size_t dim) {
  ReferenceProcess p;
  p.kind = ProcessKind::brownian;
  p.drift = drift;
  p.scale = scale;
  p.dim = dim;
  p.validate();
  return p;
}

ReferenceProcess ReferenceProcess::ou(double rate, double mean, double scale, std::size_t dim) {
  ReferenceProcess p;
  p.kind = ProcessKind::ou;
  p.rate = rate;
  p.mean = mean;
  p.scale = scale;
  p.dim = dim;
  p.validate();
  return p;
}

ReferenceProcess ReferenceProcess::gbm(double drift, double vol, double x0, std::size_t dim) {
  ReferenceProcess p;
  p.kind = ProcessKind::gbm;
  p.drift = drift;
  p.scale = vol;
  p.x0 = x0;
  p.dim = dim;
  p.validate();
  return p;
}

void ReferenceProcess::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument(fmt::format("{}: scale must be > 0, got {}", describe(), scale));
  }
  if (kind == ProcessKind::ou && (!(rate > 0.0) || !std::isfinite(rate))) {
    throw std::invalid_argument(fmt::format("{}: rate must be > 0, got {}", describe(), rate));
  }
  if (kind == ProcessKind::gbm && (!(x0 > 0.0) || !std::isfinite(x0))) {
    throw std::invalid_argument(fmt::format("{}: start must be > 0, got {}", describe(), x0));
  }
  if (dim == 0) {
    throw std::invalid_argument("reference process: dimension must be >= 1");
  }
  if (!std::isfinite(drift) || !std::isfinite(mean) || !std::isfinite(x0)) {
    throw std::invalid_argument(fmt::format("{}: parameters must be finite", describe()));
  }
}

std::string ReferenceProcess::describe() const {
  switch (kind) {
    case ProcessKind::brownian: return fmt::format("brownian(c={}, s={})", drift, scale);
    case ProcessKind::ou: return fmt::format("ou(theta={}, mean={}, s={})", rate, mean, scale);
    case ProcessKind::gbm: return fmt::format("gbm(r={}, v={}, x0={})", drift, scale, x0);
  }
  return "unknown";
}

ReferenceProcess parse_process(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw std::invalid_argument(fmt::format(
        "process '{}': expected kind:params, e.g. brownian:0,1 or ou:1,0,0.5", text));
  }
  const std::string kind = text.substr(0, colon);
  std::string rest = text.substr(colon + 1);
  std::size_t dim = 1;
  if (const auto dim_at = rest.find(":dim="); dim_at != std::string::npos) {
    try {
      dim = std::stoul(rest.substr(dim_at + 5));
    } catch (const std::exception&) {
      throw std::invalid_argument(fmt::format("process '{}': bad dimension", text));
    }
    rest = rest.substr(0, dim_at);
  }
  std::vector<double> v;
  std::stringstream ss(rest);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) {
        throw std::invalid_argument("trailing characters");
      }
    } catch (const std::exception&) {
      throw std::invalid_argument(fmt::format("process '{}': '{}' is not a number", text, item));
    }
  }
  auto need = [&](std::size_t n) {
    if (v.size() != n) {
      throw std::invalid_argument(
          fmt::format("process '{}': {} expects {} parameters, got {}", text, kind, n, v.size()));
    }
  };
  if (kind == "brownian") {
    need(2);
    return ReferenceProcess::brownian(v[0], v[1], dim);
  }
  if (kind == "ou") {
    need(3);
    return ReferenceProcess::ou(v[0], v[1], v[2], dim);
  }
  if (kind == "gbm") {
    need(3);
    return ReferenceProcess::gbm(v[0], v[1], v[2], dim);
  }
  throw std::invalid_argument(
      fmt::format("process '{}': unknown kind '{}' (brownian, ou, gbm)", text, kind));
}

PathsBatch simulate_exact(const ReferenceProcess& process, std::span<const double> grid,
                          std::size_t count, const CounterNormals& noise,
                          std::uint64_t first_path) {
  process.validate();
  if (grid.empty()) {
    throw std::invalid_argument("simulate_exact: empty grid");
  }
  for (std::size_t k = 1; k < grid.size(); ++k) {
    if (!(grid[k] > grid[k - 1])) {
      throw std::invalid_argument(
          fmt::format("simulate_exact: grid not strictly increasing at index {}", k));
    }
  }
  const std::size_t d = process.dim;
  PathsBatch batch(std::vector<double>(grid.begin(), grid.end()), count, d);
  std::vector<double> z(d);
  std::vector<double> x(d);
  for (std::size_t p = 0; p < count; ++p) {
    noise.fill(first_path + p, 0, z);
    for (std::size_t k = 0; k < d; ++k) {
      switch (process.kind) {
        case ProcessKind::brownian:
        case ProcessKind::gbm:
          x[k] = process.x0;
          break;
        case ProcessKind::ou:
          x[k] = process.mean + process.scale / std::sqrt(2.0 * process.rate) * z[k];
          break;
      }
      batch(p, 0, k) = x[k];
    }
    for (std::size_t t = 0; t + 1 < grid.size(); ++t) {
      const double dt = grid[t + 1] - grid[t];
      noise.fill(first_path + p, t + 1, z);
      for (std::size_t k = 0; k < d; ++k) {
        switch (process.kind) {
          case ProcessKind::brownian:
            x[k] += process.drift * dt + process.scale * std::sqrt(dt) * z[k];
            break;
          case ProcessKind::ou: {
            const double decay = std::exp(-process.rate * dt);
            const double sd = process.scale *
                              std::sqrt(-std::expm1(-2.0 * process.rate * dt) / (2.0 * process.rate));
            x[k] = process.mean + (x[k] - process.mean) * decay + sd * z[k];
            break;
          }
          case ProcessKind::gbm: {
            const double v = process.scale;
            x[k] *= std::exp((process.drift - 0.5 * v * v) * dt + v * std::sqrt(dt) * z[k]);
            break;
          }
        }
        batch(p, t + 1, k) = x[k];
      }
    }
  }
  return batch;
}

GaussianJoint two_time_joint(const ReferenceProcess& process, double t1, double t2) {
  process.validate();
  if (!(t1 >= 0.0) || !(t2 >= 0.0)) {
    throw std::invalid_argument(fmt::format("two_time_joint: times must be >= 0 ({}, {})", t1, t2));
  }
  GaussianJoint j;
  const double s2 = process.scale * process.scale;
  switch (process.kind) {
    case ProcessKind::brownian: {
      j.mean = {process.x0 + process.drift * t1, process.x0 + process.drift * t2};
      const double m = std::min(t1, t2);
      j.cov = {s2 * t1, s2 * m, s2 * m, s2 * t2};
      return j;
    }
    case ProcessKind::ou: {
      const double var = s2 / (2.0 * process.rate);
      const double c = var * std::exp(-process.rate * std::abs(t1 - t2));
      j.mean = {process.mean, process.mean};
      j.cov = {var, c, c, var};
      return j;
    }
    case ProcessKind::gbm:
      break;
  }
  throw std::invalid_argument(
      "two_time_joint: gbm is not Gaussian; log-transform the paths and use a brownian reference "
      "with drift r - v^2/2 and scale v");
}

ReferenceProcess perturbed(const ReferenceProcess& process, double delta_mu, double delta_sigma) {
  if (!std::isfinite(delta_mu) || !std::isfinite(delta_sigma)) {
    throw std::invalid_argument("perturbed: perturbations must be finite");
  }
  ReferenceProcess out = process;
  switch (process.kind) {
    case ProcessKind::brownian:
    case ProcessKind::gbm:
      out.drift += delta_mu;
      break;
    case ProcessKind::ou:
      out.mean += delta_mu / process.rate;
      break;
  }
  out.scale += delta_sigma;
  if (!(out.scale > 0.0)) {
    throw std::invalid_argument(fmt::format(
        "perturbed: scale {} + {} is not positive", process.scale, delta_sigma));
  }
  return out;
}

}  // namespace fdm
