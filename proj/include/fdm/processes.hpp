// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fdm/paths.hpp"
#include "fdm/rng.hpp"

#include <array>
#include <cstddef>
#include <span>
#include <string>

namespace fdm {

enum class ProcessKind { brownian, ou, gbm };

/// Closed-form reference diffusions with independent, identically
/// distributed coordinates.
///
///   brownian: dX = c dt + s dW,              X_0 = x0 (default 0)
///   ou:       dX = theta (mean - X) dt + s dW, X_0 from the stationary law
///   gbm:      dX = r X dt + v X dW,          X_0 = x0 > 0
struct ReferenceProcess {
  ProcessKind kind = ProcessKind::brownian;
  double drift = 0.0;  ///< c (brownian) or r (gbm)
  double scale = 1.0;  ///< s (brownian, ou) or v (gbm)
  double rate = 1.0;   ///< theta (ou)
  double mean = 0.0;   ///< long-run mean (ou)
  double x0 = 0.0;     ///< start (brownian, gbm)
  std::size_t dim = 1;

  static ReferenceProcess brownian(double drift, double scale, std::size_t dim = 1);
  static ReferenceProcess ou(double rate, double mean, double scale, std::size_t dim = 1);
  static ReferenceProcess gbm(double drift, double vol, double x0, std::size_t dim = 1);

  /// Throws std::invalid_argument on non-positive scale, rate or gbm start.
  void validate() const;
  std::string describe() const;

  friend bool operator==(const ReferenceProcess&, const ReferenceProcess&) = default;
};

/// Parse "brownian:c,s", "ou:theta,mean,s" or "gbm:r,v,x0"; an optional
/// trailing ":dim=N" sets the dimension.
ReferenceProcess parse_process(const std::string& text);

/// Exact transition sampling on `grid` (no discretization error). Path p
/// uses noise address (p, 0) for its initial draw and (p, k + 1) for the
/// transition out of grid index k.
PathsBatch simulate_exact(const ReferenceProcess& process, std::span<const double> grid,
                          std::size_t count, const CounterNormals& noise,
                          std::uint64_t first_path = 0);

struct GaussianJoint {
  std::array<double, 2> mean{};
  std::array<double, 4> cov{};  ///< row-major 2x2
};

/// Law of (X_{t1}, X_{t2}) for one coordinate of a Gaussian reference
/// process, with time measured from the process start. GBM is rejected; apply
/// a log transform and use a Brownian reference instead.
GaussianJoint two_time_joint(const ReferenceProcess& process, double t1, double t2);

/// Drift shifted by the constant delta_mu and diffusion scale by
/// delta_sigma. For OU the shift moves the long-run mean by delta_mu / theta;
/// for GBM it shifts the rate r. Throws if the new scale is not positive.
ReferenceProcess perturbed(const ReferenceProcess& process, double delta_mu, double delta_sigma);

}  // namespace fdm
