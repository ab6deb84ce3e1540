// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Central finite-difference oracle shared by the gradient tests.

#include "fdm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace fdm::testing {

using Recorder = std::function<ad::NodeId(ad::Tape&, const std::vector<ad::NodeId>&)>;

struct GradcheckReport {
  double worst = 0.0;  ///< max over entries of |ad - fd| / max(1, |ad|)
  std::size_t entries = 0;
};

inline double evaluate(const Recorder& f, const std::vector<ad::Array>& leaves) {
  ad::Tape tape;
  std::vector<ad::NodeId> ids;
  for (const auto& a : leaves) ids.push_back(tape.variable(a));
  return tape.value(f(tape, ids)).item();
}

inline GradcheckReport gradcheck(const Recorder& f, std::vector<ad::Array> leaves,
                                 double h = 1e-5) {
  ad::Tape tape;
  std::vector<ad::NodeId> ids;
  for (const auto& a : leaves) ids.push_back(tape.variable(a));
  const ad::NodeId root = f(tape, ids);
  const ad::Gradients grads = tape.backward(root);

  GradcheckReport report;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const ad::Array& g = grads.at(ids[k]);
    for (std::size_t i = 0; i < leaves[k].size(); ++i) {
      const double saved = leaves[k].data()[i];
      leaves[k].data()[i] = saved + h;
      const double up = evaluate(f, leaves);
      leaves[k].data()[i] = saved - h;
      const double down = evaluate(f, leaves);
      leaves[k].data()[i] = saved;
      const double fd = (up - down) / (2.0 * h);
      const double ad_value = g.data()[i];
      report.worst = std::max(report.worst, std::abs(ad_value - fd) / std::max(1.0, std::abs(ad_value)));
      ++report.entries;
    }
  }
  return report;
}

}  // namespace fdm::testing
