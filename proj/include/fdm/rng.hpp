// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

namespace fdm {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32-10 block function (Salmon et al., SC'11).
PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key);

/// Derive an independent 64-bit seed for a named substream, e.g.
/// derive_seed(seed, "sim", step). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

/// Map 53 random bits to a double in the open interval (0, 1).
double to_unit_open(std::uint64_t bits);

/// Stateless normal source addressed by (path, step). The same address always
/// yields the same draws regardless of evaluation order or thread count.
class CounterNormals {
 public:
  explicit CounterNormals(std::uint64_t seed);

  /// Fill `out` with standard normals for the given (path, step) address.
  void fill(std::uint64_t path, std::uint64_t step, std::span<double> out) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  PhiloxKey key_;
};

/// Sequential engine over a Philox counter. Satisfies
/// UniformRandomBitGenerator, but the helper draws below avoid std
/// distributions so sequences match across standard libraries.
class Philox {
 public:
  using result_type = std::uint64_t;

  explicit Philox(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  double uniform();
  double normal();
  /// Uniform index in [0, n), n >= 1.
  std::size_t index(std::size_t n);

 private:
  void refill();

  PhiloxKey key_;
  std::uint64_t block_ = 0;
  PhiloxCounter buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fdm
