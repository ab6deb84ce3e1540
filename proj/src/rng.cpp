// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fdm {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53;
constexpr std::uint32_t kMulB = 0xCD9E8D57;
constexpr std::uint32_t kWeylA = 0x9E3779B9;
constexpr std::uint32_t kWeylB = 0xBB67AE85;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

PhiloxKey key_from(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

std::uint64_t join(std::uint32_t lo, std::uint32_t hi) {
  return static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
}

// Box-Muller on two independent uniforms.
void box_muller(std::uint64_t b0, std::uint64_t b1, double& z0, double& z1) {
  const double u1 = to_unit_open(b0);
  const double u2 = to_unit_open(b1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  z0 = r * std::cos(a);
  z1 = r * std::sin(a);
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  // FNV-1a over the name, then mixed with seed and index.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

double to_unit_open(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

CounterNormals::CounterNormals(std::uint64_t seed) : seed_(seed), key_(key_from(seed)) {}

void CounterNormals::fill(std::uint64_t path, std::uint64_t step, std::span<double> out) const {
  std::size_t i = 0;
  for (std::uint32_t block = 0; i < out.size(); ++block) {
    const PhiloxCounter r =
        philox4x32({block, static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(path),
                    static_cast<std::uint32_t>(path >> 32)},
                   key_);
    double z0 = 0.0, z1 = 0.0;
    box_muller(join(r[0], r[1]), join(r[2], r[3]), z0, z1);
    out[i++] = z0;
    if (i < out.size()) {
      out[i++] = z1;
    }
  }
}

Philox::Philox(std::uint64_t seed) : key_(key_from(seed)) {}

void Philox::refill() {
  buffer_ = philox4x32({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                        0xA5A5A5A5u, 0x5A5A5A5Au},
                       key_);
  ++block_;
  used_ = 0;
}

Philox::result_type Philox::operator()() {
  if (used_ > 2) {
    refill();
  }
  const std::uint64_t v = join(buffer_[used_], buffer_[used_ + 1]);
  used_ += 2;
  return v;
}

double Philox::uniform() { return to_unit_open((*this)()); }

double Philox::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double z0 = 0.0;
  const std::uint64_t b0 = (*this)();
  const std::uint64_t b1 = (*this)();
  box_muller(b0, b1, z0, spare_);
  has_spare_ = true;
  return z0;
}

std::size_t Philox::index(std::size_t n) {
  if (n == 0) {
    throw std::invalid_argument("Philox::index: empty range");
  }
  // Multiply-shift; the bias is below 2^-64 * n.
  const unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
  return static_cast<std::size_t>(m >> 64);
}

}  // namespace fdm
