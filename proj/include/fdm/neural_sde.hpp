// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fdm/autodiff.hpp"
#include "fdm/paths.hpp"
#include "fdm/rng.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdm {

enum class Activation { tanh, softplus };

/// Architecture and discretization of the generator
///   Z_0 = xi(a),  dZ = mu(t, Z) dt + sigma(t, Z) dW,  X_t = A Z_t + b.
struct NeuralSdeConfig {
  std::size_t d_initial = 0;  ///< 0 means "same as d_z"
  std::size_t d_z = 4;
  std::size_t d_x = 1;
  std::size_t d_noise = 4;
  std::vector<std::size_t> initial_hidden{32};
  std::vector<std::size_t> drift_hidden{32};
  std::vector<std::size_t> diffusion_hidden{32};
  double horizon = 1.0;
  std::size_t num_steps = 63;
  Activation activation = Activation::tanh;
  /// Diffusion entries are diffusion_cap * tanh(net output).
  double diffusion_cap = 1.0;

  std::size_t initial_dim() const { return d_initial == 0 ? d_z : d_initial; }
  std::vector<double> grid() const { return uniform_grid(horizon, num_steps); }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct Dense {
  ad::Array weight;  // out x in
  ad::Array bias;    // out x 1
};

struct Mlp {
  std::vector<Dense> layers;
  std::size_t parameter_count() const;
};

struct NeuralSdeParams {
  Mlp initial;
  Mlp drift;      // input d_z + 1 (state, t / horizon)
  Mlp diffusion;  // output d_z * d_noise, row-major (state index, noise index)
  ad::Array readout_weight;  // d_x x d_z
  ad::Array readout_bias;    // d_x x 1

  /// Every parameter array in a fixed order (initial, drift, diffusion, A, b).
  std::vector<ad::Array*> arrays();
  std::vector<const ad::Array*> arrays() const;
  std::size_t parameter_count() const;
};

NeuralSdeParams init_params(const NeuralSdeConfig& config, std::uint64_t seed);

/// Throws std::invalid_argument if any array does not match `config`.
void check_shapes(const NeuralSdeParams& params, const NeuralSdeConfig& config);

/// Tape leaves for each array of NeuralSdeParams::arrays(), same order.
struct ParamLeaves {
  std::vector<ad::NodeId> ids;
};

ParamLeaves register_params(ad::Tape& tape, const NeuralSdeParams& params, bool differentiable);

/// Non-finite state during simulation.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Records an Euler-Maruyama simulation of paths [first_path, first_path + count)
/// on `tape`. Path p draws its seed vector from noise address (p, 0) and its
/// Brownian increment for step k from (p, k + 1). Returns one d_x x count node
/// per grid index.
std::vector<ad::NodeId> record_simulation(ad::Tape& tape, const ParamLeaves& leaves,
                                          const NeuralSdeConfig& config,
                                          std::span<const double> grid,
                                          const CounterNormals& noise, std::uint64_t first_path,
                                          std::size_t count);

/// Plain (non-differentiable) simulation of `count` paths on config.grid().
/// Results do not depend on `threads`.
PathsBatch simulate(const NeuralSdeParams& params, const NeuralSdeConfig& config,
                    std::size_t count, const CounterNormals& noise, std::size_t threads = 1);

/// Collect the tape outputs of record_simulation into a PathsBatch.
PathsBatch collect_paths(const ad::Tape& tape, std::span<const ad::NodeId> outputs,
                         std::span<const double> grid);

void to_json(nlohmann::json& j, const NeuralSdeConfig& config);
/// Strict: unknown keys and invalid values are rejected.
void from_json(const nlohmann::json& j, NeuralSdeConfig& config);

inline constexpr const char* kCheckpointFormat = "fdm-sde-checkpoint/1";

void save_checkpoint(const std::filesystem::path& path, const NeuralSdeConfig& config,
                     const NeuralSdeParams& params);

struct Checkpoint {
  NeuralSdeConfig config;
  NeuralSdeParams params;
};

/// Rejects a wrong format tag and arrays whose shapes disagree with the
/// stored config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fdm
