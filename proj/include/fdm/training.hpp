// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fdm/autodiff.hpp"
#include "fdm/neural_sde.hpp"
#include "fdm/paths.hpp"
#include "fdm/scoring.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

namespace fdm {

struct TrainConfig {
  std::size_t steps = 10000;
  std::size_t batch = 128;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 1000;  ///< 0: final step only
  std::size_t log_every = 1;
  ScoreConfig score;
  NeuralSdeConfig sde;

  void validate() const;
};

/// The "train" section only; score and sde live in their own sections.
void to_json(nlohmann::json& j, const TrainConfig& config);
void from_json(const nlohmann::json& j, TrainConfig& config);

struct AdamState {
  std::vector<ad::Array> first_moment;
  std::vector<ad::Array> second_moment;
  std::size_t step = 0;
};

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update (minimization) of every array in `params`.
/// State moments are created on first use.
void adam_step(std::span<ad::Array* const> params, std::span<const ad::Array> grads,
               AdamState& state, const AdamSettings& settings);

struct TrainLogEntry {
  std::size_t step = 0;  ///< 1-based
  double score = 0.0;
  double grad_norm = 0.0;
  double seconds = 0.0;  ///< wall clock since training started
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;

  /// step,score,grad_norm[,seconds]. Wall-clock seconds make the file
  /// run-dependent, so they are optional.
  void write_csv(const std::filesystem::path& path, bool include_seconds) const;
};

/// Non-finite score, gradient or state; carries the 1-based step.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Everything random about one training step, fixed in advance.
struct StepDraws {
  std::vector<std::size_t> data_indices;
  std::vector<std::vector<std::size_t>> tuples;  ///< main: pairs; concat: N-tuples; adjacent: unused
  std::uint64_t noise_seed = 0;
};

/// One step recorded on a fresh tape. `loss` is the estimator node itself;
/// `score` is its negation, the positively oriented value that training
/// drives up.
struct StepGraph {
  ad::Tape tape;
  ParamLeaves leaves;
  ad::NodeId loss = 0;
  double score = 0.0;
};

StepGraph record_step(const NeuralSdeParams& params, const TrainConfig& config,
                      const PathsBatch& data, const StepDraws& draws);

/// Draw the timestamp selection for one step according to config.score.
std::vector<std::vector<std::size_t>> draw_timestamps(const ScoreConfig& score,
                                                      std::size_t grid_size, std::size_t count,
                                                      Philox& rng);

struct TrainHooks {
  std::function<void(std::size_t step, const NeuralSdeParams& params)> on_checkpoint;
  std::function<void(const TrainLogEntry& entry)> on_log;
};

struct TrainResult {
  NeuralSdeParams params;
  TrainLog log;
};

/// Repeats: simulate B paths on a tape, take the next B data paths of a
/// per-epoch shuffle, draw timestamps, record the estimator, backpropagate
/// and take an Adam step that increases the oriented score.
TrainResult fdm_train(const TrainConfig& config, const PathsBatch& data,
                      const TrainHooks& hooks = {});

/// Start from given parameters instead of init_params(config.sde, seed).
TrainResult fdm_train(const TrainConfig& config, const PathsBatch& data,
                      NeuralSdeParams initial, const TrainHooks& hooks = {});

}  // namespace fdm
