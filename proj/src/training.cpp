// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/training.hpp"

#include "fdm/json_fields.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace fdm {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train." + msg); };
  if (steps < 1) fail("steps: must be >= 1");
  if (batch < 2) fail(fmt::format("batch: must be >= 2, got {}", batch));
  if (!(learning_rate > 0.0)) fail("learning_rate: must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1: must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2: must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps: must be > 0");
  if (log_every < 1) fail("log_every: must be >= 1");
  score.validate();
  sde.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"steps", c.steps},
           {"batch", c.batch},
           {"learning_rate", c.learning_rate},
           {"adam_beta1", c.adam_beta1},
           {"adam_beta2", c.adam_beta2},
           {"adam_eps", c.adam_eps},
           {"seed", c.seed},
           {"checkpoint_every", c.checkpoint_every},
           {"log_every", c.log_every}};
}

void from_json(const json& j, TrainConfig& c) {
  constexpr std::string_view s = "train";
  reject_unknown_keys(j,
                      {"steps", "batch", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
                       "seed", "checkpoint_every", "log_every"},
                      s);
  read_field(j, "steps", s, c.steps);
  read_field(j, "batch", s, c.batch);
  read_field(j, "learning_rate", s, c.learning_rate);
  read_field(j, "adam_beta1", s, c.adam_beta1);
  read_field(j, "adam_beta2", s, c.adam_beta2);
  read_field(j, "adam_eps", s, c.adam_eps);
  read_field(j, "seed", s, c.seed);
  read_field(j, "checkpoint_every", s, c.checkpoint_every);
  read_field(j, "log_every", s, c.log_every);
}

void adam_step(std::span<ad::Array* const> params, std::span<const ad::Array> grads,
               AdamState& state, const AdamSettings& settings) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument(fmt::format("adam_step: {} parameter arrays but {} gradients",
                                            params.size(), grads.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(grads[k])) {
      throw std::invalid_argument(fmt::format("adam_step: parameter {} is {} but gradient is {}",
                                              k, params[k]->shape_string(),
                                              grads[k].shape_string()));
    }
  }
  if (state.first_moment.empty()) {
    for (const ad::Array* p : params) {
      state.first_moment.emplace_back(p->rows(), p->cols());
      state.second_moment.emplace_back(p->rows(), p->cols());
    }
  } else if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(settings.beta1, t);
  const double c2 = 1.0 - std::pow(settings.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto g = grads[k].data();
    auto m = state.first_moment[k].data();
    auto v = state.second_moment[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = settings.beta1 * m[i] + (1.0 - settings.beta1) * g[i];
      v[i] = settings.beta2 * v[i] + (1.0 - settings.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= settings.learning_rate * m_hat / (std::sqrt(v_hat) + settings.eps);
    }
  }
}

void TrainLog::write_csv(const std::filesystem::path& path, bool include_seconds) const {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  }
  out << (include_seconds ? "step,score,grad_norm,seconds\n" : "step,score,grad_norm\n");
  for (const TrainLogEntry& e : entries) {
    if (include_seconds) {
      fmt::print(out, "{},{},{},{}\n", e.step, e.score, e.grad_norm, e.seconds);
    } else {
      fmt::print(out, "{},{},{}\n", e.step, e.score, e.grad_norm);
    }
  }
  if (!out) {
    throw std::runtime_error(fmt::format("failed writing {}", path.string()));
  }
}

std::vector<std::vector<std::size_t>> draw_timestamps(const ScoreConfig& score,
                                                      std::size_t grid_size, std::size_t count,
                                                      Philox& rng) {
  switch (score.estimator) {
    case Estimator::main: {
      const auto pairs = score.sampler.sample(grid_size, count, rng);
      std::vector<std::vector<std::size_t>> out;
      out.reserve(pairs.size());
      for (const auto& p : pairs) out.push_back({p.first, p.second});
      return out;
    }
    case Estimator::concat:
      return sample_tuples(grid_size, count, score.concat_count, rng);
    case Estimator::adjacent:
      return {};
  }
  return {};
}

StepGraph record_step(const NeuralSdeParams& params, const TrainConfig& config,
                      const PathsBatch& data, const StepDraws& draws) {
  StepGraph g;
  g.leaves = register_params(g.tape, params, true);
  const CounterNormals noise(draws.noise_seed);
  const auto outputs = record_simulation(g.tape, g.leaves, config.sde, data.grid(), noise, 0,
                                         draws.data_indices.size());
  const PathsBatch batch = data.select(draws.data_indices);
  ad::NodeId score = 0;
  if (config.score.estimator == Estimator::adjacent) {
    score = record_score_adjacent(g.tape, outputs, batch, config.score.gamma);
  } else {
    score = record_score_concat(g.tape, outputs, batch, draws.tuples, config.score.gamma);
  }
  // The displayed estimator is lower-is-better with a positive-definite
  // kernel, so the proper (higher-is-better) score is its negation.
  g.score = -g.tape.value(score).item();
  g.loss = score;
  return g;
}

TrainResult fdm_train(const TrainConfig& config, const PathsBatch& data, const TrainHooks& hooks) {
  config.validate();
  return fdm_train(config, data, init_params(config.sde, config.seed), hooks);
}

TrainResult fdm_train(const TrainConfig& config, const PathsBatch& data, NeuralSdeParams initial,
                      const TrainHooks& hooks) {
  config.validate();
  check_shapes(initial, config.sde);
  if (data.count() < config.batch) {
    throw std::invalid_argument(fmt::format(
        "training data has {} paths, fewer than the batch size {}", data.count(), config.batch));
  }
  if (data.dim() != config.sde.d_x) {
    throw std::invalid_argument(fmt::format("training data has {} dimension(s), sde.d_x is {}",
                                            data.dim(), config.sde.d_x));
  }
  const std::vector<double> grid = config.sde.grid();
  if (data.grid_size() != grid.size()) {
    throw std::invalid_argument(fmt::format(
        "training data grid has {} points, sde.num_steps = {} implies {}", data.grid_size(),
        config.sde.num_steps, grid.size()));
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (std::abs(data.grid()[k] - grid[k]) > 1e-9 * config.sde.horizon) {
      throw std::invalid_argument(fmt::format(
          "training data grid point {} is {}, sde grid has {}", k, data.grid()[k], grid[k]));
    }
  }

  TrainResult result;
  result.params = std::move(initial);
  AdamState adam;
  const AdamSettings settings{config.learning_rate, config.adam_beta1, config.adam_beta2,
                              config.adam_eps};

  std::vector<std::size_t> order(data.count());
  std::size_t cursor = order.size();
  std::size_t epoch = 0;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t step = 1; step <= config.steps; ++step) {
    StepDraws draws;
    if (cursor + config.batch > order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      Philox shuffle(derive_seed(config.seed, "data-shuffle", epoch++));
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        std::swap(order[i], order[i + shuffle.index(order.size() - i)]);
      }
      cursor = 0;
    }
    draws.data_indices.assign(order.begin() + static_cast<long>(cursor),
                              order.begin() + static_cast<long>(cursor + config.batch));
    cursor += config.batch;
    Philox pair_rng(derive_seed(config.seed, "pairs", step));
    draws.tuples = draw_timestamps(config.score, data.grid_size(), config.batch, pair_rng);
    draws.noise_seed = derive_seed(config.seed, "sim", step);

    StepGraph graph;
    try {
      graph = record_step(result.params, config, data, draws);
    } catch (const SimulationError& e) {
      throw TrainingAborted(step, fmt::format("step {}: {}", step, e.what()));
    }
    if (!std::isfinite(graph.score)) {
      throw TrainingAborted(step, fmt::format("step {}: non-finite score", step));
    }
    const ad::Gradients grads = graph.tape.backward(graph.loss);
    std::vector<ad::Array> grad_arrays;
    grad_arrays.reserve(graph.leaves.ids.size());
    double norm2 = 0.0;
    for (ad::NodeId id : graph.leaves.ids) {
      grad_arrays.push_back(grads.at(id));
      for (double g : grad_arrays.back().data()) norm2 += g * g;
    }
    const double grad_norm = std::sqrt(norm2);
    if (!std::isfinite(grad_norm)) {
      throw TrainingAborted(step, fmt::format("step {}: non-finite gradient", step));
    }
    const auto arrays = result.params.arrays();
    adam_step(arrays, grad_arrays, adam, settings);

    if (step % config.log_every == 0 || step == config.steps) {
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.log.entries.push_back({step, graph.score, grad_norm, seconds});
      if (hooks.on_log) hooks.on_log(result.log.entries.back());
    }
    const bool periodic = config.checkpoint_every > 0 && step % config.checkpoint_every == 0;
    if (hooks.on_checkpoint && (periodic || step == config.steps)) {
      hooks.on_checkpoint(step, result.params);
    }
  }
  return result;
}

}  // namespace fdm
