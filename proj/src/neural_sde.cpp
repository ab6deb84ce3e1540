// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/neural_sde.hpp"

#include "fdm/json_fields.hpp"
#include "fdm/parallel.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace fdm {

using nlohmann::json;

namespace {

Mlp make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, Philox& rng,
             double last_scale) {
  Mlp mlp;
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t fan_in = sizes[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    const double s = (l + 2 == sizes.size()) ? last_scale : 1.0;
    Dense layer{ad::Array(sizes[l + 1], fan_in), ad::Array(sizes[l + 1], 1)};
    for (double& w : layer.weight.data()) {
      w = s * bound * (2.0 * rng.uniform() - 1.0);
    }
    for (double& b : layer.bias.data()) {
      b = s * bound * (2.0 * rng.uniform() - 1.0);
    }
    mlp.layers.push_back(std::move(layer));
  }
  return mlp;
}

void check_mlp(const Mlp& mlp, std::size_t in, const std::vector<std::size_t>& hidden,
               std::size_t out, const char* name) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  if (mlp.layers.size() + 1 != sizes.size()) {
    throw std::invalid_argument(fmt::format("{} net: {} layers, config implies {}", name,
                                            mlp.layers.size(), sizes.size() - 1));
  }
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    const Dense& d = mlp.layers[l];
    if (d.weight.rows() != sizes[l + 1] || d.weight.cols() != sizes[l] ||
        d.bias.rows() != sizes[l + 1] || d.bias.cols() != 1) {
      throw std::invalid_argument(fmt::format(
          "{} net layer {}: weight {} bias {}, config implies {}x{} and {}x1", name, l,
          d.weight.shape_string(), d.bias.shape_string(), sizes[l + 1], sizes[l], sizes[l + 1]));
    }
  }
}

ad::NodeId activate(ad::Tape& tape, ad::NodeId h, Activation act) {
  return act == Activation::tanh ? tape.tanh(h) : tape.softplus(h);
}

ad::NodeId forward_mlp(ad::Tape& tape, std::span<const ad::NodeId> layer_ids, ad::NodeId input,
                       Activation act) {
  ad::NodeId h = input;
  const std::size_t layers = layer_ids.size() / 2;
  for (std::size_t l = 0; l < layers; ++l) {
    h = tape.add(tape.matmul(layer_ids[2 * l], h), layer_ids[2 * l + 1]);
    if (l + 1 < layers) {
      h = activate(tape, h, act);
    }
  }
  return h;
}

void check_finite(const ad::Array& state, std::size_t step) {
  for (double v : state.data()) {
    if (!std::isfinite(v)) {
      throw SimulationError(step, fmt::format("non-finite latent state at step {}", step));
    }
  }
}

const char* activation_name(Activation a) { return a == Activation::tanh ? "tanh" : "softplus"; }

json array_to_json(const ad::Array& a) {
  return json{{"shape", a.shape()}, {"data", std::vector<double>(a.data().begin(), a.data().end())}};
}

ad::Array array_from_json(const json& j, const std::string& where) {
  reject_unknown_keys(j, {"shape", "data"}, where);
  std::vector<std::size_t> shape;
  std::vector<double> data;
  read_field(j, "shape", where, shape);
  read_field(j, "data", where, data);
  if (shape.size() != 2) {
    throw ConfigError(fmt::format("{}: shape must have two entries", where));
  }
  if (data.size() != shape[0] * shape[1]) {
    throw ConfigError(fmt::format("{}: {} values for shape {}x{}", where, data.size(), shape[0],
                                  shape[1]));
  }
  return ad::Array(shape[0], shape[1], std::move(data));
}

json mlp_to_json(const Mlp& mlp) {
  json layers = json::array();
  for (const Dense& d : mlp.layers) {
    layers.push_back(json{{"weight", array_to_json(d.weight)}, {"bias", array_to_json(d.bias)}});
  }
  return layers;
}

Mlp mlp_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) {
    throw ConfigError(fmt::format("{}: expected an array of layers", where));
  }
  Mlp mlp;
  for (std::size_t l = 0; l < j.size(); ++l) {
    const std::string at = fmt::format("{}[{}]", where, l);
    reject_unknown_keys(j[l], {"weight", "bias"}, at);
    if (!j[l].contains("weight") || !j[l].contains("bias")) {
      throw ConfigError(fmt::format("{}: layer needs weight and bias", at));
    }
    mlp.layers.push_back(Dense{array_from_json(j[l]["weight"], at + ".weight"),
                               array_from_json(j[l]["bias"], at + ".bias")});
  }
  return mlp;
}

}  // namespace

void NeuralSdeConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("sde." + msg); };
  if (d_z == 0) fail("d_z: must be >= 1");
  if (d_x == 0) fail("d_x: must be >= 1");
  if (d_noise == 0) fail("d_noise: must be >= 1");
  if (num_steps == 0) fail("num_steps: must be >= 1");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) fail("horizon: must be > 0");
  if (!(diffusion_cap > 0.0) || !std::isfinite(diffusion_cap)) fail("diffusion_cap: must be > 0");
  for (const auto* hidden : {&initial_hidden, &drift_hidden, &diffusion_hidden}) {
    for (std::size_t h : *hidden) {
      if (h == 0) fail("hidden sizes must be >= 1");
    }
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Dense& d : layers) {
    n += d.weight.size() + d.bias.size();
  }
  return n;
}

std::vector<ad::Array*> NeuralSdeParams::arrays() {
  std::vector<ad::Array*> out;
  for (Mlp* m : {&initial, &drift, &diffusion}) {
    for (Dense& d : m->layers) {
      out.push_back(&d.weight);
      out.push_back(&d.bias);
    }
  }
  out.push_back(&readout_weight);
  out.push_back(&readout_bias);
  return out;
}

std::vector<const ad::Array*> NeuralSdeParams::arrays() const {
  auto mutable_arrays = const_cast<NeuralSdeParams*>(this)->arrays();
  return {mutable_arrays.begin(), mutable_arrays.end()};
}

std::size_t NeuralSdeParams::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Array* a : arrays()) {
    n += a->size();
  }
  return n;
}

NeuralSdeParams init_params(const NeuralSdeConfig& config, std::uint64_t seed) {
  config.validate();
  Philox rng(derive_seed(seed, "init"));
  NeuralSdeParams p;
  p.initial = make_mlp(config.initial_dim(), config.initial_hidden, config.d_z, rng, 1.0);
  p.drift = make_mlp(config.d_z + 1, config.drift_hidden, config.d_z, rng, 1.0);
  p.diffusion =
      make_mlp(config.d_z + 1, config.diffusion_hidden, config.d_z * config.d_noise, rng, 0.1);
  p.readout_weight = ad::Array(config.d_x, config.d_z);
  p.readout_bias = ad::Array(config.d_x, 1);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.d_z));
  for (double& w : p.readout_weight.data()) {
    w = bound * (2.0 * rng.uniform() - 1.0);
  }
  for (double& b : p.readout_bias.data()) {
    b = bound * (2.0 * rng.uniform() - 1.0);
  }
  return p;
}

void check_shapes(const NeuralSdeParams& params, const NeuralSdeConfig& config) {
  check_mlp(params.initial, config.initial_dim(), config.initial_hidden, config.d_z, "initial");
  check_mlp(params.drift, config.d_z + 1, config.drift_hidden, config.d_z, "drift");
  check_mlp(params.diffusion, config.d_z + 1, config.diffusion_hidden,
            config.d_z * config.d_noise, "diffusion");
  if (params.readout_weight.rows() != config.d_x || params.readout_weight.cols() != config.d_z) {
    throw std::invalid_argument(fmt::format("readout weight {}, config implies {}x{}",
                                            params.readout_weight.shape_string(), config.d_x,
                                            config.d_z));
  }
  if (params.readout_bias.rows() != config.d_x || params.readout_bias.cols() != 1) {
    throw std::invalid_argument(fmt::format("readout bias {}, config implies {}x1",
                                            params.readout_bias.shape_string(), config.d_x));
  }
}

ParamLeaves register_params(ad::Tape& tape, const NeuralSdeParams& params, bool differentiable) {
  ParamLeaves leaves;
  for (const ad::Array* a : params.arrays()) {
    leaves.ids.push_back(differentiable ? tape.variable(*a) : tape.constant(*a));
  }
  return leaves;
}

std::vector<ad::NodeId> record_simulation(ad::Tape& tape, const ParamLeaves& leaves,
                                          const NeuralSdeConfig& config,
                                          std::span<const double> grid,
                                          const CounterNormals& noise, std::uint64_t first_path,
                                          std::size_t count) {
  if (count == 0) {
    throw std::invalid_argument("record_simulation: batch must contain at least one path");
  }
  if (grid.size() < 2) {
    throw std::invalid_argument("record_simulation: grid needs at least two points");
  }
  const std::size_t n_initial = 2 * (config.initial_hidden.size() + 1);
  const std::size_t n_drift = 2 * (config.drift_hidden.size() + 1);
  const std::size_t n_diffusion = 2 * (config.diffusion_hidden.size() + 1);
  if (leaves.ids.size() != n_initial + n_drift + n_diffusion + 2) {
    throw std::invalid_argument("record_simulation: parameter leaves do not match config");
  }
  std::span<const ad::NodeId> ids(leaves.ids);
  const auto initial_ids = ids.subspan(0, n_initial);
  const auto drift_ids = ids.subspan(n_initial, n_drift);
  const auto diffusion_ids = ids.subspan(n_initial + n_drift, n_diffusion);
  const ad::NodeId readout_w = ids[ids.size() - 2];
  const ad::NodeId readout_b = ids[ids.size() - 1];

  const std::size_t dz = config.d_z;
  const std::size_t dn = config.d_noise;
  const std::size_t d0 = config.initial_dim();
  const double horizon = grid.back() - grid.front();

  // Per-path draws: address step 0 holds the seed vector, step k+1 the
  // increment of step k.
  std::vector<double> buffer(std::max(d0, dn));
  ad::Array seed_vectors(d0, count);
  for (std::size_t p = 0; p < count; ++p) {
    noise.fill(first_path + p, 0, std::span<double>(buffer).first(d0));
    for (std::size_t r = 0; r < d0; ++r) {
      seed_vectors(r, p) = buffer[r];
    }
  }
  ad::NodeId state = forward_mlp(tape, initial_ids, tape.constant(std::move(seed_vectors)),
                                 config.activation);
  check_finite(tape.value(state), 0);

  // Sums the d_noise products of each state row.
  ad::Array selector(dz, dz * dn);
  for (std::size_t r = 0; r < dz; ++r) {
    for (std::size_t k = 0; k < dn; ++k) {
      selector(r, r * dn + k) = 1.0;
    }
  }
  const ad::NodeId selector_id = tape.constant(std::move(selector));

  std::vector<ad::NodeId> outputs;
  outputs.reserve(grid.size());
  outputs.push_back(tape.add(tape.matmul(readout_w, state), readout_b));

  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double dt = grid[k + 1] - grid[k];
    const double sqrt_dt = std::sqrt(dt);

    const ad::NodeId time_row = tape.constant(ad::Array(1, count, (grid[k] - grid.front()) / horizon));
    const std::array<ad::NodeId, 2> parts{state, time_row};
    const ad::NodeId input = tape.concat(parts, 0);

    const ad::NodeId drift = forward_mlp(tape, drift_ids, input, config.activation);
    const ad::NodeId raw_diffusion = forward_mlp(tape, diffusion_ids, input, config.activation);
    const ad::NodeId diffusion = tape.scale(tape.tanh(raw_diffusion), config.diffusion_cap);

    ad::Array increments(dz * dn, count);
    for (std::size_t p = 0; p < count; ++p) {
      noise.fill(first_path + p, k + 1, std::span<double>(buffer).first(dn));
      for (std::size_t r = 0; r < dz; ++r) {
        for (std::size_t q = 0; q < dn; ++q) {
          increments(r * dn + q, p) = sqrt_dt * buffer[q];
        }
      }
    }
    const ad::NodeId noise_term =
        tape.matmul(selector_id, tape.mul(diffusion, tape.constant(std::move(increments))));

    state = tape.add(tape.add(state, tape.scale(drift, dt)), noise_term);
    check_finite(tape.value(state), k + 1);
    outputs.push_back(tape.add(tape.matmul(readout_w, state), readout_b));
  }
  return outputs;
}

PathsBatch collect_paths(const ad::Tape& tape, std::span<const ad::NodeId> outputs,
                         std::span<const double> grid) {
  if (outputs.size() != grid.size()) {
    throw std::invalid_argument("collect_paths: one output node per grid point required");
  }
  const ad::Array& first = tape.value(outputs.front());
  PathsBatch batch(std::vector<double>(grid.begin(), grid.end()), first.cols(), first.rows());
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    const ad::Array& x = tape.value(outputs[t]);
    for (std::size_t p = 0; p < x.cols(); ++p) {
      for (std::size_t d = 0; d < x.rows(); ++d) {
        batch(p, t, d) = x(d, p);
      }
    }
  }
  return batch;
}

PathsBatch simulate(const NeuralSdeParams& params, const NeuralSdeConfig& config,
                    std::size_t count, const CounterNormals& noise, std::size_t threads) {
  config.validate();
  check_shapes(params, config);
  const std::vector<double> grid = config.grid();
  if (count == 0) {
    return PathsBatch(grid, 0, config.d_x);
  }
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (count + kChunk - 1) / kChunk;
  std::vector<PathsBatch> parts(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t first = c * kChunk;
    const std::size_t n = std::min(kChunk, count - first);
    ad::Tape tape;
    const ParamLeaves leaves = register_params(tape, params, false);
    const auto outputs = record_simulation(tape, leaves, config, grid, noise, first, n);
    parts[c] = collect_paths(tape, outputs, grid);
  });
  PathsBatch out;
  for (const PathsBatch& part : parts) {
    out.append(part);
  }
  return out;
}

void to_json(json& j, const NeuralSdeConfig& c) {
  j = json{{"d_initial", c.d_initial},
           {"d_z", c.d_z},
           {"d_x", c.d_x},
           {"d_noise", c.d_noise},
           {"initial_hidden", c.initial_hidden},
           {"drift_hidden", c.drift_hidden},
           {"diffusion_hidden", c.diffusion_hidden},
           {"horizon", c.horizon},
           {"num_steps", c.num_steps},
           {"activation", activation_name(c.activation)},
           {"diffusion_cap", c.diffusion_cap}};
}

void from_json(const json& j, NeuralSdeConfig& c) {
  constexpr std::string_view s = "sde";
  reject_unknown_keys(j,
                      {"d_initial", "d_z", "d_x", "d_noise", "initial_hidden", "drift_hidden",
                       "diffusion_hidden", "horizon", "num_steps", "activation", "diffusion_cap"},
                      s);
  read_field(j, "d_initial", s, c.d_initial);
  read_field(j, "d_z", s, c.d_z);
  read_field(j, "d_x", s, c.d_x);
  read_field(j, "d_noise", s, c.d_noise);
  read_field(j, "initial_hidden", s, c.initial_hidden);
  read_field(j, "drift_hidden", s, c.drift_hidden);
  read_field(j, "diffusion_hidden", s, c.diffusion_hidden);
  read_field(j, "horizon", s, c.horizon);
  read_field(j, "num_steps", s, c.num_steps);
  read_field(j, "diffusion_cap", s, c.diffusion_cap);
  std::string act = activation_name(c.activation);
  read_field(j, "activation", s, act);
  if (act == "tanh") {
    c.activation = Activation::tanh;
  } else if (act == "softplus") {
    c.activation = Activation::softplus;
  } else {
    throw ConfigError(fmt::format("sde.activation: expected tanh or softplus, got '{}'", act));
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const NeuralSdeConfig& config,
                     const NeuralSdeParams& params) {
  check_shapes(params, config);
  json j{{"format", kCheckpointFormat},
         {"config", config},
         {"params",
          {{"initial", mlp_to_json(params.initial)},
           {"drift", mlp_to_json(params.drift)},
           {"diffusion", mlp_to_json(params.diffusion)},
           {"readout_weight", array_to_json(params.readout_weight)},
           {"readout_bias", array_to_json(params.readout_bias)}}}};
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
  }
  out << j.dump(1) << '\n';
  if (!out) {
    throw std::runtime_error(fmt::format("failed writing checkpoint {}", path.string()));
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error(fmt::format("cannot open checkpoint {}", path.string()));
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("{}: malformed JSON: {}", path.string(), e.what()));
  }
  reject_unknown_keys(j, {"format", "config", "params"}, "checkpoint");
  const std::string format = j.value("format", "");
  if (format != kCheckpointFormat) {
    throw ConfigError(fmt::format("checkpoint format '{}' does not match supported '{}'", format,
                                  kCheckpointFormat));
  }
  if (!j.contains("config") || !j.contains("params")) {
    throw ConfigError("checkpoint: missing config or params");
  }
  Checkpoint ck;
  ck.config = j["config"].get<NeuralSdeConfig>();
  const json& p = j["params"];
  reject_unknown_keys(p, {"initial", "drift", "diffusion", "readout_weight", "readout_bias"},
                      "checkpoint.params");
  for (const char* key : {"initial", "drift", "diffusion", "readout_weight", "readout_bias"}) {
    if (!p.contains(key)) {
      throw ConfigError(fmt::format("checkpoint.params.{}: missing", key));
    }
  }
  ck.params.initial = mlp_from_json(p["initial"], "checkpoint.params.initial");
  ck.params.drift = mlp_from_json(p["drift"], "checkpoint.params.drift");
  ck.params.diffusion = mlp_from_json(p["diffusion"], "checkpoint.params.diffusion");
  ck.params.readout_weight = array_from_json(p["readout_weight"], "checkpoint.params.readout_weight");
  ck.params.readout_bias = array_from_json(p["readout_bias"], "checkpoint.params.readout_bias");
  try {
    check_shapes(ck.params, ck.config);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("checkpoint dimension mismatch: {}", e.what()));
  }
  return ck;
}

}  // namespace fdm
