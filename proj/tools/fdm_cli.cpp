// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: train, generate, evaluate, verify, synth.

#include "fdm/data_io.hpp"
#include "fdm/eval.hpp"
#include "fdm/json_fields.hpp"
#include "fdm/neural_sde.hpp"
#include "fdm/parallel.hpp"
#include "fdm/processes.hpp"
#include "fdm/training.hpp"
#include "fdm/verify.hpp"

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fdm;

namespace {

constexpr const char* kConfigFormat = "fdm-sde-config/1";

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2, kAbort = 3 };

// Raised for problems with how the tool was invoked (as opposed to bad config values).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config;
  std::string data;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  std::vector<std::string> overrides;
};

std::string now_utc() {
  const auto now = std::chrono::system_clock::now();
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                     std::chrono::floor<std::chrono::seconds>(now));
}

json read_json_file(const fs::path& path, std::string_view what) {
  if (!fs::exists(path)) {
    throw UsageError(fmt::format("{} not found: {}", what, path.string()));
  }
  std::ifstream in(path);
  if (!in) {
    throw UsageError(fmt::format("cannot open {} {}", what, path.string()));
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("{}: malformed JSON: {}", path.string(), e.what()));
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) {
    throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  }
}

// "a.b.c=value": value is parsed as JSON when possible and kept as a string otherwise.
void apply_override(json& root, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError(fmt::format("--set expects key=value, got '{}'", text));
  }
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) {
    value = raw;
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) {
      throw UsageError(fmt::format("--set: empty path component in '{}'", key));
    }
    if (!node->is_object()) {
      throw ConfigError(fmt::format("--set {}: '{}' is not an object", key, part));
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) {
      *node = json::object();
    }
    start = dot + 1;
  }
}

bool has_key(const json& root, const char* section, const char* key) {
  const auto it = root.find(section);
  return it != root.end() && it->is_object() && it->contains(key);
}

struct Resolved {
  TrainConfig train;  // carries sde and score
  DatasetSpec data;
  json raw;  // the config after overrides, before defaults
};

// Reads the config file (if any), applies overrides and parses every section.
Resolved resolve_config(const CommonOptions& opt) {
  Resolved r;
  r.raw = opt.config.empty() ? json::object() : read_json_file(opt.config, "config file");
  for (const std::string& o : opt.overrides) {
    apply_override(r.raw, o);
  }
  if (opt.seed) {
    apply_override(r.raw, fmt::format("train.seed={}", *opt.seed));
  }
  if (!opt.data.empty()) {
    r.raw["data"]["source"] = opt.data;
  }
  reject_unknown_keys(r.raw, {"format", "sde", "score", "train", "data"}, "config");
  if (r.raw.contains("format")) {
    const std::string format = r.raw["format"].is_string() ? r.raw["format"].get<std::string>() : "";
    if (format != kConfigFormat) {
      throw ConfigError(fmt::format("config format '{}' does not match supported '{}'", format,
                                    kConfigFormat));
    }
  }
  if (r.raw.contains("train")) r.train = r.raw["train"].get<TrainConfig>();
  if (r.raw.contains("sde")) r.train.sde = r.raw["sde"].get<NeuralSdeConfig>();
  if (r.raw.contains("score")) r.train.score = r.raw["score"].get<ScoreConfig>();
  if (r.raw.contains("data")) r.data = r.raw["data"].get<DatasetSpec>();
  if (!has_key(r.raw, "data", "split") ||
      !r.raw["data"]["split"].is_object() || !r.raw["data"]["split"].contains("seed")) {
    r.data.split.seed = derive_seed(r.train.seed, "data-shuffle");
  }
  return r;
}

json resolved_json(const Resolved& r) {
  return json{{"format", kConfigFormat},
              {"sde", r.train.sde},
              {"score", r.train.score},
              {"train", r.train},
              {"data", r.data}};
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) {
    throw UsageError("--out DIR is required");
  }
  const fs::path dir(out);
  fs::create_directories(dir);
  return dir;
}

json base_manifest(const std::string& command, std::uint64_t seed, std::size_t threads) {
  return json{{"tool", "fdm"},
              {"version", FDM_VERSION},
              {"command", command},
              {"seed", seed},
              {"threads", threads},
              {"started", now_utc()},
              {"finished", nullptr},
              {"status", "running"}};
}

void finish_manifest(json& manifest, const fs::path& path, const std::string& status) {
  manifest["finished"] = now_utc();
  manifest["status"] = status;
  write_json_file(path, manifest);
}

// ---------------------------------------------------------------- train

int cmd_train(const CommonOptions& opt) {
  Resolved r = resolve_config(opt);
  if (r.data.source.empty()) {
    throw UsageError("train needs a dataset: pass --data PATH or set data.source");
  }
  const fs::path out = prepare_out(opt.out);
  const Dataset ds = load_dataset(r.data);

  // Model shape follows the data unless the config pins it.
  if (!has_key(r.raw, "sde", "d_x")) r.train.sde.d_x = ds.train.dim();
  if (!has_key(r.raw, "sde", "num_steps")) r.train.sde.num_steps = ds.train.grid_size() - 1;
  if (!has_key(r.raw, "sde", "horizon")) {
    r.train.sde.horizon = ds.train.grid().back() - ds.train.grid().front();
  }
  r.train.validate();
  if (r.train.sde.d_x != ds.train.dim()) {
    throw ConfigError(fmt::format("sde.d_x is {} but the data has {} dimensions",
                                  r.train.sde.d_x, ds.train.dim()));
  }

  const fs::path ckpt_dir = out / "checkpoints";
  fs::create_directories(ckpt_dir);
  const json config = resolved_json(r);
  write_json_file(out / "config.json", config);
  json manifest = base_manifest("train", r.train.seed, resolve_threads(opt.threads));
  manifest["config"] = config;
  manifest["data"] = {{"source", r.data.source.string()},
                      {"rows", ds.rows},
                      {"train_paths", ds.train.count()},
                      {"test_paths", ds.test.count()}};
  manifest["artifacts"] = {{"config", "config.json"},
                           {"train_log", "train_log.csv"},
                           {"timing", "timing.csv"},
                           {"normalization", "normalization.json"},
                           {"test_paths", "test_paths.csv"},
                           {"checkpoints", json::array()}};
  const fs::path manifest_path = out / "run_manifest.json";
  write_json_file(manifest_path, manifest);

  write_json_file(out / "normalization.json", ds.normalization);
  save_paths(ds.test, out / "test_paths.csv");

  TrainLog log;
  TrainHooks hooks;
  hooks.on_log = [&](const TrainLogEntry& e) { log.entries.push_back(e); };
  hooks.on_checkpoint = [&](std::size_t step, const NeuralSdeParams& params) {
    const std::string name = fmt::format("checkpoint_{}.json", step);
    save_checkpoint(ckpt_dir / name, r.train.sde, params);
    manifest["artifacts"]["checkpoints"].push_back("checkpoints/" + name);
  };

  auto write_logs = [&] {
    log.write_csv(out / "train_log.csv", false);
    std::ofstream timing(out / "timing.csv");
    timing << "step,seconds\n";
    for (const TrainLogEntry& e : log.entries) fmt::print(timing, "{},{}\n", e.step, e.seconds);
  };

  try {
    fdm_train(r.train, ds.train, hooks);
  } catch (const std::exception& e) {
    write_logs();
    manifest["error"] = e.what();
    finish_manifest(manifest, manifest_path, "aborted");
    throw;
  }
  write_logs();
  finish_manifest(manifest, manifest_path, "completed");
  if (!log.entries.empty()) {
    fmt::print("trained {} steps, final score {}\n", r.train.steps, log.entries.back().score);
  }
  return kOk;
}

// ---------------------------------------------------------------- generate

int cmd_generate(const CommonOptions& opt, const std::string& checkpoint, std::size_t count,
                 const std::string& normalization) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const fs::path out = prepare_out(opt.out);
  const std::uint64_t seed = opt.seed.value_or(0);
  const std::size_t threads = resolve_threads(opt.threads);
  json manifest = base_manifest("generate", seed, threads);
  manifest["checkpoint"] = checkpoint;
  manifest["count"] = count;
  manifest["artifacts"] = {{"paths", "generated.csv"}};
  const fs::path manifest_path = out / "run_manifest.json";
  write_json_file(manifest_path, manifest);

  PathsBatch paths = simulate(ck.params, ck.config, count,
                              CounterNormals(derive_seed(seed, "generate")), threads);
  if (!normalization.empty()) {
    read_json_file(normalization, "normalization file").get<NormalizationParams>().invert(paths);
    manifest["normalization"] = normalization;
  }
  save_paths(paths, out / "generated.csv");
  finish_manifest(manifest, manifest_path, "completed");
  return kOk;
}

// ---------------------------------------------------------------- evaluate

struct EvalFlags {
  std::string checkpoint;
  std::vector<std::size_t> indices;
  std::size_t batch_size = 128;
  std::size_t num_batches = 100;
  bool with_replacement = false;
  std::string normalization;
};

int cmd_evaluate(const CommonOptions& opt, const EvalFlags& flags) {
  if (opt.data.empty()) {
    throw UsageError("evaluate needs held-out paths: pass --data PATH");
  }
  const Checkpoint ck = load_checkpoint(flags.checkpoint);
  PathsBatch held = load_paths(opt.data);
  if (!flags.normalization.empty()) {
    read_json_file(flags.normalization, "normalization file").get<NormalizationParams>().apply(held);
  }
  if (held.grid_size() != ck.config.num_steps + 1 || held.dim() != ck.config.d_x) {
    throw ConfigError(fmt::format(
        "held-out data has {} time points and {} dimensions; the checkpoint expects {} and {}",
        held.grid_size(), held.dim(), ck.config.num_steps + 1, ck.config.d_x));
  }
  const fs::path out = prepare_out(opt.out);
  const std::uint64_t seed = opt.seed.value_or(0);
  const std::size_t threads = resolve_threads(opt.threads);

  ReportOptions options;
  options.eval_indices = flags.indices;
  options.batch_size = flags.batch_size;
  options.num_batches = flags.num_batches;
  options.with_replacement = flags.with_replacement;
  options.threads = threads;

  json manifest = base_manifest("evaluate", seed, threads);
  manifest["checkpoint"] = flags.checkpoint;
  manifest["data"] = opt.data;
  manifest["options"] = {{"eval_indices", flags.indices},
                         {"batch_size", flags.batch_size},
                         {"num_batches", flags.num_batches},
                         {"with_replacement", flags.with_replacement}};
  manifest["artifacts"] = {{"report", "ks_report.csv"}, {"scatter", "scatter.csv"}};
  const fs::path manifest_path = out / "run_manifest.json";
  write_json_file(manifest_path, manifest);

  BatchSource generated = [&](std::size_t b, std::size_t n) {
    return simulate(ck.params, ck.config, n, CounterNormals(derive_seed(seed, "eval-generated", b)));
  };
  const KsReport report = marginal_report(generated, held, options, derive_seed(seed, "eval"));
  report.write_csv(out / "ks_report.csv");
  report.print_table(std::cout);

  const std::size_t n = std::min(flags.batch_size, held.count());
  std::vector<std::size_t> first(n);
  for (std::size_t k = 0; k < n; ++k) first[k] = k;
  joint_scatter_export(generated(0, n), held.select(first), 0, held.dim() > 1 ? 1 : 0,
                       report.eval_indices, out / "scatter.csv");
  finish_manifest(manifest, manifest_path, "completed");
  return kOk;
}

// ---------------------------------------------------------------- verify

struct VerifyFlags {
  std::string which = "all";
  std::optional<std::size_t> trials;
  std::optional<std::size_t> batch;
};

const char* verdict(bool pass) { return pass ? "PASS" : "FAIL"; }

int cmd_verify(const CommonOptions& opt, const VerifyFlags& flags) {
  const Resolved r = resolve_config(opt);
  const fs::path out = prepare_out(opt.out);
  VerifySettings settings;
  settings.grid = r.train.sde.grid();
  settings.gamma = r.train.score.gamma;
  settings.seed = r.train.seed;
  settings.threads = resolve_threads(opt.threads);

  json manifest = base_manifest("verify", settings.seed, settings.threads);
  manifest["config"] = resolved_json(r);
  manifest["which"] = flags.which;
  manifest["artifacts"] = json::object();
  const fs::path manifest_path = out / "run_manifest.json";
  write_json_file(manifest_path, manifest);

  const bool all = flags.which == "all";
  bool ok = true;
  const ReferenceProcess bm = ReferenceProcess::brownian(0.0, 1.0);

  if (all || flags.which == "properness") {
    const std::size_t batch = flags.batch.value_or(256);
    const std::size_t trials = flags.trials.value_or(500);
    struct Case {
      const char* name;
      ReferenceProcess q, p;
    };
    const Case cases[] = {
        {"drift", bm, ReferenceProcess::brownian(0.5, 1.0)},
        {"diffusion", ReferenceProcess::ou(1.0, 0.0, 0.5), ReferenceProcess::ou(1.0, 0.0, 1.0)},
    };
    for (const Case& c : cases) {
      const PropernessResult res = check_properness(c.q, c.p, batch, trials, settings);
      const std::string file = fmt::format("properness_{}.csv", c.name);
      write_csv(res, out / file);
      manifest["artifacts"][fmt::format("properness_{}", c.name)] = file;
      fmt::print("{} properness {}: gap CI [{:.6g}, {:.6g}]\n", verdict(res.pass), c.name,
                 res.gap_ci.lower, res.gap_ci.upper);
      ok = ok && res.pass;
    }
  }
  if (all || flags.which == "concentration") {
    const std::size_t trials = flags.trials.value_or(500);
    std::vector<std::size_t> batches{32, 128, 512};
    if (flags.batch) batches = {*flags.batch};
    const ConcentrationResult res = check_concentration(bm, batches, trials, settings);
    write_csv(res, out / "concentration.csv");
    manifest["artifacts"]["concentration"] = "concentration.csv";
    double worst = 0.0;
    for (const ConcentrationRow& row : res.rows) worst = std::max(worst, row.violation_fraction);
    fmt::print("{} concentration: worst violation fraction {:.4f}\n", verdict(res.pass), worst);
    ok = ok && res.pass;
  }
  if (all || flags.which == "sensitivity") {
    const std::size_t batch = flags.batch.value_or(256);
    const std::size_t trials = flags.trials.value_or(200);
    const std::vector<double> deltas{0.05, 0.1, 0.2, 0.4};
    const SensitivityResult res = check_sensitivity(bm, deltas, batch, trials, settings);
    write_csv(res, out / "sensitivity.csv");
    manifest["artifacts"]["sensitivity"] = "sensitivity.csv";
    fmt::print("{} sensitivity: slope {:.6g}, R^2 {:.4f}\n", verdict(res.pass), res.slope,
               res.r_squared);
    ok = ok && res.pass;
  }
  finish_manifest(manifest, manifest_path, ok ? "pass" : "fail");
  return ok ? kOk : kCheckFailed;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const CommonOptions& opt, const std::string& spec, std::size_t count,
              std::size_t steps, double horizon) {
  const ReferenceProcess process = parse_process(spec);
  process.validate();
  const fs::path out = prepare_out(opt.out);
  const std::uint64_t seed = opt.seed.value_or(0);
  json manifest = base_manifest("synth", seed, resolve_threads(opt.threads));
  manifest["process"] = process.describe();
  manifest["count"] = count;
  manifest["steps"] = steps;
  manifest["horizon"] = horizon;
  manifest["artifacts"] = {{"paths", "synth.csv"}};
  const fs::path manifest_path = out / "run_manifest.json";
  write_json_file(manifest_path, manifest);
  const PathsBatch paths = simulate_exact(process, uniform_grid(horizon, steps), count,
                                          CounterNormals(derive_seed(seed, "synth")));
  save_paths(paths, out / "synth.csv");
  finish_manifest(manifest, manifest_path, "completed");
  return kOk;
}

void add_common(CLI::App* cmd, CommonOptions& opt, bool config, bool data) {
  if (config) {
    cmd->add_option("--config", opt.config, "JSON config file");
    cmd->add_option("--set", opt.overrides, "Override a config key, e.g. train.steps=500");
  }
  if (data) cmd->add_option("--data", opt.data, "Input data file");
  cmd->add_option("--out", opt.out, "Output directory")->required();
  cmd->add_option("--seed", opt.seed, "Master seed");
  cmd->add_option("--threads", opt.threads,
                  "Worker threads (0: FDM_THREADS or all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural SDE training with a finite-dimensional-marginal score"};
  app.set_version_flag("--version", FDM_VERSION);
  app.require_subcommand(1);

  CommonOptions opt;

  CLI::App* train = app.add_subcommand("train", "Train a Neural SDE on a dataset");
  add_common(train, opt, true, true);

  CLI::App* generate = app.add_subcommand("generate", "Sample paths from a checkpoint");
  add_common(generate, opt, false, false);
  std::string checkpoint;
  std::size_t count = 0;
  std::string normalization;
  generate->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
  generate->add_option("--count", count, "Number of paths")->required();
  generate->add_option("--normalization", normalization,
                       "normalization.json used to map back to data units");

  CLI::App* evaluate = app.add_subcommand("evaluate", "Marginal KS report against held-out paths");
  add_common(evaluate, opt, false, true);
  EvalFlags eval;
  evaluate->add_option("--checkpoint", eval.checkpoint, "Checkpoint JSON")->required();
  evaluate->add_option("--indices", eval.indices, "Grid indices to test")->delimiter(',');
  evaluate->add_option("--batch-size", eval.batch_size, "Paths per KS batch");
  evaluate->add_option("--num-batches", eval.num_batches, "Number of KS batches");
  evaluate->add_flag("--with-replacement", eval.with_replacement,
                     "Resample held-out paths with replacement");
  evaluate->add_option("--normalization", eval.normalization,
                       "normalization.json to apply to raw held-out data");

  CLI::App* verify = app.add_subcommand("verify", "Statistical checks on reference processes");
  add_common(verify, opt, true, false);
  VerifyFlags vflags;
  verify->add_option("which", vflags.which, "properness, concentration, sensitivity or all")
      ->check(CLI::IsMember({"properness", "concentration", "sensitivity", "all"}));
  verify->add_option("--trials", vflags.trials, "Override the number of trials");
  verify->add_option("--batch", vflags.batch, "Override the batch size");

  CLI::App* synth = app.add_subcommand("synth", "Write paths of a reference process");
  add_common(synth, opt, false, false);
  std::string process;
  std::size_t synth_count = 0;
  std::size_t steps = 63;
  double horizon = 1.0;
  synth->add_option("--process", process, "e.g. ou:1,0,0.5 or brownian:0,1:dim=2")->required();
  synth->add_option("--count", synth_count, "Number of paths")->required();
  synth->add_option("--steps", steps, "Grid intervals");
  synth->add_option("--horizon", horizon, "Time horizon");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (train->parsed()) return cmd_train(opt);
    if (generate->parsed()) return cmd_generate(opt, checkpoint, count, normalization);
    if (evaluate->parsed()) return cmd_evaluate(opt, eval);
    if (verify->parsed()) return cmd_verify(opt, vflags);
    if (synth->parsed()) return cmd_synth(opt, process, synth_count, steps, horizon);
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  } catch (const TrainingAborted& e) {
    fmt::print(stderr, "aborted: {}\n", e.what());
    return kAbort;
  } catch (const SimulationError& e) {
    fmt::print(stderr, "aborted: {}\n", e.what());
    return kAbort;
  } catch (const DataError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kUsage;
  } catch (const std::out_of_range& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kUsage;
  } catch (const json::exception& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kAbort;
  }
  return kUsage;
}
