// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "fdm/data_io.hpp"

#include "fdm/json_fields.hpp"
#include "fdm/rng.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

namespace fdm {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(DataError::Kind::io, fmt::format("cannot open {}", path.string()));
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    lines.push_back(line);
  }
  return lines;
}

bool blank(std::string_view s) { return trim(s).empty(); }

const char* normalization_name(Normalization n) {
  return n == Normalization::standardize ? "standardize" : "none";
}
const char* split_name(SplitKind k) {
  return k == SplitKind::random ? "random" : "chronological_last";
}
const char* format_name(DataFormat f) {
  switch (f) {
    case DataFormat::automatic: return "auto";
    case DataFormat::series: return "series";
    case DataFormat::paths: return "paths";
  }
  return "auto";
}

// Returns (train, test) window start rows.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> window_starts(
    std::size_t rows, const DatasetSpec& spec) {
  std::vector<std::size_t> train, test;
  if (spec.split.kind == SplitKind::chronological_last) {
    const auto held = static_cast<std::size_t>(std::llround(static_cast<double>(rows) * spec.split.fraction));
    const std::size_t boundary = rows - std::min(held, rows);
    for (std::size_t s = 0; s + spec.window <= boundary; s += spec.stride) train.push_back(s);
    for (std::size_t s = boundary; s + spec.window <= rows; s += spec.stride) test.push_back(s);
  } else {
    std::vector<std::size_t> all;
    for (std::size_t s = 0; s + spec.window <= rows; s += spec.stride) all.push_back(s);
    if (all.size() < 2) {
      throw DataError(DataError::Kind::too_few_rows,
                      fmt::format("{} rows yield {} window(s) of length {} with stride {}; a "
                                  "random split needs at least 2",
                                  rows, all.size(), spec.window, spec.stride));
    }
    auto held = static_cast<std::size_t>(
        std::llround(static_cast<double>(all.size()) * spec.split.fraction));
    held = std::clamp<std::size_t>(held, 1, all.size() - 1);
    Philox rng(derive_seed(spec.split.seed, "split"));
    std::vector<std::size_t> perm(all.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i + 1 < perm.size(); ++i) {
      std::swap(perm[i], perm[i + rng.index(perm.size() - i)]);
    }
    std::vector<std::size_t> test_ids(perm.begin(), perm.begin() + static_cast<long>(held));
    std::vector<std::size_t> train_ids(perm.begin() + static_cast<long>(held), perm.end());
    std::sort(test_ids.begin(), test_ids.end());
    std::sort(train_ids.begin(), train_ids.end());
    for (std::size_t id : train_ids) train.push_back(all[id]);
    for (std::size_t id : test_ids) test.push_back(all[id]);
  }
  if (train.empty() || test.empty()) {
    throw DataError(DataError::Kind::too_few_rows,
                    fmt::format("{} rows leave {} training and {} test window(s) of length {}; "
                                "need at least one of each",
                                rows, train.size(), test.size(), spec.window));
  }
  return {train, test};
}

NormalizationParams fit_normalization(const PathsBatch& train, Normalization kind) {
  NormalizationParams n;
  n.mean.assign(train.dim(), 0.0);
  n.scale.assign(train.dim(), 1.0);
  if (kind == Normalization::none || train.count() == 0) {
    return n;
  }
  const std::size_t per_dim = train.count() * train.grid_size();
  for (std::size_t d = 0; d < train.dim(); ++d) {
    double sum = 0.0;
    for (std::size_t p = 0; p < train.count(); ++p)
      for (std::size_t t = 0; t < train.grid_size(); ++t) sum += train(p, t, d);
    const double mean = sum / static_cast<double>(per_dim);
    double ss = 0.0;
    for (std::size_t p = 0; p < train.count(); ++p)
      for (std::size_t t = 0; t < train.grid_size(); ++t) {
        const double e = train(p, t, d) - mean;
        ss += e * e;
      }
    const double sd = std::sqrt(ss / static_cast<double>(per_dim));
    n.mean[d] = mean;
    n.scale[d] = sd > 0.0 ? sd : 1.0;
  }
  return n;
}

}  // namespace

void DatasetSpec::validate() const {
  if (window < 2) {
    throw std::invalid_argument(fmt::format("data.window: must be >= 2, got {}", window));
  }
  if (stride < 1) {
    throw std::invalid_argument("data.stride: must be >= 1");
  }
  if (!(split.fraction > 0.0 && split.fraction < 1.0)) {
    throw std::invalid_argument(
        fmt::format("data.split.fraction: must lie in (0, 1), got {}", split.fraction));
  }
}

void to_json(json& j, const DatasetSpec& s) {
  j = json{{"source", s.source.string()},
           {"format", format_name(s.format)},
           {"columns", s.columns},
           {"window", s.window},
           {"stride", s.stride},
           {"normalization", normalization_name(s.normalization)},
           {"split",
            {{"kind", split_name(s.split.kind)},
             {"fraction", s.split.fraction},
             {"seed", s.split.seed}}}};
}

void from_json(const json& j, DatasetSpec& s) {
  constexpr std::string_view sec = "data";
  reject_unknown_keys(
      j, {"source", "format", "columns", "window", "stride", "normalization", "split"}, sec);
  std::string source = s.source.string();
  read_field(j, "source", sec, source);
  s.source = source;
  read_field(j, "columns", sec, s.columns);
  read_field(j, "window", sec, s.window);
  read_field(j, "stride", sec, s.stride);
  std::string format = format_name(s.format);
  read_field(j, "format", sec, format);
  if (format == "auto") s.format = DataFormat::automatic;
  else if (format == "series") s.format = DataFormat::series;
  else if (format == "paths") s.format = DataFormat::paths;
  else throw ConfigError(fmt::format("data.format: expected auto, series or paths, got '{}'", format));
  std::string norm = normalization_name(s.normalization);
  read_field(j, "normalization", sec, norm);
  if (norm == "standardize") s.normalization = Normalization::standardize;
  else if (norm == "none") s.normalization = Normalization::none;
  else throw ConfigError(fmt::format("data.normalization: expected standardize or none, got '{}'", norm));
  if (auto it = j.find("split"); it != j.end()) {
    constexpr std::string_view ssec = "data.split";
    reject_unknown_keys(*it, {"kind", "fraction", "seed"}, ssec);
    std::string kind = split_name(s.split.kind);
    read_field(*it, "kind", ssec, kind);
    if (kind == "random") s.split.kind = SplitKind::random;
    else if (kind == "chronological_last") s.split.kind = SplitKind::chronological_last;
    else throw ConfigError(fmt::format("data.split.kind: expected random or chronological_last, got '{}'", kind));
    read_field(*it, "fraction", ssec, s.split.fraction);
    read_field(*it, "seed", ssec, s.split.seed);
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void NormalizationParams::apply(PathsBatch& batch) const {
  if (batch.count() == 0) return;
  if (batch.dim() != mean.size()) {
    throw std::invalid_argument("normalization: dimension mismatch");
  }
  for (std::size_t p = 0; p < batch.count(); ++p)
    for (std::size_t t = 0; t < batch.grid_size(); ++t)
      for (std::size_t d = 0; d < batch.dim(); ++d)
        batch(p, t, d) = (batch(p, t, d) - mean[d]) / scale[d];
}

void NormalizationParams::invert(PathsBatch& batch) const {
  if (batch.count() == 0) return;
  if (batch.dim() != mean.size()) {
    throw std::invalid_argument("normalization: dimension mismatch");
  }
  for (std::size_t p = 0; p < batch.count(); ++p)
    for (std::size_t t = 0; t < batch.grid_size(); ++t)
      for (std::size_t d = 0; d < batch.dim(); ++d)
        batch(p, t, d) = batch(p, t, d) * scale[d] + mean[d];
}

void to_json(json& j, const NormalizationParams& n) {
  j = json{{"mean", n.mean}, {"scale", n.scale}};
}

void from_json(const json& j, NormalizationParams& n) {
  reject_unknown_keys(j, {"mean", "scale"}, "normalization");
  read_field(j, "mean", "normalization", n.mean);
  read_field(j, "scale", "normalization", n.scale);
  if (n.mean.size() != n.scale.size()) {
    throw ConfigError("normalization: mean and scale lengths differ");
  }
}

Dataset make_dataset(const std::vector<double>& series, std::size_t dims, const DatasetSpec& spec) {
  spec.validate();
  if (dims == 0 || series.size() % dims != 0) {
    throw std::invalid_argument("make_dataset: series size is not a multiple of the dimension");
  }
  const std::size_t rows = series.size() / dims;
  const auto [train_starts, test_starts] = window_starts(rows, spec);
  const std::vector<double> grid = uniform_grid(1.0, spec.window - 1);
  auto build = [&](const std::vector<std::size_t>& starts) {
    PathsBatch batch(grid, starts.size(), dims);
    for (std::size_t p = 0; p < starts.size(); ++p)
      for (std::size_t t = 0; t < spec.window; ++t)
        for (std::size_t d = 0; d < dims; ++d)
          batch(p, t, d) = series[(starts[p] + t) * dims + d];
    return batch;
  };
  Dataset ds;
  ds.train = build(train_starts);
  ds.test = build(test_starts);
  ds.rows = rows;
  ds.normalization = fit_normalization(ds.train, spec.normalization);
  ds.normalization.apply(ds.train);
  ds.normalization.apply(ds.test);
  return ds;
}

Dataset make_dataset(const PathsBatch& paths, const DatasetSpec& spec) {
  spec.validate();
  const std::size_t n = paths.count();
  if (n < 2) {
    throw DataError(DataError::Kind::too_few_rows,
                    fmt::format("{} path(s); a train/test split needs at least 2", n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto held = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.split.fraction));
  held = std::clamp<std::size_t>(held, 1, n - 1);
  std::vector<std::size_t> train_ids, test_ids;
  if (spec.split.kind == SplitKind::random) {
    Philox rng(derive_seed(spec.split.seed, "split"));
    for (std::size_t i = 0; i + 1 < n; ++i) {
      std::swap(order[i], order[i + rng.index(n - i)]);
    }
    test_ids.assign(order.begin(), order.begin() + static_cast<long>(held));
    train_ids.assign(order.begin() + static_cast<long>(held), order.end());
    std::sort(test_ids.begin(), test_ids.end());
    std::sort(train_ids.begin(), train_ids.end());
  } else {
    train_ids.assign(order.begin(), order.end() - static_cast<long>(held));
    test_ids.assign(order.end() - static_cast<long>(held), order.end());
  }
  Dataset ds;
  ds.train = paths.select(train_ids);
  ds.test = paths.select(test_ids);
  ds.rows = n;
  ds.normalization = fit_normalization(ds.train, spec.normalization);
  ds.normalization.apply(ds.train);
  ds.normalization.apply(ds.test);
  return ds;
}

Dataset load_dataset(const DatasetSpec& spec) {
  spec.validate();
  const auto lines = read_lines(spec.source);
  if (lines.empty() || blank(lines[0])) {
    throw DataError(DataError::Kind::malformed,
                    fmt::format("{}:1: missing header row", spec.source.string()));
  }
  const auto header = split_fields(lines[0]);
  DataFormat format = spec.format;
  if (format == DataFormat::automatic) {
    format = (!header.empty() && header[0] == "path_id") ? DataFormat::paths : DataFormat::series;
  }
  if (format == DataFormat::paths) {
    return make_dataset(load_paths(spec.source), spec);
  }

  std::vector<std::size_t> picks;
  std::vector<std::string> names = spec.columns;
  if (names.empty()) {
    for (auto h : header) names.emplace_back(h);
  }
  for (const std::string& name : names) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(DataError::Kind::missing_column,
                      fmt::format("{}:1: column '{}' not found in header", spec.source.string(),
                                  name));
    }
    picks.push_back(static_cast<std::size_t>(std::distance(header.begin(), it)));
  }
  const std::size_t dims = picks.size();
  std::vector<double> series;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (blank(lines[li])) continue;
    const auto fields = split_fields(lines[li]);
    if (fields.size() != header.size()) {
      throw DataError(DataError::Kind::malformed,
                      fmt::format("{}:{}: expected {} fields, got {}", spec.source.string(),
                                  li + 1, header.size(), fields.size()));
    }
    for (std::size_t k = 0; k < dims; ++k) {
      const auto v = parse_number(fields[picks[k]]);
      if (!v || !std::isfinite(*v)) {
        throw DataError(DataError::Kind::non_numeric,
                        fmt::format("{}:{}: column '{}' value '{}' is not a finite number",
                                    spec.source.string(), li + 1, names[k], fields[picks[k]]));
      }
      series.push_back(*v);
    }
  }
  const std::size_t rows = series.size() / std::max<std::size_t>(dims, 1);
  if (rows < spec.window) {
    throw DataError(DataError::Kind::too_few_rows,
                    fmt::format("{}: {} data rows, window length is {}", spec.source.string(), rows,
                                spec.window));
  }
  try {
    return make_dataset(series, dims, spec);
  } catch (const DataError& e) {
    throw DataError(e.kind(), fmt::format("{}: {}", spec.source.string(), e.what()));
  }
}

void save_paths(const PathsBatch& batch, const std::filesystem::path& out_path) {
  std::ofstream out(out_path);
  if (!out) {
    throw DataError(DataError::Kind::io, fmt::format("cannot write {}", out_path.string()));
  }
  out << "path_id,t";
  for (std::size_t d = 0; d < batch.dim(); ++d) {
    fmt::print(out, ",dim_{}", d);
  }
  out << '\n';
  std::string row;
  for (std::size_t p = 0; p < batch.count(); ++p) {
    for (std::size_t t = 0; t < batch.grid_size(); ++t) {
      row.clear();
      fmt::format_to(std::back_inserter(row), "{},{}", p, batch.grid()[t]);
      for (std::size_t d = 0; d < batch.dim(); ++d) {
        fmt::format_to(std::back_inserter(row), ",{}", batch(p, t, d));
      }
      row.push_back('\n');
      out << row;
    }
  }
  if (!out) {
    throw DataError(DataError::Kind::io, fmt::format("failed writing {}", out_path.string()));
  }
}

PathsBatch load_paths(const std::filesystem::path& in_path) {
  const auto lines = read_lines(in_path);
  const std::string name = in_path.string();
  if (lines.empty()) {
    throw DataError(DataError::Kind::malformed, fmt::format("{}:1: missing header row", name));
  }
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header[0] != "path_id" || header[1] != "t") {
    throw DataError(DataError::Kind::malformed,
                    fmt::format("{}:1: header must start with path_id,t", name));
  }
  const std::size_t dims = header.size() - 2;
  for (std::size_t d = 0; d < dims; ++d) {
    if (header[d + 2] != fmt::format("dim_{}", d)) {
      throw DataError(DataError::Kind::malformed,
                      fmt::format("{}:1: column {} should be dim_{}, found '{}'", name, d + 3, d,
                                  header[d + 2]));
    }
  }

  std::vector<double> grid;
  std::vector<double> values;
  std::size_t count = 0;
  std::optional<double> current_id;
  std::size_t t_index = 0;
  bool first_path = true;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (blank(lines[li])) continue;
    const auto fields = split_fields(lines[li]);
    if (fields.size() != header.size()) {
      throw DataError(DataError::Kind::malformed,
                      fmt::format("{}:{}: expected {} fields, got {}", name, li + 1, header.size(),
                                  fields.size()));
    }
    std::vector<double> nums(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const auto v = parse_number(fields[k]);
      if (!v) {
        throw DataError(DataError::Kind::non_numeric,
                        fmt::format("{}:{}: column '{}' value '{}' is not a number", name, li + 1,
                                    header[k], fields[k]));
      }
      nums[k] = *v;
    }
    if (!current_id || nums[0] != *current_id) {
      if (current_id) {
        if (first_path) {
          first_path = false;
        } else if (t_index != grid.size()) {
          throw DataError(DataError::Kind::malformed,
                          fmt::format("{}:{}: previous path has {} time points, expected {}", name,
                                      li + 1, t_index, grid.size()));
        }
      }
      current_id = nums[0];
      t_index = 0;
      ++count;
    }
    if (first_path) {
      grid.push_back(nums[1]);
    } else if (t_index >= grid.size() || grid[t_index] != nums[1]) {
      throw DataError(DataError::Kind::malformed,
                      fmt::format("{}:{}: time {} does not match the grid of the first path", name,
                                  li + 1, fields[1]));
    }
    ++t_index;
    values.insert(values.end(), nums.begin() + 2, nums.end());
  }
  if (count > 1 && t_index != grid.size()) {
    throw DataError(DataError::Kind::malformed,
                    fmt::format("{}: last path has {} time points, expected {}", name, t_index,
                                grid.size()));
  }
  PathsBatch batch(std::move(grid), count, dims, std::move(values));
  try {
    batch.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(DataError::Kind::malformed, fmt::format("{}: {}", name, e.what()));
  }
  return batch;
}

}  // namespace fdm
