// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fdm/paths.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fdm {

/// Malformed or insufficient input data. The message carries the file
/// location (line and/or column) where it applies.
class DataError : public std::runtime_error {
 public:
  enum class Kind { io, missing_column, non_numeric, too_few_rows, malformed };
  DataError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class Normalization { standardize, none };
enum class SplitKind { random, chronological_last };

struct SplitSpec {
  SplitKind kind = SplitKind::random;
  double fraction = 0.2;  ///< share of windows (random) or rows (chronological) held out
  std::uint64_t seed = 0;
};

enum class DataFormat { automatic, series, paths };

struct DatasetSpec {
  std::filesystem::path source;
  /// series: a CSV with one row per time step, windowed into paths.
  /// paths:  a CSV written by save_paths, already one path per path_id.
  /// automatic: paths when the header starts with path_id.
  DataFormat format = DataFormat::automatic;
  std::vector<std::string> columns;  ///< empty: every column (series only)
  std::size_t window = 64;
  std::size_t stride = 64;
  Normalization normalization = Normalization::standardize;
  SplitSpec split;

  void validate() const;
};

void to_json(nlohmann::json& j, const DatasetSpec& spec);
void from_json(const nlohmann::json& j, DatasetSpec& spec);

/// Per-dimension affine map x -> (x - mean) / scale.
struct NormalizationParams {
  std::vector<double> mean;
  std::vector<double> scale;

  void apply(PathsBatch& batch) const;
  void invert(PathsBatch& batch) const;
};

void to_json(nlohmann::json& j, const NormalizationParams& n);
void from_json(const nlohmann::json& j, NormalizationParams& n);

struct Dataset {
  PathsBatch train;
  PathsBatch test;
  NormalizationParams normalization;  ///< identity when normalization is none
  std::size_t rows = 0;               ///< source rows (series) or paths (paths format)
};

/// Window the source into paths on a [0, 1] grid, split, and standardize
/// with statistics of the training windows only.
Dataset load_dataset(const DatasetSpec& spec);

/// Windowing, splitting and normalization of an in-memory series
/// (rows x dims, row-major).
Dataset make_dataset(const std::vector<double>& series, std::size_t dims, const DatasetSpec& spec);

/// Split and normalize an existing batch of paths (paths format).
Dataset make_dataset(const PathsBatch& paths, const DatasetSpec& spec);

/// Headered CSV path_id,t,dim_0,...,dim_{d-1}; values written in shortest
/// round-trip form.
void save_paths(const PathsBatch& batch, const std::filesystem::path& out);
PathsBatch load_paths(const std::filesystem::path& in);

}  // namespace fdm
