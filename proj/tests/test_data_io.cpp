// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include "fdm/data_io.hpp"
#include "fdm/json_fields.hpp"
#include "fdm/processes.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

using namespace fdm;

namespace {

std::filesystem::path temp(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("fdm_data_" + name);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

// Series whose row r has value r in the first column and -2 r in the second,
// so window contents reveal their source rows.
std::vector<double> row_series(std::size_t rows) {
  std::vector<double> v;
  for (std::size_t r = 0; r < rows; ++r) {
    v.push_back(static_cast<double>(r));
    v.push_back(-2.0 * static_cast<double>(r));
  }
  return v;
}

DatasetSpec raw_spec(std::size_t window, std::size_t stride) {
  DatasetSpec s;
  s.window = window;
  s.stride = stride;
  s.normalization = Normalization::none;
  return s;
}

template <class Fn>
DataError::Kind error_kind(Fn&& fn, std::string* message = nullptr) {
  try {
    fn();
  } catch (const DataError& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  FAIL("expected a DataError");
  return DataError::Kind::io;
}

}  // namespace

TEST_CASE("window counting with a random split") {
  DatasetSpec s = raw_spec(64, 64);
  s.split.fraction = 0.5;
  const Dataset ds = make_dataset(row_series(128), 2, s);
  CHECK(ds.train.count() == 1);
  CHECK(ds.test.count() == 1);
  CHECK(ds.train.grid_size() == 64);
  CHECK(ds.train.grid().front() == 0.0);
  CHECK(ds.train.grid().back() == 1.0);
}

TEST_CASE("windows preserve row order") {
  const Dataset ds = make_dataset(row_series(200), 2, raw_spec(10, 7));
  for (const PathsBatch* b : {&ds.train, &ds.test}) {
    for (std::size_t p = 0; p < b->count(); ++p) {
      const double start = (*b)(p, 0, 0);
      CHECK(std::fmod(start, 7.0) == 0.0);
      for (std::size_t t = 0; t < 10; ++t) {
        CHECK((*b)(p, t, 0) == start + static_cast<double>(t));
        CHECK((*b)(p, t, 1) == -2.0 * (start + static_cast<double>(t)));
      }
    }
  }
}

TEST_CASE("chronological split boundary and disjointness") {
  DatasetSpec s = raw_spec(64, 1);
  s.split.kind = SplitKind::chronological_last;
  s.split.fraction = 0.2;
  const Dataset ds = make_dataset(row_series(1000), 2, s);
  REQUIRE(ds.test.count() > 0);
  for (std::size_t p = 0; p < ds.test.count(); ++p) CHECK(ds.test(p, 0, 0) >= 800.0);
  double last_train_row = -1.0;
  for (std::size_t p = 0; p < ds.train.count(); ++p) {
    last_train_row = std::max(last_train_row, ds.train(p, 63, 0));
  }
  CHECK(last_train_row < 800.0);
}

TEST_CASE("standardization uses training windows only") {
  DatasetSpec s = raw_spec(16, 16);
  s.normalization = Normalization::standardize;
  const Dataset ds = make_dataset(row_series(320), 2, s);
  for (std::size_t d = 0; d < 2; ++d) {
    double sum = 0.0, sum2 = 0.0;
    const auto n = static_cast<double>(ds.train.count() * ds.train.grid_size());
    for (std::size_t p = 0; p < ds.train.count(); ++p)
      for (std::size_t t = 0; t < ds.train.grid_size(); ++t) {
        sum += ds.train(p, t, d);
        sum2 += ds.train(p, t, d) * ds.train(p, t, d);
      }
    CHECK(std::abs(sum / n) < 1e-12);
    CHECK(sum2 / n == doctest::Approx(1.0).epsilon(1e-12));
  }

  PathsBatch back = ds.test;
  ds.normalization.invert(back);
  const Dataset raw = make_dataset(row_series(320), 2, raw_spec(16, 16));
  for (std::size_t k = 0; k < back.values().size(); ++k) {
    CHECK(back.values()[k] == doctest::Approx(raw.test.values()[k]).epsilon(1e-12));
  }
}

TEST_CASE("paths-format split") {
  const PathsBatch paths = simulate_exact(ReferenceProcess::ou(1, 0, 0.5), uniform_grid(1.0, 7),
                                          100, CounterNormals(1));
  DatasetSpec s;
  s.split.fraction = 0.2;
  const Dataset ds = make_dataset(paths, s);
  CHECK(ds.train.count() == 80);
  CHECK(ds.test.count() == 20);
}

TEST_CASE("CSV loading and diagnostics") {
  const auto path = temp("series.csv");
  DatasetSpec s = raw_spec(4, 2);
  s.source = path;
  s.split.fraction = 0.3;

  SUBCASE("selected columns") {
    std::string text = "date,gold,silver\n";
    for (int r = 0; r < 20; ++r) {
      text += "d" + std::to_string(r) + "," + std::to_string(r) + "," + std::to_string(10 * r) + "\n";
    }
    write_file(path, text);
    s.columns = {"silver"};
    const Dataset ds = load_dataset(s);
    CHECK(ds.train.dim() == 1);
    CHECK(ds.rows == 20);
    CHECK(std::fmod(ds.train(0, 1, 0), 10.0) == 0.0);
  }
  SUBCASE("missing column") {
    write_file(path, "a,b\n1,2\n3,4\n5,6\n7,8\n9,10\n");
    s.columns = {"c"};
    std::string msg;
    CHECK(error_kind([&] { load_dataset(s); }, &msg) == DataError::Kind::missing_column);
    CHECK(msg.find("'c'") != std::string::npos);
  }
  SUBCASE("non-numeric cell names row and column") {
    write_file(path, "a,b\n1,2\n3,x\n5,6\n7,8\n9,10\n");
    std::string msg;
    CHECK(error_kind([&] { load_dataset(s); }, &msg) == DataError::Kind::non_numeric);
    CHECK(msg.find(":3:") != std::string::npos);
    CHECK(msg.find("'b'") != std::string::npos);
  }
  SUBCASE("too few rows") {
    write_file(path, "a\n1\n2\n3\n");
    CHECK(error_kind([&] { load_dataset(s); }) == DataError::Kind::too_few_rows);
  }
  SUBCASE("missing file") {
    s.source = temp("does_not_exist.csv");
    CHECK(error_kind([&] { load_dataset(s); }) == DataError::Kind::io);
  }
  std::filesystem::remove(path);
}

TEST_CASE("paths CSV round trip") {
  const auto path = temp("paths.csv");
  SUBCASE("bitwise-equal values") {
    const PathsBatch b = simulate_exact(ReferenceProcess::gbm(0.05, 0.3, 1.0, 2),
                                        uniform_grid(1.0, 9), 17, CounterNormals(3));
    save_paths(b, path);
    const PathsBatch back = load_paths(path);
    CHECK(back.count() == 17);
    CHECK(back.dim() == 2);
    REQUIRE(back.values().size() == b.values().size());
    CHECK(std::memcmp(back.values().data(), b.values().data(),
                      b.values().size() * sizeof(double)) == 0);
    CHECK(std::equal(b.grid().begin(), b.grid().end(), back.grid().begin()));
  }
  SUBCASE("empty batch") {
    save_paths(PathsBatch(uniform_grid(1.0, 3), 0, 3), path);
    std::ifstream in(path);
    std::string header, extra;
    std::getline(in, header);
    CHECK(header == "path_id,t,dim_0,dim_1,dim_2");
    CHECK_FALSE(static_cast<bool>(std::getline(in, extra)));
    CHECK(load_paths(path).count() == 0);
  }
  SUBCASE("ragged row names the line") {
    write_file(path, "path_id,t,dim_0\n0,0,1.5\n0,1,2.5,9\n");
    std::string msg;
    CHECK(error_kind([&] { load_paths(path); }, &msg) == DataError::Kind::malformed);
    CHECK(msg.find(":3:") != std::string::npos);
  }
  std::filesystem::remove(path);
}

TEST_CASE("dataset spec JSON") {
  nlohmann::json j = {{"source", "x.csv"},
                      {"window", 32},
                      {"stride", 8},
                      {"normalization", "none"},
                      {"split", {{"kind", "chronological_last"}, {"fraction", 0.25}}}};
  const DatasetSpec s = j.get<DatasetSpec>();
  CHECK(s.window == 32);
  CHECK(s.split.kind == SplitKind::chronological_last);
  j["windw"] = 3;
  CHECK_THROWS_AS(j.get<DatasetSpec>(), ConfigError);

  DatasetSpec bad;
  bad.split.fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = DatasetSpec{};
  bad.stride = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
