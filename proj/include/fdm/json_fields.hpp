// SPDX-FileCopyrightText: Copyright (c) 2026 The fdm-sde Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Strict JSON field access shared by config and checkpoint readers.

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fdm {

/// Configuration or file-content error; the message names the field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_object(const nlohmann::json& j, std::string_view section) {
  if (!j.is_object()) {
    throw ConfigError(fmt::format("{}: expected a JSON object", section));
  }
}

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                                std::string_view section) {
  require_object(j, section);
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError(fmt::format("{}.{}: unknown key", section, item.key()));
    }
  }
}

/// Assign j[key] to `out` when present; type errors name section.key.
template <class T>
void read_field(const nlohmann::json& j, std::string_view key, std::string_view section, T& out) {
  auto it = j.find(std::string(key));
  if (it == j.end()) {
    return;
  }
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}.{}: {}", section, key, e.what()));
  }
}

}  // namespace fdm
