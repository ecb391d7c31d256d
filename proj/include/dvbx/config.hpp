// dvbx/config.hpp

// Copyright 2026 The DVBx Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat key=value configuration text and typed value conversion.

#ifndef DVBX_CONFIG_HPP_
#define DVBX_CONFIG_HPP_

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "dvbx/common.hpp"

namespace dvbx {

namespace config_detail {

inline std::string Trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace config_detail

/// One "key = value" per line; '#' starts a comment; blank lines ignored.
/// Keys are [a-z0-9_]+ and may appear once.
inline std::map<std::string, std::string> ParseKeyValueConfig(const std::string &text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = config_detail::Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "config line " + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = config_detail::Trim(line.substr(0, eq));
    const std::string value = config_detail::Trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    for (char c : key)
      if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'))
        throw ConfigError(where + ": invalid key '" + key + "'");
    if (!out.emplace(key, value).second) throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return out;
}

inline double ConfigDouble(const std::string &key, const std::string &v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline long long ConfigInt(const std::string &key, const std::string &v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t ConfigU64(const std::string &key, const std::string &v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool ConfigBool(const std::string &key, const std::string &v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

}  // namespace dvbx

#endif  // DVBX_CONFIG_HPP_
