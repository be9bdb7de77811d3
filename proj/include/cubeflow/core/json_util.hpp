#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "cubeflow/core/error.hpp"

namespace cubeflow::jsonutil {

/// Throws ConfigError naming the first key of `j` not in `allowed`.
inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::ConfigError, where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw Error(ErrorKind::ConfigError, "unknown key \"" + k + "\" in " + where);
}

/// Reads j[key] into out when present; type mismatches become ConfigError.
template <class T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::ConfigError, std::string("bad type for \"") + key + "\" in " + where);
  }
}

}  // namespace cubeflow::jsonutil
