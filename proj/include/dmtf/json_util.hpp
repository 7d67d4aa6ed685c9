#pragma once

#include <set>
#include <string>

#include "dmtf/errors.hpp"
#include "json.hpp"

namespace dmtf {

// Strict JSON access: unknown keys are rejected and every error names the
// offending field. E selects the error family (ConfigError for configs,
// DataError for artifacts).
template <typename E>
void require_object(const nlohmann::json& j, const std::string& ctx) {
  if (!j.is_object()) throw E(ctx + ": expected a JSON object");
}

template <typename E>
void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                         const std::string& ctx) {
  require_object<E>(j, ctx);
  for (const auto& item : j.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      throw E(ctx + ": unknown key '" + item.key() + "'");
    }
  }
}

template <typename E, typename T>
T get_req(const nlohmann::json& j, const char* key, const std::string& ctx) {
  require_object<E>(j, ctx);
  if (!j.contains(key)) throw E(ctx + ": missing required key '" + std::string(key) + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw E(ctx + ": key '" + std::string(key) + "' has the wrong type");
  }
}

template <typename E, typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw E(ctx + ": key '" + std::string(key) + "' has the wrong type");
  }
}

}  // namespace dmtf
