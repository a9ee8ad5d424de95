#pragma once

// Thin schema-checking layer over yaml-cpp. All model files (machines,
// kernels, composites) are YAML documents; loaders use these helpers so
// every schema violation reports the full key path.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

namespace ecm {

// Raised for malformed or schema-violating model files.
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised for semantically invalid models and bad operation inputs.
class ModelError : public std::runtime_error {
public:
  explicit ModelError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace cfg {

inline std::string joined(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline YAML::Node require(const YAML::Node& n, const std::string& path,
                          const std::string& key) {
  if (!n || !n.IsMap())
    throw ConfigError(path.empty() ? "expected a mapping at document root"
                                   : "expected a mapping at '" + path + "'");
  YAML::Node child = n[key];
  if (!child)
    throw ConfigError("missing required key '" + joined(path, key) + "'");
  return child;
}

inline std::optional<YAML::Node> optional_node(const YAML::Node& n,
                                               const std::string& key) {
  if (!n || !n.IsMap()) return std::nullopt;
  YAML::Node child = n[key];
  if (!child) return std::nullopt;
  return child;
}

template <typename T>
T as(const YAML::Node& n, const std::string& path) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + path + "'");
  }
}

template <typename T>
T get(const YAML::Node& n, const std::string& path, const std::string& key) {
  return as<T>(require(n, path, key), joined(path, key));
}

template <typename T>
T get_or(const YAML::Node& n, const std::string& path, const std::string& key,
         T fallback) {
  auto child = optional_node(n, key);
  if (!child) return fallback;
  return as<T>(*child, joined(path, key));
}

template <typename T>
std::optional<T> get_opt(const YAML::Node& n, const std::string& path,
                         const std::string& key) {
  auto child = optional_node(n, key);
  if (!child) return std::nullopt;
  return as<T>(*child, joined(path, key));
}

// Rejects keys outside the allowed set so typos fail loudly.
inline void check_keys(const YAML::Node& n, const std::string& path,
                       const std::vector<std::string>& allowed) {
  if (!n || !n.IsMap()) return;
  for (const auto& kv : n) {
    const std::string key = kv.first.as<std::string>();
    bool ok = false;
    for (const auto& a : allowed)
      if (a == key) { ok = true; break; }
    if (!ok)
      throw ConfigError("unknown key '" + joined(path, key) + "'");
  }
}

inline YAML::Node parse_document(const std::string& text,
                                 const std::string& what) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

}  // namespace cfg
}  // namespace ecm
