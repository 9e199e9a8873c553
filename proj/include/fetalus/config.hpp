#pragma once
// Hierarchical JSON experiment config with dotted-path command-line
// overrides ("train.base_lr=3e-4").

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fetalus/common.hpp"

namespace fetalus {

class Config {
 public:
  Config() : root_(nlohmann::json::object()) {}
  explicit Config(nlohmann::json root) : root_(std::move(root)) {}
  static Config load(const std::filesystem::path& path);

  // "a.b.c=value"; the value parses as JSON when possible, else as a string.
  void apply_override(const std::string& dotted_assignment);

  bool has(const std::string& dotted_path) const;

  template <typename T>
  T get(const std::string& dotted_path, const T& fallback) const {
    const nlohmann::json* node = find(dotted_path);
    if (!node) return fallback;
    try {
      return node->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config field '" + dotted_path + "' has the wrong type");
    }
  }

  template <typename T>
  T require(const std::string& dotted_path) const {
    const nlohmann::json* node = find(dotted_path);
    if (!node) throw ConfigError("missing required config field '" + dotted_path + "'");
    try {
      return node->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config field '" + dotted_path + "' has the wrong type");
    }
  }

  const nlohmann::json& raw() const { return root_; }

 private:
  nlohmann::json root_;
  const nlohmann::json* find(const std::string& dotted_path) const;
};

}  // namespace fetalus
