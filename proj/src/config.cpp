#include "fetalus/config.hpp"

#include <fstream>
#include <sstream>

namespace fetalus {

using nlohmann::json;

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path.string() + " does not parse: " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be a JSON object");
  return Config(std::move(root));
}

namespace {

std::vector<std::string> split_path(const std::string& dotted) {
  std::vector<std::string> parts;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("empty segment in config path '" + dotted + "'");
    parts.push_back(part);
  }
  if (parts.empty()) throw ConfigError("empty config path");
  return parts;
}

}  // namespace

void Config::apply_override(const std::string& dotted_assignment) {
  auto eq = dotted_assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like key.path=value: " + dotted_assignment);
  std::string path = dotted_assignment.substr(0, eq);
  std::string raw = dotted_assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // plain string
  }

  json* node = &root_;
  auto parts = split_path(path);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i]) || !(*node)[parts[i]].is_object())
      (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

bool Config::has(const std::string& dotted_path) const { return find(dotted_path) != nullptr; }

const nlohmann::json* Config::find(const std::string& dotted_path) const {
  const json* node = &root_;
  for (const auto& part : split_path(dotted_path)) {
    if (!node->is_object() || !node->contains(part)) return nullptr;
    node = &(*node)[part];
  }
  return node;
}

}  // namespace fetalus
