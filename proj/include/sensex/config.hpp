#pragma once

// Run configuration: a YAML document (JSON is accepted too) with dotted
// command-line overrides. Every value read is echoed into a resolved JSON
// snapshot so a run can be replayed from its manifest. Requires yaml-cpp.

#include <cstdint>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include <json.hpp>

#include "sensex/errors.hpp"
#include "sensex/types.hpp"

namespace sensex {

namespace detail {

struct ConfigSource {
  std::string file;
  std::set<std::string> overridden;
  nlohmann::json resolved = nlohmann::json::object();
};

inline std::vector<std::string> split_dotted(const std::string& key) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : key) {
    if (c == '.') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  for (const auto& p : parts) {
    if (p.empty()) throw ConfigError("malformed override key '" + key + "'");
  }
  return parts;
}

}  // namespace detail

/// A view of one mapping in the configuration tree.
class ConfigNode {
 public:
  ConfigNode(YAML::Node node, std::string path, std::shared_ptr<detail::ConfigSource> src)
      : node_(std::move(node)), path_(std::move(path)), src_(std::move(src)) {}

  [[nodiscard]] bool has(const std::string& key) const {
    return node_.IsMap() && node_[key].IsDefined() && !node_[key].IsNull();
  }

  [[nodiscard]] ConfigNode child(const std::string& key) const {
    YAML::Node n = node_.IsMap() ? node_[key] : YAML::Node();
    if (n.IsDefined() && !n.IsNull() && !n.IsMap()) fail(key, "expected a section");
    return {n.IsDefined() ? n : YAML::Node(YAML::NodeType::Map), full(key), src_};
  }

  [[nodiscard]] std::string full(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  /// "file:line" of `key` (or of this section when `key` is absent), or the
  /// override that set it.
  [[nodiscard]] std::string where(const std::string& key) const {
    const std::string k = full(key);
    for (const auto& o : src_->overridden) {
      if (o == k || k.rfind(o + ".", 0) == 0) return "--set " + o;
    }
    YAML::Mark mark = node_.Mark();
    if (has(key)) mark = node_[key].Mark();
    const int line = mark.line >= 0 ? mark.line + 1 : 1;
    return src_->file + ":" + std::to_string(line);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(where(key) + ": " + full(key) + ": " + msg);
  }

  [[nodiscard]] double number(const std::string& key, std::optional<double> fallback = {}) const {
    if (!has(key)) return record(key, missing(key, fallback));
    try {
      return record(key, node_[key].as<double>());
    } catch (const YAML::Exception&) {
      fail(key, "expected a number");
    }
  }

  [[nodiscard]] std::size_t count(const std::string& key,
                                  std::optional<std::size_t> fallback = {}) const {
    if (!has(key)) return record(key, missing(key, fallback));
    long long v = 0;
    try {
      v = node_[key].as<long long>();
    } catch (const YAML::Exception&) {
      fail(key, "expected a non-negative integer");
    }
    if (v < 0) fail(key, "expected a non-negative integer");
    return record(key, static_cast<std::size_t>(v));
  }

  [[nodiscard]] std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return record(key, fallback);
    try {
      return record(key, node_[key].as<std::uint64_t>());
    } catch (const YAML::Exception&) {
      fail(key, "expected a non-negative integer seed");
    }
  }

  [[nodiscard]] std::string text(const std::string& key,
                                 std::optional<std::string> fallback = {}) const {
    if (!has(key)) return record(key, missing(key, fallback));
    if (!node_[key].IsScalar()) fail(key, "expected a string");
    return record(key, node_[key].as<std::string>());
  }

  [[nodiscard]] bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return record(key, fallback);
    try {
      return record(key, node_[key].as<bool>());
    } catch (const YAML::Exception&) {
      fail(key, "expected true or false");
    }
  }

  [[nodiscard]] Vector vector(const std::string& key,
                              std::optional<Vector> fallback = {}) const {
    if (!has(key)) {
      Vector v = missing(key, fallback);
      record_json(key, vector_json(v));
      return v;
    }
    Vector v = parse_vector(node_[key], key);
    record_json(key, vector_json(v));
    return v;
  }

  [[nodiscard]] std::vector<Vector> vectors(const std::string& key) const {
    if (!has(key)) fail(key, "missing required list of states");
    const YAML::Node n = node_[key];
    if (!n.IsSequence()) fail(key, "expected a list of states");
    std::vector<Vector> out;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& item : n) {
      out.push_back(parse_vector(item, key));
      j.push_back(vector_json(out.back()));
    }
    record_json(key, j);
    return out;
  }

  /// Box written as a list of [lower, upper] pairs, one per axis.
  [[nodiscard]] Box box(const std::string& key, std::optional<Box> fallback = {}) const {
    if (!has(key)) {
      Box b = missing(key, fallback);
      record_json(key, box_json(b));
      return b;
    }
    const YAML::Node n = node_[key];
    if (!n.IsSequence() || n.size() == 0) fail(key, "expected a list of [lower, upper] pairs");
    Vector lo(static_cast<Index>(n.size())), hi(static_cast<Index>(n.size()));
    for (std::size_t i = 0; i < n.size(); ++i) {
      const Vector pair = parse_vector(n[i], key);
      if (pair.size() != 2) fail(key, "each axis needs exactly [lower, upper]");
      lo[static_cast<Index>(i)] = pair[0];
      hi[static_cast<Index>(i)] = pair[1];
    }
    try {
      Box b(lo, hi);
      record_json(key, box_json(b));
      return b;
    } catch (const ConfigError& e) {
      fail(key, e.what());
    }
  }

  /// [first, last] step pair.
  [[nodiscard]] std::pair<std::size_t, std::size_t> step_pair(const std::string& key) const {
    const Vector v = vector(key);
    if (v.size() != 2 || v[0] < 0 || v[1] < v[0] || v[0] != std::floor(v[0]) ||
        v[1] != std::floor(v[1])) {
      fail(key, "expected [first, last] step indices with first <= last");
    }
    return {static_cast<std::size_t>(v[0]), static_cast<std::size_t>(v[1])};
  }

 private:
  template <typename T>
  T missing(const std::string& key, const std::optional<T>& fallback) const {
    if (!fallback) fail(key, "missing required value");
    return *fallback;
  }

  Vector parse_vector(const YAML::Node& n, const std::string& key) const {
    if (!n.IsSequence()) fail(key, "expected a list of numbers");
    Vector v(static_cast<Index>(n.size()));
    try {
      for (std::size_t i = 0; i < n.size(); ++i) v[static_cast<Index>(i)] = n[i].as<double>();
    } catch (const YAML::Exception&) {
      fail(key, "expected a list of numbers");
    }
    return v;
  }

  static nlohmann::json vector_json(const Vector& v) {
    nlohmann::json j = nlohmann::json::array();
    for (Index i = 0; i < v.size(); ++i) j.push_back(v[i]);
    return j;
  }

  static nlohmann::json box_json(const Box& b) {
    nlohmann::json j = nlohmann::json::array();
    for (Index i = 0; i < b.dim(); ++i) j.push_back({b.lower()[i], b.upper()[i]});
    return j;
  }

  template <typename T>
  T record(const std::string& key, T value) const {
    record_json(key, nlohmann::json(value));
    return value;
  }

  void record_json(const std::string& key, nlohmann::json value) const {
    nlohmann::json* at = &src_->resolved;
    if (!path_.empty()) {
      for (const auto& part : detail::split_dotted(path_)) at = &(*at)[part];
    }
    (*at)[key] = std::move(value);
  }

  YAML::Node node_;
  std::string path_;
  std::shared_ptr<detail::ConfigSource> src_;
};

/// Parsed configuration document plus the resolved snapshot of what was read.
class RunConfig {
 public:
  RunConfig() : RunConfig(YAML::Node(YAML::NodeType::Map), "<defaults>") {}

  /// Parses `text`; `name` labels error messages. A manifest written by a
  /// previous run is accepted and its `config` section is used.
  static RunConfig parse(const std::string& text, const std::string& name) {
    YAML::Node root;
    try {
      root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
      throw ConfigError(name + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (root.IsNull() || !root.IsDefined()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) throw ConfigError(name + ":1: configuration must be a mapping");
    if (root["manifest"].IsDefined() && root["config"].IsMap()) root.reset(root["config"]);
    return RunConfig(root, name);
  }

  static RunConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read configuration file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
  }

  /// Applies `key.path=value`; the value is parsed as YAML ("[1, 2]", "0.5", "relu").
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + assignment + "'");
    }
    const std::string key = assignment.substr(0, eq);
    YAML::Node value;
    try {
      value = YAML::Load(assignment.substr(eq + 1));
    } catch (const YAML::ParserException& e) {
      throw ConfigError("--set " + key + ": " + e.msg);
    }
    const auto parts = detail::split_dotted(key);
    YAML::Node cur = root_;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      YAML::Node next = cur[parts[i]];
      if (!next.IsDefined() || !next.IsMap()) {
        cur[parts[i]] = YAML::Node(YAML::NodeType::Map);
        next = cur[parts[i]];
      }
      cur.reset(next);
    }
    cur[parts.back()] = value;
    src_->overridden.insert(key);
  }

  [[nodiscard]] ConfigNode root() const { return {root_, "", src_}; }
  [[nodiscard]] const nlohmann::json& resolved() const { return src_->resolved; }
  [[nodiscard]] const std::string& source_name() const { return src_->file; }

 private:
  RunConfig(YAML::Node root, std::string name)
      : root_(std::move(root)), src_(std::make_shared<detail::ConfigSource>()) {
    src_->file = std::move(name);
  }

  YAML::Node root_;
  std::shared_ptr<detail::ConfigSource> src_;
};

}  // namespace sensex
