#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ivope/error.hpp"

namespace ivope::harness {

using Json = nlohmann::ordered_json;

/// Strict reader over one JSON object: every key must be consumed before
/// finish(), so misspelled or unsupported keys surface as ConfigError.
class JsonFields {
 public:
  JsonFields(const Json& object, std::string context);

  bool has(const std::string& key) const;

  template <class T>
  T get(const std::string& key, const T& fallback) {
    if (!has(key) || object_.at(key).is_null()) {
      seen_.insert(key);
      echo_[key] = fallback;
      return fallback;
    }
    return require<T>(key);
  }

  template <class T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) throw ConfigError(path(key) + ": required key is missing");
    try {
      T value = object_.at(key).template get<T>();
      echo_[key] = value;
      return value;
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path(key) + ": expected " + type_hint<T>() + ", got " + object_.at(key).dump());
    }
  }

  std::size_t count(const std::string& key, std::size_t fallback);
  std::vector<std::size_t> counts(const std::string& key, const std::vector<std::size_t>& fallback);

  /// The raw value (marks the key consumed); null when absent.
  const Json& raw(const std::string& key);

  std::string path(const std::string& key) const { return context_.empty() ? key : context_ + "." + key; }
  const std::string& context() const noexcept { return context_; }

  /// Throws ConfigError naming every key that was never read.
  void finish() const;

  /// Every value read so far, defaults included, in read order.
  const Json& echo() const noexcept { return echo_; }
  void record(const std::string& key, Json value) { echo_[key] = std::move(value); }

 private:
  template <class T>
  static std::string type_hint() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_arithmetic_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else return "a list";
  }

  Json object_;
  std::string context_;
  std::set<std::string> seen_;
  Json echo_ = Json::object();
};

/// Non-negative integer stored as a JSON number (accepts 1e5).
std::size_t as_count(const Json& value, const std::string& where);

}  // namespace ivope::harness
