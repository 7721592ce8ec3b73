#include "ivope/harness/json_fields.hpp"

#include <cmath>

namespace ivope::harness {

namespace {
const Json kNull = nullptr;
}

JsonFields::JsonFields(const Json& object, std::string context) : object_(object), context_(std::move(context)) {
  if (!object_.is_object())
    throw ConfigError((context_.empty() ? std::string("config") : context_) + ": expected an object");
}

bool JsonFields::has(const std::string& key) const { return object_.contains(key); }

const Json& JsonFields::raw(const std::string& key) {
  seen_.insert(key);
  return has(key) ? object_.at(key) : kNull;
}

std::size_t JsonFields::count(const std::string& key, std::size_t fallback) {
  const Json& v = raw(key);
  const std::size_t out = v.is_null() ? fallback : as_count(v, path(key));
  echo_[key] = out;
  return out;
}

std::vector<std::size_t> JsonFields::counts(const std::string& key, const std::vector<std::size_t>& fallback) {
  const Json& v = raw(key);
  if (v.is_null()) {
    echo_[key] = fallback;
    return fallback;
  }
  if (!v.is_array()) throw ConfigError(path(key) + ": expected a list of integers");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_count(v[i], path(key) + "[" + std::to_string(i) + "]"));
  echo_[key] = out;
  return out;
}

void JsonFields::finish() const {
  std::vector<std::string> unknown;
  for (const auto& [key, value] : object_.items())
    if (!seen_.count(key)) unknown.push_back(key);
  if (unknown.empty()) return;
  std::string list;
  for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + path(k);
  throw ConfigError("unknown key(s): " + list);
}

std::size_t as_count(const Json& value, const std::string& where) {
  if (!value.is_number()) throw ConfigError(where + ": expected a non-negative integer");
  const double v = value.get<double>();
  if (v < 0.0 || v != std::floor(v) || v > 9.0e15) throw ConfigError(where + ": expected a non-negative integer");
  return static_cast<std::size_t>(v);
}

}  // namespace ivope::harness
