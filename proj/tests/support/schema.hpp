#pragma once

// Minimal validator for the JSON Schema subset used by data/api.json:
// type (string or list), enum, required, properties, additionalProperties
// false, items, maxItems, minimum, maximum and local $ref.

#include <json.hpp>

#include <string>
#include <vector>

namespace schema {

using nlohmann::json;

class Validator {
 public:
  explicit Validator(json document) : doc_(std::move(document)) {}

  const json& component(const std::string& name) const { return doc_.at("components").at("schemas").at(name); }

  /// Schema of the response body for `method path status`, where `path` is
  /// the templated key from the description file.
  const json& response(const std::string& path, const std::string& method, int status) const {
    return doc_.at("paths").at(path).at(method).at("responses").at(std::to_string(status)).at("content").at(
        "application/json").at("schema");
  }

  /// Problems found, empty when `value` conforms.
  std::vector<std::string> check(const json& value, const json& s) const {
    std::vector<std::string> errors;
    visit(value, s, "$", errors);
    return errors;
  }

 private:
  const json& resolve(const json& s) const {
    if (!s.contains("$ref")) return s;
    const std::string ref = s.at("$ref");
    const std::string prefix = "#/components/schemas/";
    return resolve(component(ref.substr(prefix.size())));
  }

  static bool has_type(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    return false;
  }

  void visit(const json& v, const json& raw, const std::string& at, std::vector<std::string>& errors) const {
    const json& s = resolve(raw);
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || has_type(v, t);
      } else {
        ok = has_type(v, s["type"]);
      }
      if (!ok) {
        errors.push_back(at + ": expected " + s["type"].dump() + ", got " + v.dump());
        return;
      }
    }
    if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end())
      errors.push_back(at + ": " + v.dump() + " not in enum");
    if (v.is_number()) {
      if (s.contains("minimum") && v.get<double>() < s["minimum"].get<double>()) errors.push_back(at + ": below minimum");
      if (s.contains("maximum") && v.get<double>() > s["maximum"].get<double>()) errors.push_back(at + ": above maximum");
    }
    if (v.is_object()) {
      for (const auto& r : s.value("required", json::array()))
        if (!v.contains(r.get<std::string>())) errors.push_back(at + ": missing " + r.get<std::string>());
      const json props = s.value("properties", json::object());
      for (const auto& [k, child] : v.items()) {
        if (props.contains(k))
          visit(child, props[k], at + "." + k, errors);
        else if (s.contains("additionalProperties") && s["additionalProperties"] == false)
          errors.push_back(at + ": unexpected property " + k);
      }
    }
    if (v.is_array()) {
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) errors.push_back(at + ": too many items");
      if (s.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) visit(v[i], s["items"], at + "[" + std::to_string(i) + "]", errors);
    }
  }

  json doc_;
};

}  // namespace schema
