#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "fairij/numfmt.hpp"

namespace fairij {

/// Minimal JSON value for report emission. Objects keep keys sorted and
/// doubles are printed with 17 significant digits, so identical runs produce
/// byte-identical files. Parsing is handled elsewhere (nlohmann/json).
class JsonValue {
 public:
  using Array = std::vector<JsonValue>;
  using Object = std::map<std::string, JsonValue>;

  JsonValue() : value_(nullptr) {}
  JsonValue(std::nullptr_t) : value_(nullptr) {}
  JsonValue(bool v) : value_(v) {}
  JsonValue(int v) : value_(static_cast<std::int64_t>(v)) {}
  JsonValue(std::int64_t v) : value_(v) {}
  JsonValue(std::uint64_t v) : value_(static_cast<std::int64_t>(v)) {}
  JsonValue(double v) : value_(v) {}
  JsonValue(const char* v) : value_(std::string(v)) {}
  JsonValue(std::string v) : value_(std::move(v)) {}
  JsonValue(Array v) : value_(std::move(v)) {}
  JsonValue(Object v) : value_(std::move(v)) {}

  static JsonValue array() { return JsonValue(Array{}); }
  static JsonValue object() { return JsonValue(Object{}); }

  JsonValue& operator[](const std::string& key) {
    return std::get<Object>(value_)[key];
  }
  void push_back(JsonValue v) {
    std::get<Array>(value_).push_back(std::move(v));
  }

  template <typename Range>
  static JsonValue number_array(const Range& values) {
    Array out;
    for (const auto& v : values) out.emplace_back(static_cast<double>(v));
    return JsonValue(std::move(out));
  }

  static JsonValue string_array(const std::vector<std::string>& values) {
    Array out;
    for (const auto& v : values) out.emplace_back(v);
    return JsonValue(std::move(out));
  }

  static JsonValue int_array(const std::vector<int>& values) {
    Array out;
    for (int v : values) out.emplace_back(v);
    return JsonValue(std::move(out));
  }

  std::string dump(int indent = -1) const {
    std::string out;
    write(out, indent, 0);
    return out;
  }

 private:
  std::variant<std::nullptr_t, bool, std::int64_t, double, std::string, Array,
               Object>
      value_;

  static void escape(std::string& out, const std::string& s) {
    out += '"';
    for (char c : s) {
      switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
          if (static_cast<unsigned char>(c) < 0x20) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "\\u%04x", c);
            out += buf;
          } else {
            out += c;
          }
      }
    }
    out += '"';
  }

  void write(std::string& out, int indent, int depth) const {
    const auto pad = [&](int d) {
      if (indent >= 0) {
        out += '\n';
        out.append(static_cast<std::size_t>(indent * d), ' ');
      }
    };
    if (std::holds_alternative<std::nullptr_t>(value_)) {
      out += "null";
    } else if (const bool* b = std::get_if<bool>(&value_)) {
      out += *b ? "true" : "false";
    } else if (const std::int64_t* i = std::get_if<std::int64_t>(&value_)) {
      out += format_int(*i);
    } else if (const double* d = std::get_if<double>(&value_)) {
      out += format_double(*d);
    } else if (const std::string* s = std::get_if<std::string>(&value_)) {
      escape(out, *s);
    } else if (const Array* a = std::get_if<Array>(&value_)) {
      out += '[';
      for (std::size_t k = 0; k < a->size(); ++k) {
        if (k) out += ',';
        pad(depth + 1);
        (*a)[k].write(out, indent, depth + 1);
      }
      if (!a->empty()) pad(depth);
      out += ']';
    } else if (const Object* o = std::get_if<Object>(&value_)) {
      out += '{';
      std::size_t k = 0;
      for (const auto& [key, val] : *o) {
        if (k++) out += ',';
        pad(depth + 1);
        escape(out, key);
        out += indent >= 0 ? ": " : ":";
        val.write(out, indent, depth + 1);
      }
      if (!o->empty()) pad(depth);
      out += '}';
    }
  }
};

}  // namespace fairij
