#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>

namespace fairij {

/// Formats a double with 17 significant digits, enough for an exact f64
/// round-trip. Locale-independent (std::to_chars).
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value,
                                 std::chars_format::general, 17);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string format_int(std::int64_t value) {
  return std::to_string(value);
}

}  // namespace fairij
