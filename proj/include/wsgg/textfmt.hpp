#pragma once

#include <charconv>
#include <string>

namespace wsgg {

// Shortest decimal form that round-trips; matches what the JSON writer
// emits so CSV and JSON artifacts stay byte-stable across runs.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace wsgg
