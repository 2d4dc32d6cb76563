#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace ltlab {

// Shortest-round-trip formatting: %.17g reproduces the exact double on load,
// which the dataset and checkpoint formats rely on.
inline std::string format_exact(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Plot-facing numbers; stable but easier on the eyes.
inline std::string format_short(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

std::vector<std::string> split_ws(const std::string& line);
std::vector<std::string> split_char(const std::string& s, char sep);

}  // namespace ltlab
