#pragma once

#include <string>
#include <vector>

namespace ltlab {

// One entry of the key=value run-config format: sections in brackets,
// comments with '#', values taken verbatim after the first '='.
struct ConfigEntry {
  std::string section;
  std::string key;
  std::string value;
};

std::vector<ConfigEntry> parse_config_file(const std::string& path);
std::vector<ConfigEntry> parse_config_text(const std::string& text,
                                           const std::string& origin);

}  // namespace ltlab
