#include "ltlab/config.hpp"

#include <fstream>
#include <sstream>

#include "ltlab/errors.hpp"

namespace ltlab {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

std::vector<ConfigEntry> parse_config_text(const std::string& text,
                                           const std::string& origin) {
  std::vector<ConfigEntry> entries;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw InvalidArgumentError(origin + ": line " +
                                   std::to_string(lineno) +
                                   ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw InvalidArgumentError(origin + ": line " +
                                   std::to_string(lineno) + ": empty section");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw InvalidArgumentError(origin + ": line " + std::to_string(lineno) +
                                 ": expected key=value");
    ConfigEntry entry;
    entry.section = section;
    entry.key = trim(t.substr(0, eq));
    entry.value = trim(t.substr(eq + 1));
    if (entry.key.empty())
      throw InvalidArgumentError(origin + ": line " + std::to_string(lineno) +
                                 ": empty key");
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::vector<ConfigEntry> parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InvalidArgumentError("cannot open config file " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str(), path);
}

}  // namespace ltlab
