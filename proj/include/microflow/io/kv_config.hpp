#pragma once

#include <map>
#include <string>

#include "microflow/io/csv.hpp"

namespace microflow::io {

// Flat "key = value" text file. '#' starts a comment line; blank lines are
// ignored. Later keys override earlier ones.
inline std::map<std::string, std::string> parse_kv_text(const std::string& text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const std::size_t eq = s.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line_no, "expected 'key = value'");
    std::string key(trim(s.substr(0, eq)));
    std::string value(trim(s.substr(eq + 1)));
    if (key.empty()) throw ParseError(source, line_no, "empty key");
    out[key] = value;
  }
  return out;
}

inline std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_kv_text(ss.str(), path);
}

}  // namespace microflow::io
