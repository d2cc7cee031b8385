#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "microflow/error.hpp"

namespace microflow::io {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

// Line-oriented reader that tracks 1-based line numbers for error messages.
// Lines starting with '#' are metadata/comments and are surfaced separately.
class LineReader {
public:
  explicit LineReader(const std::string& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path);
  }

  // Next non-empty, non-comment line. Comment lines are appended to
  // `comments()`. Returns false at end of file.
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (trim(line).empty()) continue;
      if (line.front() == '#') {
        comments_.push_back(line);
        continue;
      }
      return true;
    }
    return false;
  }

  std::size_t line_no() const noexcept { return line_no_; }
  const std::string& path() const noexcept { return path_; }
  const std::vector<std::string>& comments() const noexcept { return comments_; }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, line_no_, what); }

private:
  std::string path_;
  std::ifstream in_;
  std::size_t line_no_ = 0;
  std::vector<std::string> comments_;
};

// Parses "# key=value" comment lines into pairs; other comments are ignored.
inline std::vector<std::pair<std::string, std::string>> parse_meta_comments(const std::vector<std::string>& comments) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& c : comments) {
    std::string_view body = trim(std::string_view(c).substr(1));
    // A comment line may hold several space-separated key=value tokens.
    std::size_t start = 0;
    while (start < body.size()) {
      std::size_t end = body.find(' ', start);
      if (end == std::string_view::npos) end = body.size();
      std::string_view tok = body.substr(start, end - start);
      const std::size_t eq = tok.find('=');
      if (eq != std::string_view::npos && eq > 0) {
        out.emplace_back(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
      }
      start = end + 1;
    }
  }
  return out;
}

inline void expect_header(LineReader& r, std::string_view expected) {
  std::string line;
  if (!r.next(line)) r.fail("missing header, expected '" + std::string(expected) + "'");
  if (trim(line) != expected) r.fail("bad header '" + line + "', expected '" + std::string(expected) + "'");
}

inline std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

// Shortest round-trip decimal for a double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Fixed significant digits ("%.*g").
inline std::string format_sig(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

}  // namespace microflow::io
