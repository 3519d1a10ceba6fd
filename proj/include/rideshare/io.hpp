#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rideshare/core.hpp"

namespace rideshare::io {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double to_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw ParseError(where + ": expected a number, got '" + std::string(s) + "'");
  return v;
}

inline std::int64_t to_int(std::string_view s, const std::string& where) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
    throw ParseError(where + ": expected an integer, got '" + std::string(s) + "'");
  return v;
}

/// One data row of a CSV file, with its 1-based line number for messages.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

/// Reads a comma-separated file with a header row. Blank lines and lines
/// starting with '#' are skipped. Every row must have `columns` fields.
inline std::vector<CsvRow> read_csv(const std::filesystem::path& path, std::size_t columns) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::vector<CsvRow> rows;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto parts = split(t);
    if (parts.size() != columns)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(columns) + " fields, got " + std::to_string(parts.size()));
    if (header) {
      header = false;
      continue;
    }
    CsvRow row{lineno, {}};
    for (auto p : parts) row.fields.emplace_back(p);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string where(const std::filesystem::path& p, std::size_t line) {
  return p.string() + ":" + std::to_string(line);
}

/// Writes `content` to `path` via a temporary sibling and a rename, so a
/// crash never leaves a half-written output file behind.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(tmp.string() + ": cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace rideshare::io
