#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace hldet::io {

/// Deterministic shortest-ish double formatting for CSV/JSON output.
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Splits one CSV line on commas (no quoting; the formats here never quote).
std::vector<std::string> split_csv_line(const std::string& line);

/// Reads a whole file; ContractError when it cannot be opened.
std::string read_file(const std::string& path);

/// Writes a whole file, creating parent directories first.
void write_file(const std::string& path, const std::string& content);

}  // namespace hldet::io
