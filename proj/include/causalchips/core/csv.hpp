#pragma once

#include <optional>
#include <string>
#include <vector>

namespace causalchips::csv {

std::vector<std::string> split_line(const std::string& line);

/// Parsed CSV with a mandatory header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<size_t> column(const std::string& name) const;
};

Table read_table(const std::string& path);

/// Empty string, "NA", "na", "NaN", "nan" all count as missing.
bool is_missing(const std::string& cell);

/// Parses a cell to double; missing cells come back as NaN.
double parse_value(const std::string& cell);

/// Shortest float formatting that round-trips (9 significant digits).
std::string format_float(float v);
/// Shortest double formatting that round-trips (17 significant digits).
std::string format_double(double v);

} // namespace causalchips::csv
