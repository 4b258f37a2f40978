#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crisk {

/// In-memory CSV: header plus string cells. Empty cells encode missing values.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(std::string_view column) const;
  std::size_t require(std::string_view column) const;
};

CsvTable parse_csv(std::istream& in);
CsvTable read_csv(const std::string& path);

void write_csv(std::ostream& out, const CsvTable& table);
void write_csv(const std::string& path, const CsvTable& table);

/// Shortest text that parses back to the same double; empty for NaN.
std::string format_double(double value);

/// Parses a numeric cell; empty (or "NA") yields NaN.
double parse_double(std::string_view cell);

}  // namespace crisk
