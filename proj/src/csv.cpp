#include "crisk/csv.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "crisk/error.hpp"
#include "crisk/types.hpp"

namespace crisk {

std::optional<std::size_t> CsvTable::find(std::string_view column) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == column) return i;
  }
  return std::nullopt;
}

std::size_t CsvTable::require(std::string_view column) const {
  if (auto idx = find(column)) return *idx;
  throw Error(ErrorCode::Parse, "missing required column '" + std::string(column) + "'");
}

namespace {

// Reads one record; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, std::size_t& line_no) {
  fields.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line_no;
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      ++line_no;
      fields.push_back(std::move(field));
      return true;
    } else if (c == '\n') {
      ++line_no;
      fields.push_back(std::move(field));
      return true;
    } else {
      field.push_back(c);
    }
  }
  if (in_quotes) throw Error(ErrorCode::Parse, fmt::format("unterminated quote near line {}", line_no));
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

bool needs_quotes(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos;
}

}  // namespace

CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::size_t line_no = 1;
  std::vector<std::string> fields;
  if (!read_record(in, table.header, line_no)) return table;
  while (read_record(in, fields, line_no)) {
    if (fields.size() == 1 && fields[0].empty()) continue;
    if (fields.size() != table.header.size()) {
      throw Error(ErrorCode::Parse, fmt::format("line {}: expected {} fields, found {}", line_no - 1,
                                                table.header.size(), fields.size()));
    }
    table.rows.push_back(fields);
  }
  return table;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return parse_csv(in);
}

void write_csv(std::ostream& out, const CsvTable& table) {
  auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      if (needs_quotes(row[i])) {
        out << '"';
        for (char c : row[i]) {
          if (c == '"') out << '"';
          out << c;
        }
        out << '"';
      } else {
        out << row[i];
      }
    }
    out << '\n';
  };
  write_row(table.header);
  for (const auto& row : table.rows) write_row(row);
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  write_csv(out, table);
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

std::string format_double(double value) {
  if (std::isnan(value)) return {};
  return fmt::format("{}", value);
}

double parse_double(std::string_view cell) {
  while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
  while (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") return kMissing;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    if (cell == "inf") return HUGE_VAL;
    if (cell == "-inf") return -HUGE_VAL;
    throw Error(ErrorCode::Parse, "not a number: '" + std::string(cell) + "'");
  }
  return value;
}

}  // namespace crisk
