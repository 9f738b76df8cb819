#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace bevbridge {

// Locale-independent number formatting so output files are byte-stable.
std::string format_number(double x, int precision = 10);
std::string format_exact(double x);  // round-trips (%.17g)

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws std::invalid_argument if the column is missing.
  std::size_t column(std::string_view name) const;
  double number(std::size_t row, std::string_view name) const;
};

// Plain comma-separated values without quoting. Throws std::runtime_error on
// ragged rows or a missing header.
CsvTable read_csv(std::istream& is);
CsvTable read_csv_file(const std::string& path);

void write_csv_row(std::ostream& os, const std::vector<std::string>& cells);

}  // namespace bevbridge
