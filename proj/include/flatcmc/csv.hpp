#pragma once

// Numeric CSV tables with round-trip formatting and golden-file comparison.

#include <filesystem>
#include <string>
#include <vector>

namespace flatcmc {

/// Shortest decimal string that parses back to the same double ("nan", "inf", "-inf" for non-finite).
std::string format_double(double x);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> row);
  std::size_t column(const std::string& name) const;
  std::vector<double> column_values(const std::string& name) const;
};

/// Header line plus one line per row, LF endings.
std::string to_csv(const CsvTable& t);
CsvTable parse_csv(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct GoldenReport {
  bool match = true;
  std::size_t mismatches = 0;
  double worst_relative = 0.0;
  std::string first_mismatch;
};

/// Elementwise |a-b| <= rel_tol * max(|a|,|b|); exact equality always passes,
/// NaN never does. Throws DomainError when headers or row counts differ.
GoldenReport compare_tables(const CsvTable& artifact, const CsvTable& golden, double rel_tol);
bool compare_golden(const std::filesystem::path& artifact, const std::filesystem::path& golden, double rel_tol);

}  // namespace flatcmc
