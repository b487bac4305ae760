#include "flatcmc/csv.hpp"

#include "flatcmc/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace flatcmc {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void CsvTable::add_row(std::vector<double> row) {
  if (row.size() != header.size()) throw DimensionError("CSV row width does not match header");
  rows.push_back(std::move(row));
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DomainError("no CSV column named " + name);
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<double> CsvTable::column_values(const std::string& name) const {
  const std::size_t c = column(name);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[c]);
  return out;
}

std::string to_csv(const CsvTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ',';
    out += t.header[i];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw DomainError("malformed CSV number '" + s + "'");
  return v;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  CsvTable t;
  if (!std::getline(is, line)) throw DomainError("empty CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  t.header = split_commas(line);
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split_commas(line)) row.push_back(parse_cell(cell));
    t.add_row(std::move(row));
  }
  return t;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DomainError("cannot write " + path.string());
  out << text;
  if (!out) throw DomainError("write failed for " + path.string());
}

GoldenReport compare_tables(const CsvTable& artifact, const CsvTable& golden, double rel_tol) {
  if (artifact.header != golden.header) throw DomainError("CSV headers differ");
  if (artifact.rows.size() != golden.rows.size()) throw DomainError("CSV row counts differ");
  GoldenReport rep;
  for (std::size_t r = 0; r < golden.rows.size(); ++r) {
    for (std::size_t c = 0; c < golden.header.size(); ++c) {
      const double a = artifact.rows[r][c];
      const double b = golden.rows[r][c];
      bool ok = false;
      double rel = 0.0;
      if (!std::isnan(a) && !std::isnan(b)) {
        if (a == b) {
          ok = true;
        } else {
          rel = std::abs(a - b) / std::max(std::abs(a), std::abs(b));
          ok = std::isfinite(rel) && rel <= rel_tol;
        }
      } else {
        rel = HUGE_VAL;
      }
      rep.worst_relative = std::max(rep.worst_relative, rel);
      if (!ok) {
        if (rep.mismatches == 0) {
          rep.first_mismatch = "row " + std::to_string(r + 1) + " column " + golden.header[c] + ": " +
                               format_double(a) + " vs " + format_double(b);
        }
        ++rep.mismatches;
        rep.match = false;
      }
    }
  }
  return rep;
}

bool compare_golden(const std::filesystem::path& artifact, const std::filesystem::path& golden, double rel_tol) {
  return compare_tables(parse_csv(read_text_file(artifact)), parse_csv(read_text_file(golden)), rel_tol).match;
}

}  // namespace flatcmc
