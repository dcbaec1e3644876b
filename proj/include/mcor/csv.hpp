#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include "mcor/prob.hpp"

namespace mcor::csv {

struct CsvError : std::runtime_error {
  int line = 0;
  int column = 0;
  CsvError(const std::string& path, int line_, int column_, const std::string& what_)
      : std::runtime_error(path + ":" + std::to_string(line_) + ": column " +
                           std::to_string(column_) + ": " + what_),
        line(line_),
        column(column_) {}
};

/// Doubles are printed with 17 significant digits, which round-trips exactly.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& path, int line, int column,
                           const std::string& cell) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r'))
    --last;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw CsvError(path, line, column, "cannot parse '" + cell + "' as a number");
  return v;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline bool is_skippable(const std::string& line) {
  for (char c : line)
    if (c != ' ' && c != '\t' && c != '\r') return c == '#';
  return true;
}

/// Plain numeric matrix, one row per line. Lines starting with '#' and blank
/// lines are skipped on read.
inline void write_matrix(const std::filesystem::path& path, const Matrix& m,
                         const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& c : comments) out << "# " << c << "\n";
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_skippable(line)) continue;
    const auto fields = split_fields(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c)
      row.push_back(parse_double(path.string(), lineno, static_cast<int>(c) + 1, fields[c]));
    if (!rows.empty() && row.size() != rows.front().size())
      throw CsvError(path.string(), lineno, 1,
                     "row has " + std::to_string(row.size()) + " fields, expected " +
                         std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw CsvError(path.string(), lineno, 1, "no data rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

/// A header row followed by numeric rows.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline void write_table(const std::filesystem::path& path, const Table& t,
                        const std::vector<std::string>& comments = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& c : comments) out << "# " << c << "\n";
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i) out << ',';
    out << t.header[i];
  }
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      out << format_double(row[i]);
    }
    out << '\n';
  }
}

inline Table read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Table t;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_skippable(line)) continue;
    auto fields = split_fields(line);
    if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r')
      fields.back().pop_back();
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c)
      row.push_back(parse_double(path.string(), lineno, static_cast<int>(c) + 1, fields[c]));
    if (row.size() != t.header.size())
      throw CsvError(path.string(), lineno, 1,
                     "row has " + std::to_string(row.size()) + " fields, header has " +
                         std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw CsvError(path.string(), lineno, 1, "no header row");
  return t;
}

}  // namespace mcor::csv
