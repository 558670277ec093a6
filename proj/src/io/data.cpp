#include "bgm/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace bgm {

ColumnStats fit_column_stats(const RowMatrix& values, std::vector<std::string> names) {
  const auto n = values.rows();
  const auto p = values.cols();
  if (n < 2) throw InputError("need at least two rows to fit column statistics");
  if (!names.empty() && static_cast<Eigen::Index>(names.size()) != p)
    throw InputError("column name count does not match the data");
  ColumnStats s;
  s.means.resize(static_cast<std::size_t>(p));
  s.stds.resize(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    const double mean = values.col(j).mean();
    const double var = (values.col(j).array() - mean).square().sum() / static_cast<double>(n - 1);
    s.means[static_cast<std::size_t>(j)] = mean;
    s.stds[static_cast<std::size_t>(j)] = std::sqrt(var);
  }
  if (names.empty())
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("col" + std::to_string(j + 1));
  s.names = std::move(names);
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(s.stds[static_cast<std::size_t>(j)] > 0.0))
      throw InputError("column '" + s.names[static_cast<std::size_t>(j)] +
                       "' is constant; constant columns cannot be standardized");
  return s;
}

DataMatrix DataMatrix::fit(RowMatrix values, std::vector<std::string> names) {
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      if (!std::isfinite(values(i, j)))
        throw InputError("non-finite value at row " + std::to_string(i + 1) + ", column " +
                         std::to_string(j + 1));
  DataMatrix dm;
  dm.stats = fit_column_stats(values, std::move(names));
  dm.values = std::move(values);
  return dm;
}

RowMatrix DataMatrix::standardized() const { return standardize(values, stats); }

RowMatrix standardize(const RowMatrix& values, const ColumnStats& stats) {
  if (static_cast<std::size_t>(values.cols()) != stats.means.size())
    throw InputError("standardize: column count mismatch");
  RowMatrix out(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      const auto c = static_cast<std::size_t>(j);
      out(i, j) = (values(i, j) - stats.means[c]) / stats.stds[c];
    }
  return out;
}

RowMatrix destandardize(const RowMatrix& values, const ColumnStats& stats) {
  if (static_cast<std::size_t>(values.cols()) != stats.means.size())
    throw InputError("destandardize: column count mismatch");
  RowMatrix out(values.rows(), values.cols());
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      out(i, j) = destandardize_value(values(i, j), static_cast<std::size_t>(j), stats);
  return out;
}

double destandardize_value(double v, std::size_t column, const ColumnStats& stats) {
  return v * stats.stds[column] + stats.means[column];
}

double destandardize_scale(double length, std::size_t column, const ColumnStats& stats) {
  return length * stats.stds[column];
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

CsvTable parse_csv(std::istream& in, bool allow_missing) {
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_line(line);
    if (width == 0) {
      width = cells.size();
      double probe = 0.0;
      bool header = false;
      for (const std::string& c : cells)
        if (!trim(c).empty() && !parse_number(c, probe)) header = true;
      if (header) {
        for (const std::string& c : cells) table.header.push_back(trim(c));
        continue;
      }
    }
    if (cells.size() != width)
      throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " fields, found " + std::to_string(cells.size()));
    std::vector<double> row(width);
    for (std::size_t j = 0; j < width; ++j) {
      if (trim(cells[j]).empty()) {
        if (!allow_missing)
          throw InputError("line " + std::to_string(line_no) + ", column " +
                           std::to_string(j + 1) + ": empty cell");
        row[j] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      if (!parse_number(cells[j], row[j]))
        throw InputError("line " + std::to_string(line_no) + ", column " + std::to_string(j + 1) +
                         ": cannot parse '" + trim(cells[j]) + "'");
      if (!std::isfinite(row[j]))
        throw InputError("line " + std::to_string(line_no) + ", column " + std::to_string(j + 1) +
                         ": non-finite value");
    }
    rows.push_back(std::move(row));
  }
  if (width == 0) throw InputError("empty CSV input");
  if (table.header.empty())
    for (std::size_t j = 0; j < width; ++j) table.header.push_back("col" + std::to_string(j + 1));
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return table;
}

CsvTable read_csv(const std::string& path, bool allow_missing) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  return parse_csv(in, allow_missing);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const int len = std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(len));
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const RowMatrix& values, bool empty_for_nan) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      const double v = values(i, j);
      if (!(empty_for_nan && std::isnan(v))) out << format_double(v);
    }
    out << '\n';
  }
}

}  // namespace bgm
