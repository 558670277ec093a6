#pragma once

#include "bgm/common.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace bgm {

struct ColumnStats {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<std::string> names;
};

// Training table plus the statistics used to standardize it. Statistics are
// fitted once on training rows and then frozen.
struct DataMatrix {
  RowMatrix values;  // original units
  ColumnStats stats;

  // Rejects non-finite cells and zero-variance columns with InputError.
  static DataMatrix fit(RowMatrix values, std::vector<std::string> names = {});

  RowMatrix standardized() const;
};

ColumnStats fit_column_stats(const RowMatrix& values, std::vector<std::string> names = {});

// NaN cells pass through unchanged.
RowMatrix standardize(const RowMatrix& values, const ColumnStats& stats);
RowMatrix destandardize(const RowMatrix& values, const ColumnStats& stats);
double destandardize_value(double v, std::size_t column, const ColumnStats& stats);
double destandardize_scale(double length, std::size_t column, const ColumnStats& stats);

// Parsed CSV. Empty cells become NaN when allowed.
struct CsvTable {
  std::vector<std::string> header;
  RowMatrix values;
};

// A first row that does not parse as numbers is taken as the header;
// otherwise columns are named col1..colp. Throws InputError naming the line
// (1-based) on malformed rows, and the cell on empty/non-finite values when
// missing cells are not allowed.
CsvTable read_csv(const std::string& path, bool allow_missing = false);
CsvTable parse_csv(std::istream& in, bool allow_missing = false);

// 17 significant digits ("%.17g"); parses back to the same double.
std::string format_double(double v);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const RowMatrix& values, bool empty_for_nan = false);

}  // namespace bgm
