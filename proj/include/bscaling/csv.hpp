#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "bscaling/numerics.hpp"

namespace bscaling {

/// Header plus rows of raw fields (RFC 4180 quoting: "..." with "" escapes).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Throws Parse on unterminated quotes, a missing header, or ragged rows.
CsvTable read_csv(std::istream& in);

struct NumericTable {
  std::vector<std::string> header;
  Matrix data;

  /// Column index by name; throws Parse when absent.
  Index column(std::string_view name) const;
};

/// Every field must be a finite dot-decimal number; blank, NaN and Inf
/// cells are rejected with their 1-based row and column.
NumericTable to_numeric(const CsvTable& table);
NumericTable read_numeric_csv_file(const std::string& path);

/// Shortest representation that parses back to the same double.
std::string format_number(double v);

/// Writes one record, quoting fields that need it.
void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);
void write_numeric_csv(std::ostream& os, const std::vector<std::string>& header,
                       const Matrix& data);

}  // namespace bscaling
