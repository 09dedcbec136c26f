#include "bscaling/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "bscaling/error.hpp"

namespace bscaling {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return std::string(s.substr(first, last - first + 1));
}

// Reads one record; returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields, long line) {
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
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      fields.push_back(std::move(field));
      return true;
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (in_quotes) {
    throw Error(ErrorKind::Parse, "csv: unterminated quote in record " + std::to_string(line));
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

bool blank_record(const std::vector<std::string>& fields) {
  return fields.size() == 1 && trim(fields[0]).empty();
}

}  // namespace

CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::vector<std::string> fields;
  long line = 1;
  while (read_record(in, fields, line)) {
    if (blank_record(fields)) {
      ++line;
      continue;
    }
    if (table.header.empty()) {
      for (auto& f : fields) table.header.push_back(trim(f));
    } else {
      if (fields.size() != table.header.size()) {
        throw Error(ErrorKind::Parse, "csv: row " + std::to_string(table.rows.size() + 1) +
                                          " has " + std::to_string(fields.size()) +
                                          " fields, header has " +
                                          std::to_string(table.header.size()));
      }
      table.rows.push_back(fields);
    }
    ++line;
  }
  if (table.header.empty()) throw Error(ErrorKind::Parse, "csv: missing header row");
  return table;
}

Index NumericTable::column(std::string_view name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<Index>(j);
  }
  throw Error(ErrorKind::Parse, "csv: no column named '" + std::string(name) + "'");
}

NumericTable to_numeric(const CsvTable& table) {
  NumericTable out;
  out.header = table.header;
  out.data.resize(static_cast<Index>(table.rows.size()), static_cast<Index>(table.header.size()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      const std::string field = trim(table.rows[i][j]);
      double v = 0.0;
      const char* begin = field.data();
      const char* end = begin + field.size();
      if (!field.empty() && *begin == '+') ++begin;
      const auto [ptr, ec] = std::from_chars(begin, end, v);
      if (field.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw Error(ErrorKind::Parse, "csv: row " + std::to_string(i + 1) + " column " +
                                          std::to_string(j + 1) + " ('" + table.header[j] +
                                          "'): not a finite number: '" + field + "'");
      }
      out.data(static_cast<Index>(i), static_cast<Index>(j)) = v;
    }
  }
  return out;
}

NumericTable read_numeric_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Parse, "cannot open '" + path + "'");
  return to_numeric(read_csv(in));
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (j > 0) os << ',';
    const std::string& f = fields[j];
    if (f.find_first_of(",\"\n\r") == std::string::npos) {
      os << f;
      continue;
    }
    os << '"';
    for (char c : f) {
      if (c == '"') os << '"';
      os << c;
    }
    os << '"';
  }
  os << '\n';
}

void write_numeric_csv(std::ostream& os, const std::vector<std::string>& header,
                       const Matrix& data) {
  write_csv_row(os, header);
  std::vector<std::string> fields(static_cast<std::size_t>(data.cols()));
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.cols(); ++j) fields[static_cast<std::size_t>(j)] = format_number(data(i, j));
    write_csv_row(os, fields);
  }
}

}  // namespace bscaling
