// SPDX-License-Identifier: Apache-2.0
//
// RFC 4180 reading and writing: quoted fields may contain the delimiter,
// doubled quotes and line breaks. CRLF and LF line endings are accepted and a
// leading UTF-8 byte-order mark is skipped.
#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace procrnn {

struct CsvRecord {
  std::size_t line = 0;  // physical line where the record starts, 1-based
  std::vector<std::string> fields;
};

class CsvReader {
 public:
  explicit CsvReader(std::istream& in, char delimiter = ',') : in_(in), delimiter_(delimiter) {}

  /// Reads the next non-blank record. Returns false at end of input. An
  /// unterminated quoted field raises RowError.
  bool next(CsvRecord& record);

 private:
  std::istream& in_;
  char delimiter_;
  std::size_t line_ = 1;
  bool started_ = false;
};

/// Quotes `field` when it contains the delimiter, a quote or a line break.
std::string csv_quote(std::string_view field, char delimiter = ',');
void write_csv_row(std::ostream& out, std::span<const std::string> fields, char delimiter = ',');

/// Strips ASCII whitespace from both ends.
std::string_view trim(std::string_view s) noexcept;

}  // namespace procrnn
