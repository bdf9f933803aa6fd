// SPDX-License-Identifier: Apache-2.0
#include "procrnn/csv.hpp"

#include "procrnn/errors.hpp"

namespace procrnn {

bool CsvReader::next(CsvRecord& record) {
  if (!started_) {
    started_ = true;
    if (in_.peek() == 0xEF) {
      char bom[3];
      in_.read(bom, 3);
      if (!(static_cast<unsigned char>(bom[1]) == 0xBB && static_cast<unsigned char>(bom[2]) == 0xBF)) {
        in_.clear();
        in_.seekg(0);
      }
    }
  }

  for (;;) {
    record.fields.clear();
    record.line = line_;
    if (in_.peek() == std::char_traits<char>::eof()) return false;

    std::string field;
    bool quoted = false;
    bool field_started = false;  // a quote opened this field
    bool after_quote = false;    // closing quote seen, waiting for delimiter
    for (;;) {
      const int ci = in_.get();
      if (ci == std::char_traits<char>::eof()) {
        if (quoted) throw RowError(record.line, "unterminated quoted field");
        break;
      }
      const char c = static_cast<char>(ci);
      if (quoted) {
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field.push_back('"');
          } else {
            quoted = false;
            after_quote = true;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == delimiter_) {
        record.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
        after_quote = false;
        continue;
      }
      if (c == '\r' && in_.peek() == '\n') continue;
      if (c == '\n') {
        ++line_;
        break;
      }
      if (c == '"' && !field_started && field.empty() && !after_quote) {
        quoted = true;
        field_started = true;
        continue;
      }
      // Characters after a closing quote are kept verbatim.
      field.push_back(c);
    }
    record.fields.push_back(std::move(field));
    const bool blank = record.fields.size() == 1 && record.fields[0].empty() && !field_started;
    if (!blank) return true;
  }
}

std::string csv_quote(std::string_view field, char delimiter) {
  const bool needs = field.find_first_of(std::string{delimiter, '"', '\n', '\r'}) !=
                     std::string_view::npos;
  if (!needs) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_csv_row(std::ostream& out, std::span<const std::string> fields, char delimiter) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out.put(delimiter);
    out << csv_quote(fields[i], delimiter);
  }
  out.put('\n');
}

std::string_view trim(std::string_view s) noexcept {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

}  // namespace procrnn
