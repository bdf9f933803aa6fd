// SPDX-License-Identifier: Apache-2.0
#include "procrnn/eventlog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "procrnn/csv.hpp"
#include "procrnn/errors.hpp"
#include "procrnn/matrix.hpp"

namespace procrnn {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

/// Maps column names to indices; duplicated names are a schema error.
std::unordered_map<std::string, std::size_t> index_header(const CsvRecord& header) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.fields.size(); ++i) {
    std::string name(trim(header.fields[i]));
    if (!index.emplace(name, i).second) throw SchemaError("duplicate column name '" + name + "'");
  }
  return index;
}

std::size_t require_column(const std::unordered_map<std::string, std::size_t>& index,
                           const std::string& name) {
  auto it = index.find(name);
  if (it == index.end()) throw SchemaError("missing column '" + name + "'");
  return it->second;
}

const std::string& field_at(const CsvRecord& rec, std::size_t col) {
  if (col >= rec.fields.size())
    throw RowError(rec.line, "expected at least " + std::to_string(col + 1) + " fields, found " +
                                 std::to_string(rec.fields.size()));
  return rec.fields[col];
}

// -- timestamp parsing --------------------------------------------------------

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;

  bool done() const { return pos >= text.size(); }
  char peek() const { return done() ? '\0' : text[pos]; }
};

[[noreturn]] void bad_timestamp(std::string_view text, std::string_view format) {
  throw DataError("timestamp '" + std::string(text) + "' does not match '" + std::string(format) + "'");
}

int read_int(Cursor& c, std::size_t min_digits, std::size_t max_digits, bool& ok) {
  std::size_t start = c.pos;
  while (c.pos < c.text.size() && c.pos - start < max_digits &&
         std::isdigit(static_cast<unsigned char>(c.text[c.pos])))
    ++c.pos;
  if (c.pos - start < min_digits) {
    ok = false;
    return 0;
  }
  int value = 0;
  std::from_chars(c.text.data() + start, c.text.data() + c.pos, value);
  return value;
}

/// Reads fraction digits (after any '.') and returns whole milliseconds.
int read_fraction_ms(Cursor& c, bool& ok) {
  std::size_t start = c.pos;
  int ms = 0;
  std::size_t n = 0;
  while (!c.done() && std::isdigit(static_cast<unsigned char>(c.peek()))) {
    if (n < 3) ms = ms * 10 + (c.peek() - '0');
    ++n;
    ++c.pos;
  }
  if (c.pos == start) ok = false;
  for (; n < 3; ++n) ms *= 10;
  return ms;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text, std::string_view format) {
  Cursor c{trim(text)};
  int year = 1970, month = 1, day = 1, hour = 0, minute = 0, second = 0, millis = 0;
  int offset_minutes = 0;
  bool ok = true;

  std::string expanded;
  for (std::size_t i = 0; i < format.size(); ++i) {
    if (format[i] == '%' && i + 1 < format.size() && format[i + 1] == 'T') {
      expanded += "%H:%M:%S";
      ++i;
    } else if (format[i] == '%' && i + 1 < format.size() && format[i + 1] == 'F') {
      expanded += "%Y-%m-%d";
      ++i;
    } else {
      expanded.push_back(format[i]);
    }
  }

  for (std::size_t i = 0; i < expanded.size() && ok; ++i) {
    const char f = expanded[i];
    if (f == ' ') {
      while (!c.done() && std::isspace(static_cast<unsigned char>(c.peek()))) ++c.pos;
      continue;
    }
    if (f != '%') {
      if (c.peek() != f) ok = false;
      ++c.pos;
      continue;
    }
    if (++i >= expanded.size()) bad_timestamp(text, format);
    switch (expanded[i]) {
      case 'Y': year = read_int(c, 4, 4, ok); break;
      case 'm': month = read_int(c, 1, 2, ok); break;
      case 'd': day = read_int(c, 1, 2, ok); break;
      case 'H': hour = read_int(c, 1, 2, ok); break;
      case 'M': minute = read_int(c, 1, 2, ok); break;
      case 'S':
        second = read_int(c, 1, 2, ok);
        // A fraction is taken here unless the pattern spells it out ("%S.%f").
        if (ok && (i + 1 >= expanded.size() || expanded[i + 1] != '.') && c.peek() == '.' &&
            c.pos + 1 < c.text.size() &&
            std::isdigit(static_cast<unsigned char>(c.text[c.pos + 1]))) {
          ++c.pos;
          millis = read_fraction_ms(c, ok);
        }
        break;
      case 'f': millis = read_fraction_ms(c, ok); break;
      case 'z': {
        if (c.peek() == 'Z') {
          ++c.pos;
          break;
        }
        const char sign = c.peek();
        if (sign != '+' && sign != '-') {
          ok = false;
          break;
        }
        ++c.pos;
        const int hh = read_int(c, 2, 2, ok);
        if (c.peek() == ':') ++c.pos;
        int mm = 0;
        if (!c.done() && std::isdigit(static_cast<unsigned char>(c.peek()))) mm = read_int(c, 2, 2, ok);
        offset_minutes = (sign == '-' ? -1 : 1) * (hh * 60 + mm);
        break;
      }
      case '%':
        if (c.peek() != '%') ok = false;
        ++c.pos;
        break;
      default:
        throw ConfigError("unsupported timestamp directive %" + std::string(1, expanded[i]));
    }
  }
  if (!ok || !c.done()) bad_timestamp(text, format);

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60) bad_timestamp(text, format);
  Timestamp tp = time_point_cast<milliseconds>(sys_days{ymd}) + hours{hour} + minutes{minute} +
                 seconds{second} + milliseconds{millis};
  return tp - minutes{offset_minutes};
}

Span parse_span(std::string_view text) {
  const std::string_view t = trim(text);
  if (t.size() < 2) throw ConfigError("invalid duration '" + std::string(text) + "' (use e.g. 14d or 2w)");
  const char unit = static_cast<char>(std::tolower(static_cast<unsigned char>(t.back())));
  double amount = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size() - 1, amount);
  if (ec != std::errc{} || ptr != t.data() + t.size() - 1 || amount < 0.0 || !std::isfinite(amount))
    throw ConfigError("invalid duration '" + std::string(text) + "' (use e.g. 14d or 2w)");
  double hours_per_unit = 0.0;
  switch (unit) {
    case 'h': hours_per_unit = 1.0; break;
    case 'd': hours_per_unit = 24.0; break;
    case 'w': hours_per_unit = 24.0 * 7.0; break;
    default: throw ConfigError("invalid duration unit in '" + std::string(text) + "' (h, d or w)");
  }
  return Span{static_cast<Span::rep>(std::llround(amount * hours_per_unit * 3600.0 * 1000.0))};
}

std::vector<Trace> read_labeled_csv(std::istream& in, char delimiter, char seq_separator) {
  CsvReader reader(in, delimiter);
  CsvRecord header;
  if (!reader.next(header)) throw SchemaError("labeled trace file has no header");
  const auto index = index_header(header);
  const std::size_t label_col = require_column(index, "label");
  const std::size_t seq_col = require_column(index, "sequence");
  const auto case_it = index.find("case_id");

  std::vector<Trace> traces;
  CsvRecord rec;
  while (reader.next(rec)) {
    Trace t;
    const std::string label = lower(trim(field_at(rec, label_col)));
    if (label == "true" || label == "1") {
      t.label = true;
    } else if (label == "false" || label == "0") {
      t.label = false;
    } else {
      throw RowError(rec.line, "unparsable label '" + std::string(trim(field_at(rec, label_col))) + "'");
    }
    std::string_view seq = field_at(rec, seq_col);
    std::size_t start = 0;
    while (start <= seq.size()) {
      std::size_t end = seq.find(seq_separator, start);
      if (end == std::string_view::npos) end = seq.size();
      const std::string_view token = trim(seq.substr(start, end - start));
      if (!token.empty()) t.activities.emplace_back(token);
      start = end + 1;
    }
    if (t.activities.empty()) throw RowError(rec.line, "empty sequence");
    if (case_it != index.end()) t.case_id = std::string(trim(field_at(rec, case_it->second)));
    if (t.case_id.empty()) t.case_id = "row-" + std::to_string(traces.size() + 1);
    traces.push_back(std::move(t));
  }
  return traces;
}

std::vector<Trace> parse_labeled_csv(const std::filesystem::path& path, char delimiter,
                                     char seq_separator) {
  auto in = open_input(path);
  return read_labeled_csv(in, delimiter, seq_separator);
}

void write_labeled_csv(std::ostream& out, std::span<const Trace> traces, char delimiter,
                       char seq_separator) {
  const std::vector<std::string> header = {"label", "sequence"};
  write_csv_row(out, header, delimiter);
  for (const auto& t : traces) {
    std::string seq;
    for (std::size_t i = 0; i < t.activities.size(); ++i) {
      if (i > 0) seq.push_back(seq_separator);
      seq += t.activities[i];
    }
    const std::vector<std::string> row = {t.label ? "true" : "false", std::move(seq)};
    write_csv_row(out, row, delimiter);
  }
}

std::vector<CaseEvents> read_event_csv(std::istream& in, const EventColumns& columns,
                                       std::string_view timestamp_format, char delimiter) {
  CsvReader reader(in, delimiter);
  CsvRecord header;
  if (!reader.next(header)) throw SchemaError("event file has no header");
  const auto index = index_header(header);
  const std::size_t case_col = require_column(index, columns.case_column);
  const std::size_t act_col = require_column(index, columns.activity_column);
  const std::size_t ts_col = require_column(index, columns.timestamp_column);
  std::vector<std::pair<std::string, std::size_t>> attr_cols;
  for (const auto& a : columns.attributes) attr_cols.emplace_back(a, require_column(index, a));

  std::vector<CaseEvents> cases;
  std::unordered_map<std::string, std::size_t> case_index;
  CsvRecord rec;
  while (reader.next(rec)) {
    RawEvent e;
    e.case_id = std::string(trim(field_at(rec, case_col)));
    e.activity = std::string(trim(field_at(rec, act_col)));
    if (e.activity.empty()) throw RowError(rec.line, "empty activity");
    try {
      e.timestamp = parse_timestamp(field_at(rec, ts_col), timestamp_format);
    } catch (const ConfigError&) {
      throw;
    } catch (const DataError& err) {
      throw RowError(rec.line, err.what());
    }
    for (const auto& [name, col] : attr_cols) e.attributes[name] = field_at(rec, col);

    auto [it, inserted] = case_index.emplace(e.case_id, cases.size());
    if (inserted) cases.push_back(CaseEvents{e.case_id, {}});
    cases[it->second].events.push_back(std::move(e));
  }
  for (auto& c : cases)
    std::stable_sort(c.events.begin(), c.events.end(),
                     [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });
  return cases;
}

std::vector<CaseEvents> parse_event_csv(const std::filesystem::path& path,
                                        const EventColumns& columns,
                                        std::string_view timestamp_format, char delimiter) {
  auto in = open_input(path);
  return read_event_csv(in, columns, timestamp_format, delimiter);
}

namespace {

Trace trace_of(const CaseEvents& c) {
  if (c.events.empty()) throw ConfigError("case '" + c.case_id + "' has no events");
  Trace t;
  t.case_id = c.case_id;
  t.activities.reserve(c.events.size());
  for (const auto& e : c.events) t.activities.push_back(e.activity);
  t.duration = c.events.back().timestamp - c.events.front().timestamp;
  return t;
}

}  // namespace

std::vector<Trace> label_by_duration(std::span<const CaseEvents> cases, Span threshold) {
  std::vector<Trace> out;
  out.reserve(cases.size());
  for (const auto& c : cases) {
    Trace t = trace_of(c);
    t.label = *t.duration > threshold;
    out.push_back(std::move(t));
  }
  return out;
}

AttributeLabeling label_by_attribute(std::span<const CaseEvents> cases, std::string_view attribute,
                                     std::string_view expected) {
  const std::string key(attribute);
  const bool loaded = std::any_of(cases.begin(), cases.end(), [&](const CaseEvents& c) {
    return std::any_of(c.events.begin(), c.events.end(),
                       [&](const RawEvent& e) { return e.attributes.count(key) > 0; });
  });
  if (!cases.empty() && !loaded) throw SchemaError("attribute column '" + key + "' was not loaded");

  const std::string_view want = trim(expected);
  AttributeLabeling result;
  for (const auto& c : cases) {
    Trace t = trace_of(c);
    std::optional<std::string_view> value;
    for (const auto& e : c.events) {
      auto it = e.attributes.find(key);
      if (it != e.attributes.end() && !trim(it->second).empty()) {
        value = trim(it->second);
        break;
      }
    }
    if (value) {
      t.label = *value == want;
    } else {
      t.label = false;
      ++result.missing;
    }
    result.traces.push_back(std::move(t));
  }
  return result;
}

Dataset split(std::span<const Trace> traces, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  if (traces.empty()) throw ConfigError("cannot split an empty trace list");

  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < traces.size(); ++i) by_class[traces[i].label ? 1 : 0].push_back(i);

  Rng rng(seed);
  std::vector<bool> in_training(traces.size(), false);
  for (int cls = 0; cls < 2; ++cls) {
    auto& members = by_class[cls];
    if (members.size() < 2)
      throw ConfigError(std::string("cannot stratify: class '") + (cls ? "true" : "false") +
                        "' has fewer than 2 traces");
    rng.shuffle(std::span<std::size_t>(members));
    auto cut = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size()) + 0.5));
    cut = std::clamp<std::size_t>(cut, 1, members.size() - 1);
    for (std::size_t k = 0; k < cut; ++k) in_training[members[k]] = true;
  }

  Dataset ds;
  ds.split_seed = seed;
  ds.split_fraction = fraction;
  for (std::size_t i = 0; i < traces.size(); ++i)
    (in_training[i] ? ds.training : ds.validation).push_back(traces[i]);
  return ds;
}

DatasetSummary summarize(std::span<const Trace> traces) {
  DatasetSummary s;
  std::unordered_set<std::string> activities;
  for (const auto& t : traces) {
    ++s.traces;
    if (t.label) ++s.positives;
    s.max_length = std::max(s.max_length, t.activities.size());
    activities.insert(t.activities.begin(), t.activities.end());
  }
  s.distinct_activities = activities.size();
  return s;
}

}  // namespace procrnn
