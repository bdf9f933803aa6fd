// SPDX-License-Identifier: Apache-2.0
//
// Event-log ingestion: labeled trace files, raw event files grouped into
// cases, the two labeling rules, and the stratified train/validation split.
#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace procrnn {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using Span = std::chrono::milliseconds;

struct RawEvent {
  std::string case_id;
  std::string activity;
  Timestamp timestamp{};
  /// Extra columns requested through EventColumns::attributes.
  std::map<std::string, std::string> attributes;
};

struct CaseEvents {
  std::string case_id;
  std::vector<RawEvent> events;  // timestamp order, ties in file order
};

struct Trace {
  std::string case_id;
  std::vector<std::string> activities;
  bool label = false;
  std::optional<Span> duration;

  friend bool operator==(const Trace&, const Trace&) = default;
};

struct EventColumns {
  std::string case_column = "case";
  std::string activity_column = "activity";
  std::string timestamp_column = "timestamp";
  std::vector<std::string> attributes;
};

/// Default pattern for parse_timestamp.
inline constexpr std::string_view kDefaultTimestampFormat = "%Y-%m-%d %H:%M:%S";

/// Parses `text` under a strptime-like pattern into UTC milliseconds.
///   %Y year  %m month  %d day  %H hour  %M minute  %S seconds, optionally
///   followed by a fraction (".123")  %f fraction digits  %z "Z" or ±HH[:MM]
///   %T = %H:%M:%S  %F = %Y-%m-%d  %% literal percent.
/// A space in the pattern matches any run of whitespace; other characters
/// match themselves. Throws DataError on mismatch or an invalid date.
Timestamp parse_timestamp(std::string_view text, std::string_view format);

/// "14d", "2w", "36h" → milliseconds. Throws ConfigError otherwise.
Span parse_span(std::string_view text);

/// Labeled-trace CSV: header names `label` and `sequence` (any order; an
/// optional `case_id` column is kept). Labels are true/false/1/0 in any case.
std::vector<Trace> read_labeled_csv(std::istream& in, char delimiter = ',', char seq_separator = ' ');
std::vector<Trace> parse_labeled_csv(const std::filesystem::path& path, char delimiter = ',',
                                     char seq_separator = ' ');
/// Writes header `label,sequence` and one row per trace.
void write_labeled_csv(std::ostream& out, std::span<const Trace> traces, char delimiter = ',',
                       char seq_separator = ' ');

/// Groups events by case (first-appearance order) and sorts each group by
/// timestamp with ties kept in file order.
std::vector<CaseEvents> read_event_csv(std::istream& in, const EventColumns& columns,
                                       std::string_view timestamp_format, char delimiter = ',');
std::vector<CaseEvents> parse_event_csv(const std::filesystem::path& path,
                                        const EventColumns& columns,
                                        std::string_view timestamp_format, char delimiter = ',');

/// label = (last − first timestamp) > threshold.
std::vector<Trace> label_by_duration(std::span<const CaseEvents> cases, Span threshold);

struct AttributeLabeling {
  std::vector<Trace> traces;
  std::size_t missing = 0;  // cases without a value for the attribute, labeled false
};

/// label = the case's attribute value (first non-empty among its events,
/// trimmed) equals trim(expected).
AttributeLabeling label_by_attribute(std::span<const CaseEvents> cases, std::string_view attribute,
                                     std::string_view expected);

struct Dataset {
  std::vector<Trace> training;
  std::vector<Trace> validation;
  std::uint64_t split_seed = 0;
  double split_fraction = 0.75;
};

inline constexpr double kDefaultSplitFraction = 0.75;

/// Stratified split: each class is shuffled with the seeded generator and its
/// first round(fraction·n) traces go to training (at least one trace of each
/// class lands on each side). Both halves keep the input order.
Dataset split(std::span<const Trace> traces, double fraction, std::uint64_t seed);

struct DatasetSummary {
  std::size_t traces = 0;
  std::size_t positives = 0;
  std::size_t max_length = 0;
  std::size_t distinct_activities = 0;
};

DatasetSummary summarize(std::span<const Trace> traces);

}  // namespace procrnn
