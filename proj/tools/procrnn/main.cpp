// SPDX-License-Identifier: Apache-2.0
//
// procrnn: prepare labeled traces from event logs, train GRU/LSTM trace
// classifiers, evaluate them on prefixes and classify new traces.
//
// Exit codes: 0 success, 2 usage or configuration, 3 data, 4 model file.
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "manifest.hpp"
#include "procrnn/csv.hpp"
#include "procrnn/errors.hpp"
#include "procrnn/eventlog.hpp"
#include "procrnn/evaluation.hpp"
#include "procrnn/fileio.hpp"
#include "procrnn/training.hpp"
#include "procrnn/vocab.hpp"

namespace procrnn::cli {
namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitModel = 4;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

char single_char(const std::string& text, const char* what) {
  if (text == "tab" || text == "\\t") return '\t';
  if (text == "space") return ' ';
  if (text.size() != 1) throw UsageError(fmt::format("{} must be a single character (or 'tab'/'space')", what));
  return text[0];
}

void print_summary(std::ostream& out, const DatasetSummary& s) {
  fmt::print(out, "{:>8} {:>10} {:>11} {:>20}\n", "traces", "positives", "max_length", "distinct_activities");
  fmt::print(out, "{:>8} {:>10} {:>11} {:>20}\n", s.traces, s.positives, s.max_length, s.distinct_activities);
}

nlohmann::json summary_json(const DatasetSummary& s) {
  return {{"traces", s.traces},
          {"positives", s.positives},
          {"max_length", s.max_length},
          {"distinct_activities", s.distinct_activities}};
}

// -- prepare ------------------------------------------------------------------

struct PrepareOptions {
  std::string events;
  std::string case_column = "case";
  std::vector<std::string> activity_columns = {"activity"};
  std::string joiner = "+";
  std::string timestamp_column = "timestamp";
  std::string format{kDefaultTimestampFormat};
  std::string delimiter = ",";
  std::string seq_separator = " ";
  std::optional<std::string> label_duration;
  std::optional<std::string> label_attribute;
  std::optional<std::size_t> max_cases;
  std::string out;
};

/// Activity names may not contain the sequence separator; each occurrence is
/// replaced by '_'. Two names that become equal would merge activities, so
/// that is rejected.
std::size_t sanitize_activities(std::vector<CaseEvents>& cases, char separator) {
  std::map<std::string, std::string> origin;
  std::size_t renamed = 0;
  std::map<std::string, bool> seen;
  for (auto& c : cases)
    for (auto& e : c.events) {
      std::string clean = e.activity;
      std::replace(clean.begin(), clean.end(), separator, '_');
      auto [it, inserted] = origin.emplace(clean, e.activity);
      if (!inserted && it->second != e.activity)
        throw DataError(fmt::format("activities '{}' and '{}' collide once the separator is replaced; "
                                    "choose another --seq-separator",
                                    it->second, e.activity));
      if (clean != e.activity && seen.emplace(e.activity, true).second) ++renamed;
      e.activity = std::move(clean);
    }
  return renamed;
}

int run_prepare(const PrepareOptions& o) {
  if (o.label_duration.has_value() == o.label_attribute.has_value())
    throw UsageError("give exactly one of --label-duration and --label-attribute");
  const char delim = single_char(o.delimiter, "--delimiter");
  const char sep = single_char(o.seq_separator, "--seq-separator");

  EventColumns cols;
  cols.case_column = o.case_column;
  cols.activity_column = o.activity_columns.front();
  cols.timestamp_column = o.timestamp_column;
  std::string attribute, expected;
  if (o.label_attribute) {
    const auto eq = o.label_attribute->find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--label-attribute expects COLUMN=VALUE");
    attribute = o.label_attribute->substr(0, eq);
    expected = o.label_attribute->substr(eq + 1);
    cols.attributes.push_back(attribute);
  }
  for (std::size_t i = 1; i < o.activity_columns.size(); ++i) cols.attributes.push_back(o.activity_columns[i]);
  // Validate the span before reading a large file.
  const std::optional<Span> threshold =
      o.label_duration ? std::optional<Span>(parse_span(*o.label_duration)) : std::nullopt;

  std::vector<CaseEvents> cases = parse_event_csv(o.events, cols, o.format, delim);
  if (o.max_cases && cases.size() > *o.max_cases) cases.resize(*o.max_cases);

  // Compound activity names, e.g. name+lifecycle.
  for (auto& c : cases)
    for (auto& e : c.events)
      for (std::size_t i = 1; i < o.activity_columns.size(); ++i) {
        const auto it = e.attributes.find(o.activity_columns[i]);
        e.activity += o.joiner + (it == e.attributes.end() ? std::string() : it->second);
      }
  const std::size_t renamed = sanitize_activities(cases, sep);

  std::vector<Trace> traces;
  std::size_t missing = 0;
  if (threshold) {
    traces = label_by_duration(cases, *threshold);
  } else {
    auto labeled = label_by_attribute(cases, attribute, expected);
    traces = std::move(labeled.traces);
    missing = labeled.missing;
  }

  write_file_atomically(o.out, [&](std::ostream& out) { write_labeled_csv(out, traces, ',', sep); });
  print_summary(std::cout, summarize(traces));
  if (renamed > 0)
    fmt::print(std::cerr, "note: {} activity name(s) contained the separator; replaced it with '_'\n", renamed);
  if (missing > 0) fmt::print(std::cerr, "warning: {} case(s) had no '{}' value and were labeled false\n", missing, attribute);
  return 0;
}

// -- train ----------------------------------------------------------------------

struct TrainOptions {
  std::string data;
  std::optional<std::string> validation;
  std::string delimiter = ",";
  std::string seq_separator = " ";
  double split_fraction = kDefaultSplitFraction;
  std::optional<std::uint64_t> split_seed;
  std::string cell = "gru";
  std::optional<std::size_t> vocab_size;
  std::string model;
  std::string metrics;
  std::optional<std::string> manifest;
  bool no_timings = false;
  bool quiet = false;
  TrainConfig config;
};

int run_train(TrainOptions o) {
  const char delim = single_char(o.delimiter, "--delimiter");
  const char sep = single_char(o.seq_separator, "--seq-separator");
  TrainConfig& config = o.config;
  config.cell = parse_cell_kind(o.cell);
  config.vocab_size = o.vocab_size;
  config.validate();

  Manifest manifest(o.manifest ? *o.manifest : o.model + ".manifest.json", "train");
  manifest.add_input("data", o.data);
  if (o.validation) manifest.add_input("validation", *o.validation);
  manifest.add_output("model", o.model);
  manifest.add_output("metrics", o.metrics);
  manifest.body()["config"] = config_json(config);

  Dataset dataset;
  const auto all = parse_labeled_csv(o.data, delim, sep);
  if (o.validation) {
    dataset.training = all;
    dataset.validation = parse_labeled_csv(*o.validation, delim, sep);
  } else {
    dataset = split(all, o.split_fraction, o.split_seed.value_or(config.seed));
    manifest.body()["split"] = {{"fraction", o.split_fraction}, {"seed", dataset.split_seed}};
  }
  manifest.body()["dataset"] = {{"training", summary_json(summarize(dataset.training))},
                                {"validation", summary_json(summarize(dataset.validation))}};
  const double epochs = static_cast<double>(config.iterations * config.traces_per_iteration) /
                        static_cast<double>(dataset.training.size());
  manifest.body()["epochs"] = epochs;
  manifest.body()["iterations"] = nlohmann::json::array();
  manifest.write();

  try {
    TrainResult result;
    write_file_atomically(o.metrics, [&](std::ostream& out) {
      write_metrics_header(out);
      result = train(dataset, config, [&](const MetricsReport& r) {
        write_metrics_rows(out, r, !o.no_timings);
        out.flush();
        const FractionMetrics* full = r.at(100.0);
        manifest.body()["iterations"].push_back({{"iteration", r.iteration},
                                                 {"train_seconds", r.train_seconds},
                                                 {"eval_seconds", r.eval_seconds},
                                                 {"mean_train_loss", r.mean_train_loss},
                                                 {"presentations", r.presentations},
                                                 {"accuracy", full->accuracy},
                                                 {"auroc", full->auroc ? nlohmann::json(*full->auroc) : nullptr}});
        manifest.write();
        if (!o.quiet)
          fmt::print(std::cerr, "iteration {}/{}  loss {:.4f}  accuracy {:.4f}  auroc {}  train {:.2f}s  eval {:.2f}s\n",
                     r.iteration, config.iterations, r.mean_train_loss, full->accuracy,
                     full->auroc ? fmt::format("{:.4f}", *full->auroc) : "n/a", r.train_seconds, r.eval_seconds);
      });
      save(result.bundle, o.model);
    });

    double train_total = 0.0, eval_total = 0.0;
    for (const auto& r : result.history) {
      train_total += r.train_seconds;
      eval_total += r.eval_seconds;
    }
    const auto& s = result.bundle.summary;
    manifest.body()["result"] = {{"best_iteration", s.best_iteration},
                                 {"best_accuracy", s.best_accuracy},
                                 {"vocabulary_ids", result.bundle.vocab.size()},
                                 {"parameters", result.bundle.params.parameter_count()},
                                 {"train_seconds_total", train_total},
                                 {"eval_seconds_total", eval_total}};
    manifest.finish("completed");
    fmt::print("best iteration {} of {}: validation accuracy {:.4f} at 100%  ({:.1f} epochs, {:.2f}s training)\n",
               s.best_iteration, s.iterations_run, s.best_accuracy, epochs, train_total);
  } catch (const std::exception& e) {
    manifest.body()["error"] = e.what();
    manifest.finish("failed");
    throw;
  }
  return 0;
}

// -- evaluate -------------------------------------------------------------------

struct EvaluateOptions {
  std::string model;
  std::string data;
  std::string delimiter = ",";
  std::string seq_separator = " ";
  std::vector<double> prefixes = {25, 50, 75, 100};
  std::size_t batch_size = 256;
  std::string out;
  bool no_timings = false;
};

int run_evaluate(const EvaluateOptions& o) {
  const char delim = single_char(o.delimiter, "--delimiter");
  const char sep = single_char(o.seq_separator, "--seq-separator");
  for (double f : o.prefixes)
    if (!(f > 0.0 && f <= 100.0)) throw UsageError("--prefixes values must lie in (0, 100]");
  if (o.batch_size < 1) throw UsageError("--batch-size must be at least 1");

  const ModelBundle bundle = load(o.model);
  const auto traces = parse_labeled_csv(o.data, delim, sep);
  if (traces.empty()) throw DataError(o.data + " contains no traces");
  const auto encoded = encode_all(traces, bundle.vocab, bundle.config.truncate_unknown_runs);

  const auto start = std::chrono::steady_clock::now();
  MetricsReport report = evaluate(bundle.params, encoded, o.prefixes, o.batch_size);
  report.eval_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.iteration = bundle.summary.best_iteration;

  write_file_atomically(o.out, [&](std::ostream& out) {
    write_metrics_header(out);
    write_metrics_rows(out, report, !o.no_timings);
  });
  for (const auto& f : report.fractions)
    fmt::print("{:>6}%  accuracy {:.4f}  auroc {}  tp {} fp {} fn {} tn {}\n", f.fraction, f.accuracy,
               f.auroc ? fmt::format("{:.4f}", *f.auroc) : "n/a", f.confusion.tp, f.confusion.fp, f.confusion.fn,
               f.confusion.tn);
  return 0;
}

// -- predict ----------------------------------------------------------------------

struct PredictOptions {
  std::string model;
  std::optional<std::string> sequence;
  std::optional<std::string> data;
  std::string delimiter = ",";
  std::string seq_separator = " ";
  std::optional<std::string> out;
};

std::vector<std::string> split_tokens(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find(sep, start);
    if (end == std::string_view::npos) end = text.size();
    const auto tok = trim(text.substr(start, end - start));
    if (!tok.empty()) out.emplace_back(tok);
    start = end + 1;
  }
  return out;
}

int run_predict(const PredictOptions& o) {
  if (o.sequence.has_value() == o.data.has_value()) throw UsageError("give exactly one of --sequence and --data");
  const char delim = single_char(o.delimiter, "--delimiter");
  const char sep = single_char(o.seq_separator, "--seq-separator");

  std::vector<Trace> traces;
  if (o.sequence) {
    Trace t;
    t.activities = split_tokens(*o.sequence, sep);
    if (t.activities.empty()) throw UsageError("--sequence is empty");
    traces.push_back(std::move(t));
  }
  const ModelBundle bundle = load(o.model);
  if (o.data) traces = parse_labeled_csv(*o.data, delim, sep);

  std::ostringstream lines;
  for (const auto& t : traces) {
    const auto enc = encode(t, bundle.vocab, bundle.config.truncate_unknown_runs);
    const Classification c = classify(bundle.params, enc.ids);
    fmt::print(lines, "{},{}\n", c.label ? "true" : "false", c.prob_true);
  }
  if (o.out)
    write_file_atomically(*o.out, [&](std::ostream& out) { out << lines.str(); });
  else
    std::cout << lines.str();
  return 0;
}

// -- wiring ---------------------------------------------------------------------

void add_csv_format_flags(CLI::App* cmd, std::string& delimiter, std::string& separator) {
  cmd->add_option("--delimiter", delimiter, "CSV field delimiter (a character, or 'tab')")->capture_default_str();
  cmd->add_option("--seq-separator", separator, "separator between activities in the sequence column")
      ->capture_default_str();
}

int run(int argc, char** argv) {
  CLI::App app{"Classify business-process traces with GRU/LSTM networks trained from scratch."};
  app.require_subcommand(1);
  app.set_version_flag("--version", PROCRNN_VERSION);

  PrepareOptions prep;
  auto* prepare = app.add_subcommand("prepare", "label the cases of an event log and write a labeled-trace CSV");
  prepare->add_option("--events", prep.events, "event CSV, one row per event")->required();
  prepare->add_option("--case", prep.case_column, "case id column")->capture_default_str();
  prepare->add_option("--activity", prep.activity_columns,
                      "activity column; repeat to build compound names joined by --activity-joiner")
      ->capture_default_str();
  prepare->add_option("--activity-joiner", prep.joiner, "joins compound activity columns")->capture_default_str();
  prepare->add_option("--timestamp", prep.timestamp_column, "timestamp column")->capture_default_str();
  prepare
      ->add_option("--format", prep.format,
                   "timestamp pattern: %Y %m %d %H %M %S (accepts .fraction) %f %z (Z or +HH:MM) %T %F %%; "
                   "a space matches any run of whitespace")
      ->capture_default_str();
  prepare->add_option("--label-duration", prep.label_duration,
                                          "label true when last minus first timestamp exceeds SPAN (e.g. 7d, 2w, 36h)");
  prepare->add_option("--label-attribute", prep.label_attribute,
                                           "label true when the case's COLUMN equals VALUE (COLUMN=VALUE)");
  prepare->add_option("--max-cases", prep.max_cases, "keep only the first N cases (by first appearance), before labeling");
  prepare->add_option("--out", prep.out, "labeled-trace CSV to write")->required();
  add_csv_format_flags(prepare, prep.delimiter, prep.seq_separator);

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "train a classifier; writes the model, a metrics CSV and a manifest");
  train_cmd->add_option("--data", tr.data, "labeled-trace CSV")->required();
  train_cmd->add_option("--validation", tr.validation,
                        "separate validation CSV; without it --data is split stratified by label");
  train_cmd->add_option("--split", tr.split_fraction, "training share of each class")->capture_default_str();
  train_cmd->add_option("--split-seed", tr.split_seed, "seed for the split (default: --seed)");
  train_cmd->add_option("--cell", tr.cell, "gru or lstm")->capture_default_str();
  train_cmd->add_option("--hidden", tr.config.hidden_size, "hidden state size")->capture_default_str();
  train_cmd->add_option("--layers", tr.config.layers, "1 or 2")->capture_default_str();
  train_cmd->add_option("--vocab-size", tr.vocab_size, "keep only the N most frequent training activities");
  train_cmd->add_flag("--truncate-unk", tr.config.truncate_unknown_runs,
                      "collapse runs of unknown activities into one");
  train_cmd->add_option("--batch-size", tr.config.batch_size)->capture_default_str();
  train_cmd->add_option("--iterations", tr.config.iterations)->capture_default_str();
  train_cmd->add_option("--traces-per-iteration", tr.config.traces_per_iteration)->capture_default_str();
  train_cmd->add_option("--lr", tr.config.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--clip", tr.config.clip_norm, "global gradient-norm limit")->capture_default_str();
  train_cmd->add_option("--seed", tr.config.seed)->capture_default_str();
  train_cmd->add_option("--train-prefix", tr.config.train_prefix_fraction,
                        "train on the leading PCT percent of each trace")
      ->capture_default_str();
  train_cmd->add_option("--prefixes", tr.config.prefix_fractions, "evaluation prefix percentages (must include 100)")
      ->delimiter(',')
      ->capture_default_str();
  train_cmd->add_option("--model", tr.model, "model file to write")->required();
  train_cmd->add_option("--metrics", tr.metrics, "per-iteration metrics CSV to write")->required();
  train_cmd->add_option("--manifest", tr.manifest, "run manifest (default: MODEL.manifest.json)");
  train_cmd->add_flag("--no-timings", tr.no_timings,
                      "leave the timing columns of the metrics CSV empty, so reruns compare byte for byte");
  train_cmd->add_flag("-q,--quiet", tr.quiet, "no per-iteration progress on stderr");
  add_csv_format_flags(train_cmd, tr.delimiter, tr.seq_separator);

  EvaluateOptions ev;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a labeled-trace CSV with a trained model");
  eval_cmd->add_option("--model", ev.model)->required();
  eval_cmd->add_option("--data", ev.data, "labeled-trace CSV")->required();
  eval_cmd->add_option("--prefixes", ev.prefixes)->delimiter(',')->capture_default_str();
  eval_cmd->add_option("--batch-size", ev.batch_size)->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "metrics CSV to write")->required();
  eval_cmd->add_flag("--no-timings", ev.no_timings, "leave the timing columns empty");
  add_csv_format_flags(eval_cmd, ev.delimiter, ev.seq_separator);

  PredictOptions pr;
  auto* predict = app.add_subcommand("predict", "classify traces; prints label,prob_true per trace");
  predict->add_option("--model", pr.model)->required();
  predict->add_option("--sequence", pr.sequence, "one trace, activities separated by --seq-separator");
  predict->add_option("--data", pr.data, "labeled-trace CSV (labels are ignored)");
  predict->add_option("--out", pr.out, "write predictions here instead of stdout");
  add_csv_format_flags(predict, pr.delimiter, pr.seq_separator);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (*prepare) return run_prepare(prep);
  if (*train_cmd) return run_train(tr);
  if (*eval_cmd) return run_evaluate(ev);
  return run_predict(pr);
}

}  // namespace
}  // namespace procrnn::cli

int main(int argc, char** argv) {
  using namespace procrnn;
  try {
    return cli::run(argc, argv);
  } catch (const cli::UsageError& e) {
    fmt::print(stderr, "procrnn: {}\n", e.what());
    return cli::kExitUsage;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "procrnn: configuration error: {}\n", e.what());
    return cli::kExitUsage;
  } catch (const DataError& e) {
    fmt::print(stderr, "procrnn: data error: {}\n", e.what());
    return cli::kExitData;
  } catch (const ModelError& e) {
    fmt::print(stderr, "procrnn: model error: {}\n", e.what());
    return cli::kExitModel;
  } catch (const std::exception& e) {
    fmt::print(stderr, "procrnn: {}\n", e.what());
    return 1;
  }
}
