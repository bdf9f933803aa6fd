// SPDX-License-Identifier: Apache-2.0
#include "procrnn/evaluation.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "procrnn/errors.hpp"

namespace procrnn {

std::size_t prefix_length(std::size_t length, double fraction_percent) {
  if (!(fraction_percent > 0.0 && fraction_percent <= 100.0))
    throw ConfigError("prefix fraction must lie in (0, 100]");
  // fraction·len is exact for integral percentages, so the ceiling is too.
  const double scaled = fraction_percent * static_cast<double>(length) / 100.0;
  const auto n = static_cast<std::size_t>(std::ceil(scaled));
  return std::clamp<std::size_t>(n, 1, std::max<std::size_t>(length, 1));
}

std::span<const TokenId> prefix(std::span<const TokenId> ids, double fraction_percent) {
  return ids.first(std::min(ids.size(), prefix_length(ids.size(), fraction_percent)));
}

Classification classify(const ModelParams& model, std::span<const TokenId> ids) {
  if (ids.empty()) throw std::logic_error("classify: empty sequence");
  const std::span<const TokenId> seqs[] = {ids};
  const Matrix probs = predict_probs(make_batch(seqs), model);
  return Classification{probs(0, 1) > 0.5, probs(0, 1)};
}

std::vector<double> score_prefixes(const ModelParams& model, std::span<const EncodedTrace> traces,
                                   double fraction_percent, std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<double> scores;
  scores.reserve(traces.size());
  std::vector<std::span<const TokenId>> seqs;
  for (std::size_t start = 0; start < traces.size(); start += batch_size) {
    const std::size_t end = std::min(traces.size(), start + batch_size);
    seqs.clear();
    for (std::size_t i = start; i < end; ++i) seqs.push_back(prefix(traces[i].ids, fraction_percent));
    const Matrix probs = predict_probs(make_batch(seqs), model);
    for (std::size_t r = 0; r < probs.rows(); ++r) scores.push_back(probs(r, 1));
  }
  return scores;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::logic_error("auroc: score/label count mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks (1-based) for tied groups.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw UndefinedMetricError("AUROC needs at least one positive and one negative");
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

const FractionMetrics* MetricsReport::at(double fraction) const noexcept {
  for (const auto& f : fractions)
    if (f.fraction == fraction) return &f;
  return nullptr;
}

MetricsReport evaluate(const ModelParams& model, std::span<const EncodedTrace> validation,
                       std::span<const double> fractions, std::size_t batch_size) {
  if (validation.empty()) throw ConfigError("validation set is empty");
  MetricsReport report;
  std::vector<int> labels;
  labels.reserve(validation.size());
  for (const auto& t : validation) labels.push_back(t.label);

  for (double fraction : fractions) {
    const std::vector<double> scores = score_prefixes(model, validation, fraction, batch_size);
    FractionMetrics m;
    m.fraction = fraction;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool predicted = scores[i] > 0.5;
      const bool actual = labels[i] != 0;
      if (predicted && actual) ++m.confusion.tp;
      else if (predicted) ++m.confusion.fp;
      else if (actual) ++m.confusion.fn;
      else ++m.confusion.tn;
    }
    m.accuracy = m.confusion.accuracy();
    try {
      m.auroc = auroc(scores, labels);
    } catch (const UndefinedMetricError&) {
      m.auroc.reset();
    }
    report.fractions.push_back(m);
  }
  return report;
}

void write_metrics_header(std::ostream& out) {
  out << "iteration,fraction,accuracy,auroc,tp,fp,fn,tn,train_seconds,eval_seconds\n";
}

void write_metrics_rows(std::ostream& out, const MetricsReport& report, bool include_timings) {
  for (const auto& f : report.fractions) {
    fmt::print(out, "{},{},{},{},{},{},{},{},", report.iteration, f.fraction, f.accuracy,
               f.auroc ? fmt::format("{}", *f.auroc) : std::string(), f.confusion.tp,
               f.confusion.fp, f.confusion.fn, f.confusion.tn);
    if (include_timings) {
      fmt::print(out, "{},{}\n", report.train_seconds, report.eval_seconds);
    } else {
      out << ",\n";
    }
  }
}

}  // namespace procrnn
