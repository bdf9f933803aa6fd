// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "procrnn/rnn.hpp"
#include "procrnn/vocab.hpp"

namespace procrnn {

/// Leading max(1, ⌈fraction/100 · len⌉) elements; 0 < fraction ≤ 100.
std::size_t prefix_length(std::size_t length, double fraction_percent);
std::span<const TokenId> prefix(std::span<const TokenId> ids, double fraction_percent);

struct Classification {
  bool label = false;  // prob_true > 0.5; an exact tie is negative
  double prob_true = 0.5;
};

Classification classify(const ModelParams& model, std::span<const TokenId> ids);

/// P(true) for the prefix of every trace, scored in batches of `batch_size`.
std::vector<double> score_prefixes(const ModelParams& model, std::span<const EncodedTrace> traces,
                                   double fraction_percent, std::size_t batch_size = 256);

class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mann-Whitney AUROC via rank sums with midranks for ties. Throws
/// UndefinedMetricError unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct Confusion {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const noexcept { return tp + fp + fn + tn; }
  double accuracy() const noexcept {
    return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
  }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct FractionMetrics {
  double fraction = 100.0;
  double accuracy = 0.0;
  std::optional<double> auroc;  // absent when the validation set is single-class
  Confusion confusion;
};

struct MetricsReport {
  std::size_t iteration = 0;
  std::vector<FractionMetrics> fractions;
  double train_seconds = 0.0;
  double eval_seconds = 0.0;
  double mean_train_loss = 0.0;
  std::size_t presentations = 0;  // training traces shown this iteration
  std::size_t batches = 0;

  /// Metrics at `fraction`, or nullptr when it was not evaluated.
  const FractionMetrics* at(double fraction) const noexcept;
};

MetricsReport evaluate(const ModelParams& model, std::span<const EncodedTrace> validation,
                       std::span<const double> fractions, std::size_t batch_size = 256);

/// `iteration,fraction,accuracy,auroc,tp,fp,fn,tn,train_seconds,eval_seconds`
void write_metrics_header(std::ostream& out);
/// One row per fraction. Without timings the two seconds columns are left empty.
void write_metrics_rows(std::ostream& out, const MetricsReport& report, bool include_timings = true);

}  // namespace procrnn
