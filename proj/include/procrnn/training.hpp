// SPDX-License-Identifier: Apache-2.0
//
// Training loop and model persistence.
//
// An iteration is a fixed number of training presentations (one trace and its
// label each) followed by a full validation pass at every prefix fraction.
// Presentations cycle through a seeded shuffle of the training set that is
// reshuffled after each full pass.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "procrnn/eventlog.hpp"
#include "procrnn/evaluation.hpp"
#include "procrnn/optim.hpp"
#include "procrnn/rnn.hpp"
#include "procrnn/vocab.hpp"

namespace procrnn {

struct TrainConfig {
  CellKind cell = CellKind::gru;
  std::size_t hidden_size = 32;
  std::size_t layers = 1;
  std::optional<std::size_t> vocab_size;  // unset: every training activity
  bool truncate_unknown_runs = false;
  std::size_t batch_size = 256;
  std::size_t iterations = 50;
  std::size_t traces_per_iteration = 100000;
  double learning_rate = 0.001;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::vector<double> prefix_fractions = {25.0, 50.0, 75.0, 100.0};
  double train_prefix_fraction = 100.0;

  /// Throws ConfigError on any out-of-range field. Fraction 100 must be among
  /// the evaluation fractions because model selection uses it.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainingSummary {
  std::size_t iterations_run = 0;
  std::size_t best_iteration = 0;
  double best_accuracy = 0.0;  // validation accuracy at fraction 100
  friend bool operator==(const TrainingSummary&, const TrainingSummary&) = default;
};

struct ModelBundle {
  static constexpr unsigned kFormatVersion = 1;

  TrainConfig config;
  Vocabulary vocab;
  ModelParams params;
  TrainingSummary summary;
};

struct TrainResult {
  ModelBundle bundle;  // parameters from the best iteration
  std::vector<MetricsReport> history;
};

using ProgressSink = std::function<void(const MetricsReport&)>;

/// Builds the vocabulary from the training half, encodes both halves and
/// trains.
TrainResult train(const Dataset& dataset, const TrainConfig& config, const ProgressSink& progress = {});

/// As `train`, with every training presentation cut to its leading
/// `train_prefix_fraction` percent.
TrainResult train_on_prefixes(const Dataset& dataset, TrainConfig config, double train_prefix_fraction,
                              const ProgressSink& progress = {});

/// Lower-level entry point for pre-encoded data. `vocab` must be the one the
/// traces were encoded with and must agree with config.vocab_size.
TrainResult train_encoded(const Vocabulary& vocab, std::span<const EncodedTrace> training,
                          std::span<const EncodedTrace> validation, const TrainConfig& config,
                          const ProgressSink& progress = {});

/// Mean loss and its gradients on one batch, no update.
struct BatchGradients {
  double loss = 0.0;
  ModelParams grads;
};
BatchGradients batch_gradients(const ModelParams& params, const BatchInput& batch);

// -- persistence ----------------------------------------------------------------
//
// File layout: a text header
//   procrnn-model
//   format_version 1
//   <key value> lines for the configuration and training summary
//   vocabulary <N>
//   <N percent-escaped tokens, one per line; id = position>
//   tensors <K>
//   end_header
// then K blocks, each `u64 element count, u32 rows, u32 cols` followed by the
// elements as IEEE-754 doubles, all little-endian, in ModelParams::tensors()
// order, and finally a little-endian u32 CRC-32 of every preceding byte.

void save(const ModelBundle& bundle, const std::filesystem::path& path);
/// Throws UnsupportedVersionError, IntegrityError or ModelError.
ModelBundle load(const std::filesystem::path& path);

std::string serialize(const ModelBundle& bundle);
ModelBundle deserialize(std::string_view bytes);

}  // namespace procrnn
