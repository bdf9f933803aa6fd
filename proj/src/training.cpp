// SPDX-License-Identifier: Apache-2.0
#include "procrnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "procrnn/errors.hpp"

namespace procrnn {

void TrainConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("hidden size must be at least 1");
  if (layers < 1 || layers > 2) throw ConfigError("layer count must be 1 or 2");
  if (vocab_size && *vocab_size == 0) throw ConfigError("vocabulary size must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (iterations < 1) throw ConfigError("iteration count must be at least 1");
  if (traces_per_iteration < 1) throw ConfigError("traces per iteration must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  if (prefix_fractions.empty()) throw ConfigError("at least one evaluation fraction is required");
  for (double f : prefix_fractions)
    if (!(f > 0.0 && f <= 100.0)) throw ConfigError("evaluation fractions must lie in (0, 100]");
  if (std::find(prefix_fractions.begin(), prefix_fractions.end(), 100.0) == prefix_fractions.end())
    throw ConfigError("evaluation fractions must include 100");
  if (!(train_prefix_fraction > 0.0 && train_prefix_fraction <= 100.0))
    throw ConfigError("training prefix fraction must lie in (0, 100]");
}

BatchGradients batch_gradients(const ModelParams& params, const BatchInput& batch) {
  ForwardResult fwd = forward(batch, params);
  BatchGradients out;
  out.loss = cross_entropy(fwd.probs, batch.labels);
  out.grads = backward(fwd.tape, cross_entropy_logit_grad(fwd.probs, batch.labels));
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Separate streams for initialization and presentation order.
constexpr std::uint64_t kSamplerStream = 0x9E3779B97F4A7C15ULL;

/// Endless presentation order: a shuffled pass over the training set,
/// reshuffled whenever it is used up.
class PresentationCycle {
 public:
  PresentationCycle(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed ^ kSamplerStream) {
    std::iota(order_.begin(), order_.end(), 0);
    rng_.shuffle(std::span<std::size_t>(order_));
  }

  std::size_t next() {
    if (cursor_ == order_.size()) {
      rng_.shuffle(std::span<std::size_t>(order_));
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

 private:
  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t cursor_ = 0;
};

}  // namespace

TrainResult train_encoded(const Vocabulary& vocab, std::span<const EncodedTrace> training,
                          std::span<const EncodedTrace> validation, const TrainConfig& config,
                          const ProgressSink& progress) {
  config.validate();
  if (vocab.max_size() != config.vocab_size)
    throw ConfigError("vocabulary size limit does not match the training configuration");
  if (training.empty()) throw ConfigError("training set is empty");
  if (validation.empty()) throw ConfigError("validation set is empty");
  for (auto set : {training, validation})
    for (const auto& t : set) {
      if (t.ids.empty()) throw ConfigError("encoded trace is empty");
      for (TokenId id : t.ids)
        if (id >= vocab.size()) throw ConfigError("encoded trace uses an id outside the vocabulary");
    }

  TrainResult result;
  ModelBundle& bundle = result.bundle;
  bundle.config = config;
  bundle.vocab = vocab;
  ModelParams params = init_params(config.cell, vocab.size(), config.hidden_size, config.layers, config.seed);
  bundle.params = params;
  AdamState adam(params, AdamConfig{.learning_rate = config.learning_rate});

  std::vector<std::span<const TokenId>> presented;
  presented.reserve(training.size());
  for (const auto& t : training) presented.push_back(prefix(t.ids, config.train_prefix_fraction));

  PresentationCycle cycle(training.size(), config.seed);
  std::vector<std::span<const TokenId>> seqs;
  std::vector<int> labels;
  bool have_best = false;

  for (std::size_t iteration = 1; iteration <= config.iterations; ++iteration) {
    const auto train_start = Clock::now();
    double loss_sum = 0.0;
    std::size_t presented_now = 0, batches = 0;
    std::size_t remaining = config.traces_per_iteration;
    while (remaining > 0) {
      const std::size_t b = std::min(config.batch_size, remaining);
      seqs.clear();
      labels.clear();
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t idx = cycle.next();
        seqs.push_back(presented[idx]);
        labels.push_back(training[idx].label);
      }
      BatchGradients step = batch_gradients(params, make_batch(seqs, labels));
      clip_by_global_norm(step.grads, config.clip_norm);
      adam.update(params, step.grads);
      loss_sum += step.loss * static_cast<double>(b);
      remaining -= b;
      presented_now += b;
      ++batches;
    }
    const double train_seconds = seconds_since(train_start);

    const auto eval_start = Clock::now();
    MetricsReport report = evaluate(params, validation, config.prefix_fractions, config.batch_size);
    report.eval_seconds = seconds_since(eval_start);
    report.train_seconds = train_seconds;
    report.iteration = iteration;
    report.mean_train_loss = loss_sum / static_cast<double>(presented_now);
    report.presentations = presented_now;
    report.batches = batches;

    const double accuracy = report.at(100.0)->accuracy;
    if (!have_best || accuracy > bundle.summary.best_accuracy) {
      have_best = true;
      bundle.params = params;
      bundle.summary.best_accuracy = accuracy;
      bundle.summary.best_iteration = iteration;
    }
    bundle.summary.iterations_run = iteration;
    result.history.push_back(report);
    if (progress) progress(report);
  }
  return result;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const ProgressSink& progress) {
  config.validate();
  const Vocabulary vocab = Vocabulary::build(dataset.training, config.vocab_size);
  const auto training = encode_all(dataset.training, vocab, config.truncate_unknown_runs);
  const auto validation = encode_all(dataset.validation, vocab, config.truncate_unknown_runs);
  return train_encoded(vocab, training, validation, config, progress);
}

TrainResult train_on_prefixes(const Dataset& dataset, TrainConfig config, double train_prefix_fraction,
                              const ProgressSink& progress) {
  config.train_prefix_fraction = train_prefix_fraction;
  return train(dataset, config, progress);
}

}  // namespace procrnn
