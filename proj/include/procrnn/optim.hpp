// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "procrnn/matrix.hpp"
#include "procrnn/rnn.hpp"

namespace procrnn {

/// Probabilities below this are raised to it before taking the log.
inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over rows of −ln(probs[i][labels[i]]).
double cross_entropy(const Matrix& probs, std::span<const int> labels);

/// d(mean cross-entropy)/d(logits) for a softmax head: (probs − onehot) / B.
Matrix cross_entropy_logit_grad(const Matrix& probs, std::span<const int> labels);

double global_norm(std::span<const Matrix* const> tensors);
double global_norm(const ModelParams& grads);

/// Rescales every tensor by max_norm/‖g‖ when the joint L2 norm exceeds
/// max_norm; otherwise leaves them untouched. Returns the norm before clipping.
double clip_by_global_norm(std::span<Matrix* const> tensors, double max_norm);
double clip_by_global_norm(ModelParams& grads, double max_norm);

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  /// Zeroed moments shaped like `shapes`.
  AdamState(std::span<const Matrix* const> shapes, AdamConfig config);
  AdamState(const ModelParams& like, AdamConfig config);

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step() const noexcept { return step_; }
  const std::vector<Matrix>& first_moment() const noexcept { return m_; }
  const std::vector<Matrix>& second_moment() const noexcept { return v_; }

  /// θ ← θ − α·m̂/(√v̂ + ε) with bias-corrected moments.
  void update(std::span<Matrix* const> params, std::span<const Matrix* const> grads);
  void update(ModelParams& params, const ModelParams& grads);

 private:
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace procrnn
