// SPDX-License-Identifier: Apache-2.0
//
// GRU and LSTM layers over one-hot activity inputs, a two-way softmax head on
// the last valid hidden state, and exact backpropagation through time.
//
// GRU (update gate multiplies the candidate):
//   z  = σ(W_z x + U_z h + b_z)
//   r  = σ(W_r x + U_r h + b_r)
//   h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//   h' = (1 − z) ⊙ h + z ⊙ h̃
//
// LSTM (no peepholes):
//   f, i, o = σ(W_g x + U_g h + b_g)
//   c̃  = tanh(W_c x + U_c h + b_c)
//   c' = f ⊙ c + i ⊙ c̃
//   h' = o ⊙ tanh(c')
//
// Batches are stored one sequence per row. Internally the rows are ordered by
// decreasing length so that the sequences still running at step t form a
// prefix of the batch; padding positions are never read.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "procrnn/matrix.hpp"

namespace procrnn {

using TokenId = std::uint32_t;

enum class CellKind { gru, lstm };

std::string_view to_string(CellKind kind) noexcept;
/// Accepts "gru" / "lstm" (case-insensitive); anything else is a ConfigError.
CellKind parse_cell_kind(std::string_view text);
std::size_t gate_count(CellKind kind) noexcept;

namespace gru_gate {
inline constexpr std::size_t update = 0;
inline constexpr std::size_t reset = 1;
inline constexpr std::size_t candidate = 2;
}  // namespace gru_gate

namespace lstm_gate {
inline constexpr std::size_t forget = 0;
inline constexpr std::size_t input = 1;
inline constexpr std::size_t output = 2;
inline constexpr std::size_t candidate = 3;
}  // namespace lstm_gate

/// Weights of one recurrent layer; index the vectors with gru_gate / lstm_gate.
struct LayerParams {
  CellKind kind = CellKind::gru;
  std::vector<Matrix> input_weights;      // [H × input]
  std::vector<Matrix> recurrent_weights;  // [H × H]
  std::vector<Matrix> biases;             // [1 × H]

  std::size_t input_size() const noexcept { return input_weights.front().cols(); }
  std::size_t hidden_size() const noexcept { return input_weights.front().rows(); }
};

struct HeadParams {
  Matrix weights;  // [2 × H]
  Matrix bias;     // [1 × 2]
};

/// All trainable state of a classifier. Gradients use the same type.
struct ModelParams {
  CellKind kind = CellKind::gru;
  std::vector<LayerParams> layers;
  HeadParams head;

  std::size_t vocab_size() const noexcept { return layers.front().input_size(); }
  std::size_t hidden_size() const noexcept { return layers.front().hidden_size(); }

  /// Every tensor in serialization order: per layer W gates, U gates, biases;
  /// then head weights and head bias.
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;

  std::size_t parameter_count() const noexcept;
  /// Parameters of the recurrent layers only (head excluded).
  std::size_t recurrent_parameter_count() const noexcept;

  /// Same shapes, all zeros.
  ModelParams zeros_like() const;
};

/// Glorot-uniform weights (±√(6/(fan_in+fan_out)) per matrix), zero biases.
/// Requires vocab_size ≥ 2, hidden_size ≥ 1 and layers ∈ {1, 2}.
ModelParams init_params(CellKind kind, std::size_t vocab_size, std::size_t hidden_size,
                        std::size_t layers, std::uint64_t seed);

/// Validates shapes and gate counts; throws ConfigError on inconsistency.
void validate(const ModelParams& params);

/// One-hot rows for `ids`, each of width `vocab_size`.
Matrix one_hot_rows(std::span<const TokenId> ids, std::size_t vocab_size);

// -- single steps -------------------------------------------------------------
// x is [n × input], states are [n × H]; one row per sequence.

struct GruStepCache {
  Matrix update, reset, reset_hidden, candidate;
};

Matrix gru_step(const LayerParams& layer, const Matrix& x, const Matrix& h_prev,
                GruStepCache* cache = nullptr);

struct LstmState {
  Matrix h;
  Matrix c;
};

struct LstmStepCache {
  Matrix forget, input, output, candidate, cell_tanh;
};

LstmState lstm_step(const LayerParams& layer, const Matrix& x, const LstmState& prev,
                    LstmStepCache* cache = nullptr);

// -- whole batches --------------------------------------------------------------

struct BatchInput {
  std::size_t max_length = 0;
  std::vector<TokenId> ids;         // [B × max_length] row-major; padding is ignored
  std::vector<std::size_t> lengths;  // 1 ≤ lengths[i] ≤ max_length
  std::vector<int> labels;           // 0 or 1; may be empty when only predicting

  std::size_t batch_size() const noexcept { return lengths.size(); }
  std::span<const TokenId> sequence(std::size_t i) const noexcept {
    return {ids.data() + i * max_length, lengths[i]};
  }
};

/// Packs sequences into a padded batch (pad id 0).
BatchInput make_batch(std::span<const std::span<const TokenId>> sequences,
                      std::span<const int> labels = {});

/// Activations retained by `forward` for `backward`. Opaque to callers.
class ForwardTape {
 public:
  std::size_t batch_size() const noexcept { return order_.size(); }

 private:
  friend struct TapeAccess;

  struct LayerSteps {
    std::vector<Matrix> inputs_hidden;  // h before each step
    std::vector<Matrix> outputs;        // h after each step
    std::vector<Matrix> cells_prev;     // LSTM only
    std::vector<GruStepCache> gru;
    std::vector<LstmStepCache> lstm;
  };

  const ModelParams* params_ = nullptr;
  std::vector<std::size_t> order_;   // sorted row -> original row
  std::vector<std::size_t> active_;  // rows still running at each step
  std::vector<std::vector<TokenId>> step_ids_;
  std::vector<LayerSteps> layers_;
  Matrix final_hidden_;  // [B × H], sorted order
};

struct ForwardResult {
  Matrix probs;  // [B × 2], original row order; column 1 is P(label = true)
  ForwardTape tape;
};

/// Runs every sequence to its own length from zero initial state. The tape
/// refers to `params`, which must outlive it.
ForwardResult forward(const BatchInput& batch, const ModelParams& params);

/// Probabilities only; no tape is kept.
Matrix predict_probs(const BatchInput& batch, const ModelParams& params);

/// Gradients of a loss given its gradient with respect to the head logits
/// ([B × 2], original row order).
ModelParams backward(const ForwardTape& tape, const Matrix& grad_logits);

}  // namespace procrnn
