// SPDX-License-Identifier: Apache-2.0
#include "procrnn/rnn.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "procrnn/errors.hpp"

namespace procrnn {

std::string_view to_string(CellKind kind) noexcept {
  return kind == CellKind::gru ? "gru" : "lstm";
}

CellKind parse_cell_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "gru") return CellKind::gru;
  if (lower == "lstm") return CellKind::lstm;
  throw ConfigError("unknown cell type '" + std::string(text) + "' (expected gru or lstm)");
}

std::size_t gate_count(CellKind kind) noexcept { return kind == CellKind::gru ? 3 : 4; }

std::vector<Matrix*> ModelParams::tensors() {
  std::vector<Matrix*> out;
  for (auto& layer : layers) {
    for (auto& m : layer.input_weights) out.push_back(&m);
    for (auto& m : layer.recurrent_weights) out.push_back(&m);
    for (auto& m : layer.biases) out.push_back(&m);
  }
  out.push_back(&head.weights);
  out.push_back(&head.bias);
  return out;
}

std::vector<const Matrix*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::size_t ModelParams::parameter_count() const noexcept {
  return recurrent_parameter_count() + head.weights.size() + head.bias.size();
}

std::size_t ModelParams::recurrent_parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    for (const auto& m : layer.input_weights) n += m.size();
    for (const auto& m : layer.recurrent_weights) n += m.size();
    for (const auto& m : layer.biases) n += m.size();
  }
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  for (Matrix* m : out.tensors()) m->fill(0.0);
  return out;
}

namespace {

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return seeded_uniform(rows, cols, -limit, limit, rng);
}

}  // namespace

ModelParams init_params(CellKind kind, std::size_t vocab_size, std::size_t hidden_size,
                        std::size_t layers, std::uint64_t seed) {
  if (vocab_size < 2) throw ConfigError("vocabulary size must be at least 2");
  if (hidden_size < 1) throw ConfigError("hidden size must be at least 1");
  if (layers < 1 || layers > 2) throw ConfigError("layer count must be 1 or 2");

  Rng rng(seed);
  ModelParams p;
  p.kind = kind;
  const std::size_t gates = gate_count(kind);
  for (std::size_t l = 0; l < layers; ++l) {
    LayerParams layer;
    layer.kind = kind;
    const std::size_t in = l == 0 ? vocab_size : hidden_size;
    for (std::size_t g = 0; g < gates; ++g) layer.input_weights.push_back(glorot(hidden_size, in, rng));
    for (std::size_t g = 0; g < gates; ++g)
      layer.recurrent_weights.push_back(glorot(hidden_size, hidden_size, rng));
    for (std::size_t g = 0; g < gates; ++g) layer.biases.emplace_back(1, hidden_size);
    p.layers.push_back(std::move(layer));
  }
  p.head.weights = glorot(2, hidden_size, rng);
  p.head.bias = Matrix(1, 2);
  return p;
}

void validate(const ModelParams& p) {
  if (p.layers.empty() || p.layers.size() > 2) throw ConfigError("model must have 1 or 2 layers");
  const std::size_t gates = gate_count(p.kind);
  const std::size_t h = p.layers.front().input_weights.empty() ? 0 : p.hidden_size();
  if (h == 0) throw ConfigError("model has no hidden units");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    if (layer.kind != p.kind || layer.input_weights.size() != gates ||
        layer.recurrent_weights.size() != gates || layer.biases.size() != gates)
      throw ConfigError("layer " + std::to_string(l) + " has the wrong gate set");
    const std::size_t in = l == 0 ? layer.input_size() : h;
    for (std::size_t g = 0; g < gates; ++g) {
      if (layer.input_weights[g].rows() != h || layer.input_weights[g].cols() != in ||
          layer.recurrent_weights[g].rows() != h || layer.recurrent_weights[g].cols() != h ||
          layer.biases[g].rows() != 1 || layer.biases[g].cols() != h)
        throw ConfigError("layer " + std::to_string(l) + " has inconsistent shapes");
    }
  }
  if (p.head.weights.rows() != 2 || p.head.weights.cols() != h || p.head.bias.rows() != 1 ||
      p.head.bias.cols() != 2)
    throw ConfigError("classifier head has inconsistent shapes");
}

Matrix one_hot_rows(std::span<const TokenId> ids, std::size_t vocab_size) {
  Matrix x(ids.size(), vocab_size);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab_size)
      throw std::logic_error("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                             std::to_string(vocab_size));
    x(i, ids[i]) = 1.0;
  }
  return x;
}

namespace {

// Transposed weights so that every projection is a plain i-k-j matmul. The
// per-element summation order matches matmul_nt on the untransposed weights.
struct LayerKernels {
  std::vector<Matrix> input_t;      // [input × H]
  std::vector<Matrix> recurrent_t;  // [H × H]

  explicit LayerKernels(const LayerParams& layer) {
    for (const auto& w : layer.input_weights) input_t.push_back(transpose(w));
    for (const auto& u : layer.recurrent_weights) recurrent_t.push_back(transpose(u));
  }
};

Matrix preactivation(const LayerKernels& k, const LayerParams& layer, std::size_t gate,
                     const Matrix& x, const Matrix& h) {
  Matrix a = matmul(x, k.input_t[gate]);
  add_in_place(a, matmul(h, k.recurrent_t[gate]));
  add_row_broadcast(a, layer.biases[gate]);
  return a;
}

void sigmoid_in_place(Matrix& m) {
  for (double& v : m.values()) v = sigmoid(v);
}

void tanh_in_place(Matrix& m) {
  for (double& v : m.values()) v = std::tanh(v);
}

Matrix gru_step_impl(const LayerKernels& k, const LayerParams& layer, const Matrix& x,
                     const Matrix& h_prev, GruStepCache* cache) {
  Matrix z = preactivation(k, layer, gru_gate::update, x, h_prev);
  sigmoid_in_place(z);
  Matrix r = preactivation(k, layer, gru_gate::reset, x, h_prev);
  sigmoid_in_place(r);
  Matrix rh = hadamard(r, h_prev);
  Matrix n = preactivation(k, layer, gru_gate::candidate, x, rh);
  tanh_in_place(n);

  Matrix h(h_prev.rows(), h_prev.cols());
  auto hv = h.values();
  auto zv = z.values();
  auto nv = n.values();
  auto pv = h_prev.values();
  for (std::size_t i = 0; i < hv.size(); ++i) hv[i] = (1.0 - zv[i]) * pv[i] + zv[i] * nv[i];

  if (cache != nullptr) {
    cache->update = std::move(z);
    cache->reset = std::move(r);
    cache->reset_hidden = std::move(rh);
    cache->candidate = std::move(n);
  }
  return h;
}

LstmState lstm_step_impl(const LayerKernels& k, const LayerParams& layer, const Matrix& x,
                         const LstmState& prev, LstmStepCache* cache) {
  using namespace lstm_gate;
  Matrix f = preactivation(k, layer, forget, x, prev.h);
  sigmoid_in_place(f);
  Matrix i = preactivation(k, layer, input, x, prev.h);
  sigmoid_in_place(i);
  Matrix o = preactivation(k, layer, output, x, prev.h);
  sigmoid_in_place(o);
  Matrix g = preactivation(k, layer, candidate, x, prev.h);
  tanh_in_place(g);

  LstmState next{Matrix(prev.h.rows(), prev.h.cols()), Matrix(prev.c.rows(), prev.c.cols())};
  Matrix tc(prev.c.rows(), prev.c.cols());
  auto fv = f.values(), iv = i.values(), ov = o.values(), gv = g.values();
  auto cp = prev.c.values();
  auto cv = next.c.values(), hv = next.h.values(), tv = tc.values();
  for (std::size_t j = 0; j < cv.size(); ++j) {
    cv[j] = fv[j] * cp[j] + iv[j] * gv[j];
    tv[j] = std::tanh(cv[j]);
    hv[j] = ov[j] * tv[j];
  }

  if (cache != nullptr) {
    cache->forget = std::move(f);
    cache->input = std::move(i);
    cache->output = std::move(o);
    cache->candidate = std::move(g);
    cache->cell_tanh = std::move(tc);
  }
  return next;
}

void check_step_shapes(const LayerParams& layer, const Matrix& x, const Matrix& h) {
  if (x.cols() != layer.input_size() || h.cols() != layer.hidden_size() || x.rows() != h.rows())
    throw std::logic_error("recurrent step: input/state shapes do not match the layer");
}

void write_top_rows(Matrix& dst, const Matrix& src) {
  std::copy(src.values().begin(), src.values().end(), dst.values().begin());
}

}  // namespace

Matrix gru_step(const LayerParams& layer, const Matrix& x, const Matrix& h_prev,
                GruStepCache* cache) {
  if (layer.kind != CellKind::gru) throw std::logic_error("gru_step on a non-GRU layer");
  check_step_shapes(layer, x, h_prev);
  return gru_step_impl(LayerKernels(layer), layer, x, h_prev, cache);
}

LstmState lstm_step(const LayerParams& layer, const Matrix& x, const LstmState& prev,
                    LstmStepCache* cache) {
  if (layer.kind != CellKind::lstm) throw std::logic_error("lstm_step on a non-LSTM layer");
  check_step_shapes(layer, x, prev.h);
  if (prev.c.rows() != prev.h.rows() || prev.c.cols() != prev.h.cols())
    throw std::logic_error("lstm_step: cell and hidden state shapes differ");
  return lstm_step_impl(LayerKernels(layer), layer, x, prev, cache);
}

BatchInput make_batch(std::span<const std::span<const TokenId>> sequences,
                      std::span<const int> labels) {
  if (!labels.empty() && labels.size() != sequences.size())
    throw std::logic_error("make_batch: label count differs from sequence count");
  BatchInput b;
  for (const auto& s : sequences) b.max_length = std::max(b.max_length, s.size());
  b.ids.assign(sequences.size() * b.max_length, 0);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].empty()) throw std::logic_error("make_batch: empty sequence");
    std::copy(sequences[i].begin(), sequences[i].end(),
              b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.max_length));
    b.lengths.push_back(sequences[i].size());
  }
  b.labels.assign(labels.begin(), labels.end());
  return b;
}

struct TapeAccess {
  static ForwardResult run(const BatchInput& batch, const ModelParams& params, bool keep);
  static ModelParams backward(const ForwardTape& tape, const Matrix& grad_logits);
};

ForwardResult TapeAccess::run(const BatchInput& batch, const ModelParams& params, bool keep) {
  const std::size_t bsz = batch.batch_size();
  if (bsz == 0) throw std::logic_error("forward: empty batch");
  if (batch.ids.size() != bsz * batch.max_length)
    throw std::logic_error("forward: id matrix does not match batch shape");
  const std::size_t vocab = params.vocab_size();
  const std::size_t hidden = params.hidden_size();

  ForwardResult result;
  ForwardTape& tape = result.tape;
  tape.params_ = &params;

  tape.order_.resize(bsz);
  std::iota(tape.order_.begin(), tape.order_.end(), 0);
  std::stable_sort(tape.order_.begin(), tape.order_.end(), [&](std::size_t a, std::size_t b) {
    return batch.lengths[a] > batch.lengths[b];
  });
  for (std::size_t len : batch.lengths)
    if (len < 1 || len > batch.max_length) throw std::logic_error("forward: invalid sequence length");

  const std::size_t steps = batch.lengths[tape.order_.front()];
  tape.active_.resize(steps);
  tape.step_ids_.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::size_t n = 0;
    while (n < bsz && batch.lengths[tape.order_[n]] > t) ++n;
    tape.active_[t] = n;
    tape.step_ids_[t].resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      const TokenId id = batch.ids[tape.order_[r] * batch.max_length + t];
      if (id >= vocab)
        throw std::logic_error("forward: token id " + std::to_string(id) +
                               " outside vocabulary of " + std::to_string(vocab));
      tape.step_ids_[t][r] = id;
    }
  }

  tape.layers_.resize(params.layers.size());
  Matrix hidden_state;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const LayerParams& layer = params.layers[l];
    const LayerKernels kernels(layer);
    auto& rec = tape.layers_[l];
    const bool last = l + 1 == params.layers.size();
    // The next layer reads this layer's outputs, so they are kept even
    // without a tape.
    const bool keep_outputs = keep || !last;
    if (keep_outputs) rec.outputs.resize(steps);
    if (keep) {
      rec.inputs_hidden.resize(steps);
      if (params.kind == CellKind::gru) {
        rec.gru.resize(steps);
      } else {
        rec.lstm.resize(steps);
        rec.cells_prev.resize(steps);
      }
    }

    hidden_state = Matrix(bsz, hidden);
    Matrix cell_state(bsz, hidden);
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t n = tape.active_[t];
      const Matrix x = l == 0 ? one_hot_rows(tape.step_ids_[t], vocab)
                              : tape.layers_[l - 1].outputs[t];
      Matrix h_prev = hidden_state.top_rows(n);
      if (params.kind == CellKind::gru) {
        Matrix h = gru_step_impl(kernels, layer, x, h_prev, keep ? &rec.gru[t] : nullptr);
        write_top_rows(hidden_state, h);
        if (keep_outputs) rec.outputs[t] = std::move(h);
      } else {
        LstmState prev{std::move(h_prev), cell_state.top_rows(n)};
        LstmState next = lstm_step_impl(kernels, layer, x, prev, keep ? &rec.lstm[t] : nullptr);
        write_top_rows(hidden_state, next.h);
        write_top_rows(cell_state, next.c);
        if (keep) rec.cells_prev[t] = std::move(prev.c);
        h_prev = std::move(prev.h);
        if (keep_outputs) rec.outputs[t] = std::move(next.h);
      }
      if (keep) rec.inputs_hidden[t] = std::move(h_prev);
    }
    // Lower layers' outputs are only needed while running the layer above.
    if (!keep && l > 0) tape.layers_[l - 1].outputs.clear();
  }

  Matrix logits = matmul_nt(hidden_state, params.head.weights);
  add_row_broadcast(logits, params.head.bias);
  const Matrix sorted_probs = softmax_rows(logits);
  result.probs = Matrix(bsz, 2);
  for (std::size_t r = 0; r < bsz; ++r) {
    result.probs(tape.order_[r], 0) = sorted_probs(r, 0);
    result.probs(tape.order_[r], 1) = sorted_probs(r, 1);
  }
  tape.final_hidden_ = std::move(hidden_state);
  if (!keep) tape.layers_.clear();
  return result;
}

namespace {

void add_top_rows(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < s.size(); ++i) d[i] += s[i];
}

Matrix sigmoid_grad(const Matrix& upstream, const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  auto o = out.values();
  auto u = upstream.values();
  auto sv = s.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = u[i] * sv[i] * (1.0 - sv[i]);
  return out;
}

Matrix tanh_grad(const Matrix& upstream, const Matrix& t) {
  Matrix out(t.rows(), t.cols());
  auto o = out.values();
  auto u = upstream.values();
  auto tv = t.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = u[i] * (1.0 - tv[i] * tv[i]);
  return out;
}

void accumulate_gate(LayerParams& grads, std::size_t gate, const Matrix& da, const Matrix& x,
                     const Matrix& h) {
  matmul_tn_accumulate(da, x, grads.input_weights[gate]);
  matmul_tn_accumulate(da, h, grads.recurrent_weights[gate]);
  accumulate_column_sums(da, grads.biases[gate]);
}

}  // namespace

ModelParams TapeAccess::backward(const ForwardTape& tape, const Matrix& grad_logits) {
  if (tape.params_ == nullptr || tape.layers_.empty())
    throw std::logic_error("backward: tape was not recorded");
  const ModelParams& params = *tape.params_;
  const std::size_t bsz = tape.batch_size();
  if (grad_logits.rows() != bsz || grad_logits.cols() != 2)
    throw std::logic_error("backward: logit gradient does not match the recorded batch");
  const std::size_t vocab = params.vocab_size();
  const std::size_t hidden = params.hidden_size();
  const std::size_t steps = tape.active_.size();

  ModelParams grads = params.zeros_like();

  Matrix dlogits(bsz, 2);
  for (std::size_t r = 0; r < bsz; ++r) {
    dlogits(r, 0) = grad_logits(tape.order_[r], 0);
    dlogits(r, 1) = grad_logits(tape.order_[r], 1);
  }
  matmul_tn_accumulate(dlogits, tape.final_hidden_, grads.head.weights);
  accumulate_column_sums(dlogits, grads.head.bias);
  Matrix dh_final = matmul(dlogits, params.head.weights);

  // Gradient flowing into each step's output from the layer above.
  std::vector<Matrix> output_grads;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const LayerParams& layer = params.layers[li];
    const auto& rec = tape.layers_[li];
    LayerParams& g = grads.layers[li];
    const bool need_dx = li > 0;
    std::vector<Matrix> dx(need_dx ? steps : 0);

    Matrix dh = li + 1 == params.layers.size() ? dh_final : Matrix(bsz, hidden);
    Matrix dc(bsz, hidden);
    for (std::size_t t = steps; t-- > 0;) {
      const std::size_t n = tape.active_[t];
      const Matrix x = li == 0 ? one_hot_rows(tape.step_ids_[t], vocab)
                               : tape.layers_[li - 1].outputs[t];
      const Matrix& h_prev = rec.inputs_hidden[t];
      Matrix dh_t = dh.top_rows(n);
      if (!output_grads.empty()) add_top_rows(dh_t, output_grads[t]);

      Matrix dh_prev(n, hidden);
      Matrix dx_t;
      auto add_dx = [&](const Matrix& da, std::size_t gate) {
        if (!need_dx) return;
        Matrix contrib = matmul(da, layer.input_weights[gate]);
        if (dx_t.empty()) {
          dx_t = std::move(contrib);
        } else {
          add_in_place(dx_t, contrib);
        }
      };

      if (params.kind == CellKind::gru) {
        const GruStepCache& c = rec.gru[t];
        Matrix dn(n, hidden), dz(n, hidden);
        {
          auto dhv = dh_t.values();
          auto zv = c.update.values(), nv = c.candidate.values(), pv = h_prev.values();
          auto dnv = dn.values(), dzv = dz.values(), dpv = dh_prev.values();
          for (std::size_t i = 0; i < dhv.size(); ++i) {
            dnv[i] = dhv[i] * zv[i];
            dzv[i] = dhv[i] * (nv[i] - pv[i]);
            dpv[i] = dhv[i] * (1.0 - zv[i]);
          }
        }
        const Matrix da_n = tanh_grad(dn, c.candidate);
        accumulate_gate(g, gru_gate::candidate, da_n, x, c.reset_hidden);
        add_dx(da_n, gru_gate::candidate);
        const Matrix d_rh = matmul(da_n, layer.recurrent_weights[gru_gate::candidate]);
        Matrix dr(n, hidden);
        {
          auto drh = d_rh.values(), pv = h_prev.values(), rv = c.reset.values();
          auto drv = dr.values(), dpv = dh_prev.values();
          for (std::size_t i = 0; i < drv.size(); ++i) {
            drv[i] = drh[i] * pv[i];
            dpv[i] += drh[i] * rv[i];
          }
        }
        const Matrix da_z = sigmoid_grad(dz, c.update);
        const Matrix da_r = sigmoid_grad(dr, c.reset);
        accumulate_gate(g, gru_gate::update, da_z, x, h_prev);
        accumulate_gate(g, gru_gate::reset, da_r, x, h_prev);
        add_dx(da_z, gru_gate::update);
        add_dx(da_r, gru_gate::reset);
        add_in_place(dh_prev, matmul(da_z, layer.recurrent_weights[gru_gate::update]));
        add_in_place(dh_prev, matmul(da_r, layer.recurrent_weights[gru_gate::reset]));
        write_top_rows(dh, dh_prev);
      } else {
        using namespace lstm_gate;
        const LstmStepCache& c = rec.lstm[t];
        const Matrix& c_prev = rec.cells_prev[t];
        Matrix dc_t = dc.top_rows(n);
        Matrix d_out(n, hidden), d_forget(n, hidden), d_input(n, hidden), d_cand(n, hidden);
        Matrix dc_prev(n, hidden);
        {
          auto dhv = dh_t.values(), dcv = dc_t.values();
          auto ov = c.output.values(), tv = c.cell_tanh.values(), fv = c.forget.values();
          auto iv = c.input.values(), gv = c.candidate.values(), cp = c_prev.values();
          auto dov = d_out.values(), dfv = d_forget.values(), div = d_input.values();
          auto dgv = d_cand.values(), dcp = dc_prev.values();
          for (std::size_t i = 0; i < dhv.size(); ++i) {
            const double dcell = dcv[i] + dhv[i] * ov[i] * (1.0 - tv[i] * tv[i]);
            dov[i] = dhv[i] * tv[i];
            dfv[i] = dcell * cp[i];
            div[i] = dcell * gv[i];
            dgv[i] = dcell * iv[i];
            dcp[i] = dcell * fv[i];
          }
        }
        const Matrix da[4] = {sigmoid_grad(d_forget, c.forget), sigmoid_grad(d_input, c.input),
                              sigmoid_grad(d_out, c.output), tanh_grad(d_cand, c.candidate)};
        for (std::size_t gate = 0; gate < 4; ++gate) {
          accumulate_gate(g, gate, da[gate], x, h_prev);
          add_dx(da[gate], gate);
          add_in_place(dh_prev, matmul(da[gate], layer.recurrent_weights[gate]));
        }
        write_top_rows(dh, dh_prev);
        write_top_rows(dc, dc_prev);
      }
      if (need_dx) dx[t] = std::move(dx_t);
    }
    output_grads = std::move(dx);
  }
  return grads;
}

ForwardResult forward(const BatchInput& batch, const ModelParams& params) {
  return TapeAccess::run(batch, params, true);
}

Matrix predict_probs(const BatchInput& batch, const ModelParams& params) {
  return TapeAccess::run(batch, params, false).probs;
}

ModelParams backward(const ForwardTape& tape, const Matrix& grad_logits) {
  return TapeAccess::backward(tape, grad_logits);
}

}  // namespace procrnn
