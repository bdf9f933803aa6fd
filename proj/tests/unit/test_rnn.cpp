// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "procrnn/errors.hpp"
#include "procrnn/optim.hpp"
#include "procrnn/rnn.hpp"

using namespace procrnn;
using procrnn::testing::random_batch;
using procrnn::testing::random_model;

namespace {

std::vector<double> row_vector(const Matrix& m, std::size_t r) {
  auto row = m.row(r);
  return {row.begin(), row.end()};
}

ModelParams zero_model(CellKind kind, std::size_t v, std::size_t h) {
  return init_params(kind, v, h, 1, 0).zeros_like();
}

Matrix random_rows(std::size_t n, std::size_t cols, Rng& rng) { return seeded_uniform(n, cols, -1.0, 1.0, rng); }

}  // namespace

TEST_CASE("gru step at zero parameters stays at zero") {
  const ModelParams p = zero_model(CellKind::gru, 4, 3);
  GruStepCache cache;
  const Matrix h = gru_step(p.layers[0], one_hot_rows(std::vector<TokenId>{2}, 4), Matrix(1, 3), &cache);
  CHECK(h == Matrix(1, 3));
  for (double z : cache.update.values()) CHECK(z == 0.5);
  for (double c : cache.candidate.values()) CHECK(c == 0.0);
}

TEST_CASE("gru step with a saturated update gate returns the candidate") {
  ModelParams p = zero_model(CellKind::gru, 4, 3);
  Rng rng(2);
  LayerParams& layer = p.layers[0];
  layer.input_weights[gru_gate::candidate] = random_rows(3, 4, rng);
  layer.recurrent_weights[gru_gate::candidate] = random_rows(3, 3, rng);
  layer.biases[gru_gate::update].fill(1000.0);
  const Matrix h_prev = random_rows(1, 3, rng);
  GruStepCache cache;
  const Matrix h = gru_step(layer, one_hot_rows(std::vector<TokenId>{1}, 4), h_prev, &cache);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(h(0, j) - cache.candidate(0, j)) <= 1e-12);
}

TEST_CASE("lstm step at zero parameters and state stays at zero") {
  const ModelParams p = zero_model(CellKind::lstm, 4, 3);
  const LstmState s = lstm_step(p.layers[0], one_hot_rows(std::vector<TokenId>{3}, 4), {Matrix(1, 3), Matrix(1, 3)});
  CHECK(s.h == Matrix(1, 3));
  CHECK(s.c == Matrix(1, 3));
}

TEST_CASE("lstm step with saturated forget and closed input gate keeps the cell") {
  ModelParams p = zero_model(CellKind::lstm, 4, 3);
  Rng rng(4);
  LayerParams& layer = p.layers[0];
  layer.biases[lstm_gate::forget].fill(1000.0);
  layer.biases[lstm_gate::input].fill(-1000.0);
  layer.input_weights[lstm_gate::candidate] = random_rows(3, 4, rng);
  const LstmState prev{random_rows(1, 3, rng), random_rows(1, 3, rng)};
  const LstmState next = lstm_step(layer, one_hot_rows(std::vector<TokenId>{0}, 4), prev);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(next.c(0, j) - prev.c(0, j)) <= 1e-12);
}

TEST_CASE("cell steps agree with the scalar loops on random cases") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t v = 2 + rng.below(8);
    const std::size_t h = 1 + rng.below(6);
    const std::size_t n = 1 + rng.below(4);
    const auto kind = seed % 2 == 0 ? CellKind::gru : CellKind::lstm;
    const ModelParams p = random_model(kind, v, h, 1, seed);
    const Matrix x = random_rows(n, v, rng);  // dense inputs exercise every weight
    const Matrix h_prev = random_rows(n, h, rng);
    const Matrix c_prev = random_rows(n, h, rng);
    if (kind == CellKind::gru) {
      const Matrix out = gru_step(p.layers[0], x, h_prev);
      for (std::size_t r = 0; r < n; ++r) {
        const auto expected = testing::scalar_gru_step(p.layers[0], row_vector(x, r), row_vector(h_prev, r));
        for (std::size_t j = 0; j < h; ++j) CHECK(std::abs(out(r, j) - expected[j]) <= 1e-12);
      }
    } else {
      const LstmState out = lstm_step(p.layers[0], x, {h_prev, c_prev});
      for (std::size_t r = 0; r < n; ++r) {
        const auto expected =
            testing::scalar_lstm_step(p.layers[0], row_vector(x, r), {row_vector(h_prev, r), row_vector(c_prev, r)});
        for (std::size_t j = 0; j < h; ++j) {
          CHECK(std::abs(out.h(r, j) - expected.h[j]) <= 1e-12);
          CHECK(std::abs(out.c(r, j) - expected.c[j]) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("forward with zero parameters gives a uniform head") {
  for (auto kind : {CellKind::gru, CellKind::lstm}) {
    const ModelParams p = zero_model(kind, 3, 2);
    const std::vector<TokenId> seq = {1};
    const std::span<const TokenId> view(seq);
    const Matrix probs = predict_probs(make_batch(std::span(&view, 1)), p);
    CHECK(probs(0, 0) == 0.5);
    CHECK(probs(0, 1) == 0.5);
  }
}

TEST_CASE("forward rejects an empty batch") {
  const ModelParams p = zero_model(CellKind::gru, 3, 2);
  CHECK_THROWS_AS(forward(BatchInput{}, p), std::logic_error);
}

TEST_CASE("padding and batch composition never change a sequence's probabilities") {
  for (auto kind : {CellKind::gru, CellKind::lstm})
    for (std::size_t layers : {1u, 2u}) {
      const ModelParams p = random_model(kind, 6, 4, layers, 17);
      const BatchInput batch = random_batch(8, 7, 6, 99);
      const Matrix together = predict_probs(batch, p);
      for (std::size_t i = 0; i < batch.batch_size(); ++i) {
        const auto seq = batch.sequence(i);
        const Matrix alone = predict_probs(make_batch(std::span(&seq, 1)), p);
        // Same summation order either way, so the match is exact.
        CHECK(alone(0, 0) == together(i, 0));
        CHECK(alone(0, 1) == together(i, 1));
      }
    }
}

TEST_CASE("analytic gradients match finite differences") {
  // V=7, H=5, T=4, B=3 with padding; both cells, both depths.
  for (auto kind : {CellKind::gru, CellKind::lstm})
    for (std::size_t layers : {1u, 2u})
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(seed);
        CAPTURE(layers);
        const ModelParams p = random_model(kind, 7, 5, layers, seed);
        const BatchInput batch = random_batch(3, 4, 7, seed + 50);
        const auto check = testing::check_gradients(p, batch);
        CHECK(check.components == p.parameter_count());
        CHECK(check.max_relative_error < 1e-5);
      }
}

TEST_CASE("head bias gradient vanishes when predictions equal the targets") {
  // A single-class batch whose head is saturated toward that class.
  ModelParams p = zero_model(CellKind::gru, 3, 2);
  p.head.bias(0, 1) = 100.0;
  p.head.bias(0, 0) = -100.0;
  const std::vector<TokenId> a = {1, 2}, b = {2};
  const std::vector<std::span<const TokenId>> seqs = {a, b};
  const BatchInput batch = make_batch(seqs, std::vector<int>{1, 1});
  const ForwardResult fwd = forward(batch, p);
  const ModelParams g = backward(fwd.tape, cross_entropy_logit_grad(fwd.probs, batch.labels));
  CHECK(std::abs(g.head.bias(0, 0)) <= 1e-12);
  CHECK(std::abs(g.head.bias(0, 1)) <= 1e-12);
}

TEST_CASE("padding steps contribute no gradient") {
  const ModelParams p = random_model(CellKind::lstm, 5, 3, 2, 8);
  BatchInput batch = random_batch(4, 6, 5, 21);
  const auto grads_of = [&](const BatchInput& b) {
    const ForwardResult fwd = forward(b, p);
    return backward(fwd.tape, cross_entropy_logit_grad(fwd.probs, b.labels));
  };
  const ModelParams g1 = grads_of(batch);
  for (std::size_t i = 0; i < batch.batch_size(); ++i)
    for (std::size_t t = batch.lengths[i]; t < batch.max_length; ++t) batch.ids[i * batch.max_length + t] = 4;
  const ModelParams g2 = grads_of(batch);
  auto t1 = g1.tensors();
  auto t2 = g2.tensors();
  for (std::size_t k = 0; k < t1.size(); ++k) CHECK(*t1[k] == *t2[k]);
}

TEST_CASE("init_params") {
  SUBCASE("deterministic per seed") {
    const auto a = init_params(CellKind::lstm, 9, 4, 2, 5);
    const auto b = init_params(CellKind::lstm, 9, 4, 2, 5);
    auto ta = a.tensors();
    auto tb = b.tensors();
    for (std::size_t k = 0; k < ta.size(); ++k) CHECK(*ta[k] == *tb[k]);
    const auto c = init_params(CellKind::lstm, 9, 4, 2, 6);
    CHECK_FALSE(*c.tensors()[0] == *ta[0]);
  }
  SUBCASE("glorot bounds and zero biases") {
    const auto p = init_params(CellKind::gru, 36, 32, 1, 1);
    const double w_limit = std::sqrt(6.0 / (36 + 32));
    const double u_limit = std::sqrt(6.0 / (32 + 32));
    for (const auto& w : p.layers[0].input_weights)
      for (double v : w.values()) CHECK(std::abs(v) <= w_limit);
    for (const auto& u : p.layers[0].recurrent_weights)
      for (double v : u.values()) CHECK(std::abs(v) <= u_limit);
    for (const auto& b : p.layers[0].biases) CHECK(b == Matrix(1, 32));
    CHECK(p.head.bias == Matrix(1, 2));
  }
  SUBCASE("parameter counts") {
    const auto gru = init_params(CellKind::gru, 36, 32, 1, 0);
    CHECK(gru.recurrent_parameter_count() == 6624);
    CHECK(gru.parameter_count() == 6624 + 66);
    std::size_t counted = 0;
    for (const Matrix* m : gru.tensors()) counted += m->size();
    CHECK(counted == gru.parameter_count());
    for (std::size_t layers : {1u, 2u}) {
      const auto g = init_params(CellKind::gru, 11, 7, layers, 0);
      const auto l = init_params(CellKind::lstm, 11, 7, layers, 0);
      CHECK(3 * l.recurrent_parameter_count() == 4 * g.recurrent_parameter_count());
    }
  }
  SUBCASE("invalid shapes") {
    CHECK_THROWS_AS(init_params(CellKind::gru, 1, 4, 1, 0), ConfigError);
    CHECK_THROWS_AS(init_params(CellKind::gru, 4, 0, 1, 0), ConfigError);
    CHECK_THROWS_AS(init_params(CellKind::gru, 4, 4, 3, 0), ConfigError);
  }
}

TEST_CASE("gru hidden state stays inside (-1, 1)") {
  const ModelParams p = random_model(CellKind::gru, 5, 6, 1, 3);
  Rng rng(12);
  Matrix h(1, 6);
  for (int t = 0; t < 200; ++t) {
    h = gru_step(p.layers[0], one_hot_rows(std::vector<TokenId>{static_cast<TokenId>(rng.below(5))}, 5), h);
    for (double v : h.values()) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("cell kind names") {
  CHECK(parse_cell_kind("GRU") == CellKind::gru);
  CHECK(parse_cell_kind("lstm") == CellKind::lstm);
  CHECK(to_string(CellKind::lstm) == "lstm");
  CHECK_THROWS_AS(parse_cell_kind("rnn"), ConfigError);
}
