// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "procrnn/errors.hpp"
#include "procrnn/optim.hpp"
#include "procrnn/training.hpp"

using namespace procrnn;

namespace {

std::vector<Matrix*> ptrs(std::vector<Matrix>& ms) {
  std::vector<Matrix*> out;
  for (auto& m : ms) out.push_back(&m);
  return out;
}

std::vector<const Matrix*> cptrs(const std::vector<Matrix>& ms) {
  std::vector<const Matrix*> out;
  for (const auto& m : ms) out.push_back(&m);
  return out;
}

}  // namespace

TEST_CASE("cross entropy examples") {
  CHECK(cross_entropy(Matrix::from_rows({{0.0, 1.0}}), std::vector<int>{1}) == 0.0);
  CHECK(std::abs(cross_entropy(Matrix::from_rows({{0.5, 0.5}}), std::vector<int>{0}) - std::log(2.0)) < 1e-15);
  const double expected = -(std::log(0.9) + std::log(0.8)) / 2.0;
  CHECK(std::abs(cross_entropy(Matrix::from_rows({{0.1, 0.9}, {0.2, 0.8}}), std::vector<int>{1, 1}) - expected) <
        1e-15);
  CHECK(std::abs(expected - 0.16425) < 1e-5);
  // Floor keeps the loss finite.
  CHECK(std::abs(cross_entropy(Matrix::from_rows({{1.0, 0.0}}), std::vector<int>{1}) + std::log(1e-12)) < 1e-9);
}

TEST_CASE("clip by global norm") {
  SUBCASE("scales down to the threshold") {
    std::vector<Matrix> g = {Matrix::from_rows({{6.0, 0.0}}), Matrix::from_rows({{8.0}})};
    const std::vector<Matrix> before = g;
    CHECK(clip_by_global_norm(ptrs(g), 5.0) == 10.0);
    CHECK(g[0](0, 0) == 3.0);
    CHECK(g[1](0, 0) == 4.0);
    CHECK(std::abs(global_norm(cptrs(g)) - 5.0) <= 1e-12);
    // Cosine similarity with the original direction.
    double dot = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
      for (std::size_t i = 0; i < g[k].size(); ++i) dot += g[k].values()[i] * before[k].values()[i];
    CHECK(std::abs(dot / (global_norm(cptrs(g)) * global_norm(cptrs(before))) - 1.0) <= 1e-12);
  }
  SUBCASE("small gradients are untouched") {
    std::vector<Matrix> g = {Matrix::from_rows({{0.3, 1.7}}), Matrix::from_rows({{2.1}, {1.1}})};
    const std::vector<Matrix> before = g;
    clip_by_global_norm(ptrs(g), 5.0);
    CHECK(g == before);
  }
  SUBCASE("never increases the norm") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Matrix> g = {seeded_uniform(3, 3, -5.0, 5.0, rng)};
      const double before = global_norm(cptrs(g));
      clip_by_global_norm(ptrs(g), rng.uniform(0.1, 10.0));
      CHECK(global_norm(cptrs(g)) <= before * (1 + 1e-15));
    }
  }
  SUBCASE("non-positive threshold is rejected") {
    std::vector<Matrix> g = {Matrix(1, 1, 1.0)};
    CHECK_THROWS_AS(clip_by_global_norm(ptrs(g), 0.0), ConfigError);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters alone") {
    std::vector<Matrix> theta = {Matrix::from_rows({{1.0, -2.0}})};
    const std::vector<Matrix> g = {Matrix(1, 2)};
    AdamState adam(cptrs(theta), AdamConfig{});
    adam.update(ptrs(theta), cptrs(g));
    CHECK(theta[0] == Matrix::from_rows({{1.0, -2.0}}));
    CHECK(adam.step() == 1);
  }
  SUBCASE("first step closed form") {
    std::vector<Matrix> theta = {Matrix(1, 1, 1.0)};
    const std::vector<Matrix> g = {Matrix(1, 1, 1.0)};
    AdamState adam(cptrs(theta), AdamConfig{});
    adam.update(ptrs(theta), cptrs(g));
    CHECK(std::abs(theta[0](0, 0) - (1.0 - 0.001 / (1.0 + 1e-8))) <= 1e-15);
  }
  SUBCASE("descends a parabola") {
    std::vector<Matrix> theta = {Matrix(1, 1, 3.0)};
    AdamState adam(cptrs(theta), AdamConfig{.learning_rate = 0.1});
    for (int i = 0; i < 200; ++i) {
      const std::vector<Matrix> g = {Matrix(1, 1, 2.0 * theta[0](0, 0))};
      adam.update(ptrs(theta), cptrs(g));
    }
    CHECK(std::abs(theta[0](0, 0)) < 0.5);
  }
  SUBCASE("negating the gradient negates the step") {
    Rng rng(3);
    const Matrix start = seeded_uniform(2, 3, -1.0, 1.0, rng);
    const Matrix grad = seeded_uniform(2, 3, -1.0, 1.0, rng);
    std::vector<Matrix> a = {start}, b = {start};
    AdamState sa(cptrs(a), AdamConfig{}), sb(cptrs(b), AdamConfig{});
    sa.update(ptrs(a), cptrs(std::vector<Matrix>{grad}));
    sb.update(ptrs(b), cptrs(std::vector<Matrix>{scale(grad, -1.0)}));
    for (std::size_t i = 0; i < start.size(); ++i) {
      const double da = a[0].values()[i] - start.values()[i];
      const double db = b[0].values()[i] - start.values()[i];
      CHECK(std::abs(da + db) <= 1e-12);
    }
  }
  SUBCASE("moments stay finite and v non-negative") {
    std::vector<Matrix> theta = {Matrix(2, 2, 0.5)};
    AdamState adam(cptrs(theta), AdamConfig{});
    Rng rng(8);
    for (int i = 0; i < 20; ++i) adam.update(ptrs(theta), cptrs(std::vector<Matrix>{seeded_uniform(2, 2, -3, 3, rng)}));
    for (const auto& v : adam.second_moment())
      for (double x : v.values()) CHECK(x >= 0.0);
    for (const auto& m : adam.first_moment()) CHECK(all_finite(m));
  }
}

TEST_CASE("one small adam step lowers the batch loss") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelParams p = testing::random_model(CellKind::gru, 6, 4, 1, seed);
    const BatchInput batch = testing::random_batch(5, 5, 6, seed + 300);
    const BatchGradients g = batch_gradients(p, batch);
    AdamState adam(p, AdamConfig{.learning_rate = 1e-4});
    adam.update(p, g.grads);
    CHECK(testing::batch_loss(p, batch) < g.loss);
  }
}
