// SPDX-License-Identifier: Apache-2.0
#include "procrnn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "procrnn/errors.hpp"

namespace procrnn {

namespace {

void check_labels(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows() != labels.size())
    throw std::logic_error("cross_entropy: label count differs from batch size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
      throw std::logic_error("cross_entropy: label out of range");
}

}  // namespace

double cross_entropy(const Matrix& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    total -= std::log(std::max(probs(i, static_cast<std::size_t>(labels[i])), kProbabilityFloor));
  return total / static_cast<double>(labels.size());
}

Matrix cross_entropy_logit_grad(const Matrix& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  Matrix g = probs;
  const double inv = 1.0 / static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    g(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    for (double& v : g.row(i)) v *= inv;
  }
  return g;
}

double global_norm(std::span<const Matrix* const> tensors) {
  double sq = 0.0;
  for (const Matrix* t : tensors) sq += sum_of_squares(*t);
  return std::sqrt(sq);
}

double global_norm(const ModelParams& grads) {
  const auto t = grads.tensors();
  return global_norm(std::span<const Matrix* const>(t));
}

double clip_by_global_norm(std::span<Matrix* const> tensors, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip norm must be positive");
  std::vector<const Matrix*> view(tensors.begin(), tensors.end());
  const double norm = global_norm(std::span<const Matrix* const>(view));
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (Matrix* t : tensors)
      for (double& v : t->values()) v *= s;
  }
  return norm;
}

double clip_by_global_norm(ModelParams& grads, double max_norm) {
  const auto t = grads.tensors();
  return clip_by_global_norm(std::span<Matrix* const>(t), max_norm);
}

AdamState::AdamState(std::span<const Matrix* const> shapes, AdamConfig config) : config_(config) {
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  for (const Matrix* s : shapes) {
    m_.emplace_back(s->rows(), s->cols());
    v_.emplace_back(s->rows(), s->cols());
  }
}

AdamState::AdamState(const ModelParams& like, AdamConfig config)
    : AdamState(std::span<const Matrix* const>(like.tensors()), config) {}

void AdamState::update(std::span<Matrix* const> params, std::span<const Matrix* const> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::logic_error("adam: parameter list does not match optimizer state");
  ++step_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double t = static_cast<double>(step_);
  const double correction1 = 1.0 - std::pow(b1, t);
  const double correction2 = 1.0 - std::pow(b2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k]->values();
    auto g = grads[k]->values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    if (theta.size() != m.size() || g.size() != m.size())
      throw std::logic_error("adam: tensor shape mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

void AdamState::update(ModelParams& params, const ModelParams& grads) {
  const auto p = params.tensors();
  const auto g = grads.tensors();
  update(std::span<Matrix* const>(p), std::span<const Matrix* const>(g));
}

}  // namespace procrnn
