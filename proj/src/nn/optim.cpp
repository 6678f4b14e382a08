// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include "olaf/nn/optim.hpp"

#include <cmath>

#include "olaf/core/error.hpp"

namespace olaf::nn {

Optimizer::Optimizer(std::vector<Variable> params, double lr)
    : params_(std::move(params)), lr_(lr) {
  for (const auto &p : params_)
    OLAF_CHECK(p.defined(), ConfigError, "optimizer given undefined parameter");
}

void Optimizer::zero_grad() {
  for (auto &p : params_) p.zero_grad();
}

Sgd::Sgd(std::vector<Variable> params, double lr, double momentum)
    : Optimizer(std::move(params), lr), momentum_(momentum),
      velocity_(params_.size()) {}

void Sgd::step(double lr_scale) {
  const double lr = lr_ * lr_scale;
  for (size_t i = 0; i < params_.size(); ++i) {
    Variable &p = params_[i];
    if (!p.requires_grad() || !p.grad().defined()) continue;
    Tensor &value = p.value();
    const Tensor &grad = p.grad();
    if (momentum_ != 0.0) {
      if (!velocity_[i].defined()) velocity_[i] = Tensor(value.shape());
      Tensor &vel = velocity_[i];
      for (int64_t k = 0; k < value.numel(); ++k) {
        vel[k] = momentum_ * vel[k] + grad[k];
        value[k] -= lr * vel[k];
      }
    } else {
      for (int64_t k = 0; k < value.numel(); ++k) value[k] -= lr * grad[k];
    }
  }
}

Adam::Adam(std::vector<Variable> params, double lr, double beta1, double beta2,
           double eps)
    : Optimizer(std::move(params), lr), beta1_(beta1), beta2_(beta2),
      eps_(eps), m_(params_.size()), v_(params_.size()),
      steps_(params_.size(), 0) {}

void Adam::step(double lr_scale) {
  const double lr = lr_ * lr_scale;
  for (size_t i = 0; i < params_.size(); ++i) {
    Variable &p = params_[i];
    if (!p.requires_grad() || !p.grad().defined()) continue;
    Tensor &value = p.value();
    const Tensor &grad = p.grad();
    if (!m_[i].defined()) {
      m_[i] = Tensor(value.shape());
      v_[i] = Tensor(value.shape());
    }
    // Bias correction counts steps per parameter, so tensors unfrozen
    // late still start from a properly corrected first moment.
    const int64_t t = ++steps_[i];
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
    Tensor &m = m_[i];
    Tensor &v = v_[i];
    for (int64_t k = 0; k < value.numel(); ++k) {
      const double g = grad[k];
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g;
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      value[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

} // namespace olaf::nn
