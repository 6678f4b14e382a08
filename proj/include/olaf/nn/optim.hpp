// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "olaf/core/autograd.hpp"

namespace olaf::nn {

using autograd::Variable;

/// Gradient-descent drivers. Parameters whose gradient is undefined or
/// whose requires_grad flag is off are skipped entirely, so frozen
/// subtrees keep their optimizer state untouched until unfrozen.
class Optimizer {
public:
  virtual ~Optimizer() = default;

  /// Applies one update. lr_scale multiplies the learning rate for this
  /// step only; warm-up schedules pass their epoch multiplier here.
  virtual void step(double lr_scale = 1.0) = 0;

  void zero_grad();
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

protected:
  Optimizer(std::vector<Variable> params, double lr);

  std::vector<Variable> params_;
  double lr_;
};

class Sgd : public Optimizer {
public:
  explicit Sgd(std::vector<Variable> params, double lr = 0.01,
               double momentum = 0.0);

  void step(double lr_scale = 1.0) override;

private:
  double momentum_;
  std::vector<Tensor> velocity_;
};

class Adam : public Optimizer {
public:
  explicit Adam(std::vector<Variable> params, double lr = 1e-3,
                double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(double lr_scale = 1.0) override;

private:
  double beta1_, beta2_, eps_;
  std::vector<Tensor> m_, v_;
  std::vector<int64_t> steps_;
};

} // namespace olaf::nn
