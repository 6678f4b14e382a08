// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "olaf/core/autograd.hpp"

namespace olaf::nn {

using autograd::Variable;

/// Base class for layers and models. Subclasses register parameters,
/// buffers, and child modules in construction order; the dotted names
/// that fall out are the stable addressing scheme shared by optimizers,
/// checkpoints, and weight-surgery code.
class Module {
public:
  Module() = default;
  Module(const Module &) = delete;
  Module &operator=(const Module &) = delete;
  virtual ~Module() = default;

  /// All parameters reachable from this module, depth-first, with dotted
  /// path names ("encoder.block1.conv.weight").
  std::vector<std::pair<std::string, Variable>> named_parameters() const;
  std::vector<Variable> parameters() const;

  /// Non-trainable state (running statistics and the like), same naming.
  std::vector<std::pair<std::string, Tensor *>> named_buffers();

  void zero_grad();

  /// Switches this module and every child between training and eval
  /// behaviour (batch-norm statistics, warm-up bookkeeping, ...).
  void set_training(bool on);
  bool training() const { return training_; }

  /// Toggles requires_grad on every parameter of this subtree.
  void set_trainable(bool on);

protected:
  Variable &register_parameter(const std::string &name, Variable v);
  Tensor &register_buffer(const std::string &name, Tensor *t);
  void register_module(const std::string &name, Module *m);

private:
  void collect_parameters(
      const std::string &prefix,
      std::vector<std::pair<std::string, Variable>> &out) const;
  void collect_buffers(const std::string &prefix,
                       std::vector<std::pair<std::string, Tensor *>> &out);

  std::vector<std::pair<std::string, Variable>> params_;
  std::vector<std::pair<std::string, Tensor *>> buffers_;
  std::vector<std::pair<std::string, Module *>> children_;
  bool training_ = true;
};

} // namespace olaf::nn
