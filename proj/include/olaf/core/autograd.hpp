// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "olaf/core/tensor.hpp"

namespace olaf::autograd {

/// One vertex of the reverse-mode tape. Holds the forward value, the
/// accumulated gradient, and a closure that pushes this node's gradient
/// into its parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node &)> backward_fn;

  void ensure_grad() {
    if (!grad.defined()) grad = Tensor(value.shape());
  }
};

/// Handle to a tape node. Cheap to copy; an undefined Variable marks an
/// optional input (e.g. a convolution without bias).
class Variable {
public:
  Variable() = default;
  explicit Variable(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor &value() const { return node_->value; }
  Tensor &value() { return node_->value; }
  const Tensor &grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape &shape() const { return node_->value.shape(); }

  void zero_grad() {
    if (node_ && node_->grad.defined()) node_->grad.fill(0.0);
  }

  /// Reverse pass from a scalar output: seeds d(out)/d(out) = 1 and walks
  /// the tape in reverse topological order.
  void backward() const;

  std::shared_ptr<Node> node() const { return node_; }
  static Variable from_node(std::shared_ptr<Node> n);

private:
  std::shared_ptr<Node> node_;
};

/// While a guard is alive, new ops record no tape (forward values only).
/// Used by evaluation loops.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard &) = delete;
  NoGradGuard &operator=(const NoGradGuard &) = delete;
};

bool grad_enabled();

enum class UpsampleMode { nearest, bilinear };

// ---- Differentiable ops ----------------------------------------------------

Variable conv2d(const Variable &x, const Variable &w, const Variable &bias,
                int64_t stride = 1, int64_t pad = 0, int64_t dil = 1);

/// Batch normalisation over NCHW. In training mode the op normalises with
/// batch statistics and updates running_mean/var in place with the given
/// momentum; in inference mode it normalises with the running statistics.
Variable batch_norm2d(const Variable &x, const Variable &gamma,
                      const Variable &beta, Tensor &running_mean,
                      Tensor &running_var, bool training,
                      double momentum = 0.1, double eps = 1e-5);

Variable relu(const Variable &x);
Variable maxpool2d(const Variable &x, int64_t k);
Variable avgpool2d(const Variable &x, int64_t k);
Variable upsample2d(const Variable &x, int64_t factor, UpsampleMode mode);
Variable concat_channels(const std::vector<Variable> &xs);
Variable add(const Variable &a, const Variable &b);
Variable mul(const Variable &a, const Variable &b);
Variable mul_scalar(const Variable &a, double s);
Variable sum(const Variable &x);
/// [n,c,h,w] -> [n,c,1,1] spatial mean.
Variable global_avg_pool(const Variable &x);
/// [n,c,1,1] -> [n,c,h,w] by replication.
Variable broadcast_spatial(const Variable &x, int64_t h, int64_t w);

/// x:[rows,in] · w:[out,in]ᵀ + b -> [rows,out].
Variable linear(const Variable &x, const Variable &w, const Variable &bias);
Variable matmul(const Variable &a, const Variable &b);
/// Batched matmul [B,m,k]·[B,k,n] -> [B,m,n].
Variable bmm(const Variable &a, const Variable &b);
Variable reshape(const Variable &x, Shape shape);
/// Generic dimension permutation; perm[i] names the source axis of output
/// axis i.
Variable permute(const Variable &x, std::vector<int> perm);
Variable softmax_lastdim(const Variable &x);
Variable layer_norm(const Variable &x, const Variable &gamma,
                    const Variable &beta, double eps = 1e-5);

/// Mean pixelwise softmax cross-entropy. targets holds class indices with
/// shape [n,h,w]; returns a scalar.
Variable cross_entropy_logits(const Variable &logits, const Tensor &targets);

} // namespace olaf::autograd
