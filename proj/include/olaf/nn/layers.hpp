// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "olaf/core/rng.hpp"
#include "olaf/nn/module.hpp"

namespace olaf::nn {

/// 2-D convolution with Kaiming-normal weight init drawn from the given
/// generator. Weights are public: input-layer adaptation rewrites them.
class Conv2d : public Module {
public:
  Conv2d(int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride,
         int64_t pad, int64_t dil, bool with_bias, SplitMix64 &rng);

  Variable forward(const Variable &x) const;

  int64_t in_channels() const { return in_ch_; }
  int64_t out_channels() const { return out_ch_; }
  int64_t kernel() const { return kernel_; }

  Variable weight; // [out_ch, in_ch, k, k]
  Variable bias;   // [out_ch], undefined when constructed without bias

private:
  int64_t in_ch_, out_ch_, kernel_, stride_, pad_, dil_;
};

/// Batch normalization over NCHW activations with learnable affine and
/// running statistics that update only in training mode.
class BatchNorm2d : public Module {
public:
  explicit BatchNorm2d(int64_t channels, double momentum = 0.1,
                       double eps = 1e-5);

  Variable forward(const Variable &x);

  Variable gamma, beta;
  Tensor running_mean, running_var;

private:
  int64_t channels_;
  double momentum_, eps_;
};

/// Fully connected layer over the last axis of a 2-D input.
class Linear : public Module {
public:
  Linear(int64_t in_features, int64_t out_features, SplitMix64 &rng);

  Variable forward(const Variable &x) const;

  Variable weight; // [out_features, in_features]
  Variable bias;   // [out_features]

private:
  int64_t in_features_, out_features_;
};

/// Layer normalization over the last axis.
class LayerNorm : public Module {
public:
  explicit LayerNorm(int64_t dim, double eps = 1e-5);

  Variable forward(const Variable &x) const;

  Variable gamma, beta;

private:
  double eps_;
};

} // namespace olaf::nn
