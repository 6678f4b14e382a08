// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include "olaf/nn/layers.hpp"

#include <cmath>

#include "olaf/core/error.hpp"

namespace olaf::nn {

using namespace autograd;

namespace {

Tensor kaiming_normal(Shape shape, int64_t fan_in, SplitMix64 &rng) {
  Tensor t(std::move(shape));
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, stddev);
  return t;
}

} // namespace

Conv2d::Conv2d(int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride,
               int64_t pad, int64_t dil, bool with_bias, SplitMix64 &rng)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride),
      pad_(pad), dil_(dil) {
  OLAF_CHECK(in_ch > 0 && out_ch > 0 && kernel > 0 && stride > 0 && dil > 0,
             ConfigError, "Conv2d: bad geometry %lldx%lld k%lld s%lld d%lld",
             static_cast<long long>(in_ch), static_cast<long long>(out_ch),
             static_cast<long long>(kernel), static_cast<long long>(stride),
             static_cast<long long>(dil));
  weight = register_parameter(
      "weight", Variable(kaiming_normal({out_ch, in_ch, kernel, kernel},
                                        in_ch * kernel * kernel, rng),
                         true));
  if (with_bias)
    bias = register_parameter("bias", Variable(Tensor({out_ch}), true));
}

Variable Conv2d::forward(const Variable &x) const {
  return conv2d(x, weight, bias, stride_, pad_, dil_);
}

BatchNorm2d::BatchNorm2d(int64_t channels, double momentum, double eps)
    : running_mean(Tensor({channels})),
      running_var(Tensor({channels}, 1.0)), channels_(channels),
      momentum_(momentum), eps_(eps) {
  gamma = register_parameter("gamma", Variable(Tensor({channels}, 1.0), true));
  beta = register_parameter("beta", Variable(Tensor({channels}), true));
  register_buffer("running_mean", &running_mean);
  register_buffer("running_var", &running_var);
}

Variable BatchNorm2d::forward(const Variable &x) {
  OLAF_CHECK(x.defined() && x.shape().size() == 4 && x.shape()[1] == channels_,
             ShapeError, "BatchNorm2d: expected NCHW with %lld channels",
             static_cast<long long>(channels_));
  return batch_norm2d(x, gamma, beta, running_mean, running_var, training(),
                      momentum_, eps_);
}

Linear::Linear(int64_t in_features, int64_t out_features, SplitMix64 &rng)
    : in_features_(in_features), out_features_(out_features) {
  weight = register_parameter(
      "weight", Variable(kaiming_normal({out_features, in_features},
                                        in_features, rng),
                         true));
  bias = register_parameter("bias", Variable(Tensor({out_features}), true));
}

Variable Linear::forward(const Variable &x) const {
  return linear(x, weight, bias);
}

LayerNorm::LayerNorm(int64_t dim, double eps) : eps_(eps) {
  gamma = register_parameter("gamma", Variable(Tensor({dim}, 1.0), true));
  beta = register_parameter("beta", Variable(Tensor({dim}), true));
}

Variable LayerNorm::forward(const Variable &x) const {
  return layer_norm(x, gamma, beta, eps_);
}

} // namespace olaf::nn
