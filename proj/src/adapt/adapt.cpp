// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "olaf/adapt.hpp"
#include "olaf/core/error.hpp"

namespace olaf::adapt {

namespace {

struct KernelDims {
  int64_t out, in, kh, kw;
};

KernelDims dims_of(const WeightTensor &w) {
  OLAF_CHECK(w.kernel.rank() == 4, ShapeError,
             "adapt: kernel must be [out, in, kh, kw], got rank %d",
             static_cast<int>(w.kernel.rank()));
  const auto &s = w.kernel.shape();
  OLAF_CHECK(s[1] >= 1, ShapeError, "adapt: kernel has no input channels");
  return {s[0], s[1], s[2], s[3]};
}

WeightTensor widen(const WeightTensor &w, int64_t k_new) {
  OLAF_CHECK(k_new >= 1, ConfigError, "adapt: k_new must be >= 1, got %lld",
             static_cast<long long>(k_new));
  const KernelDims d = dims_of(w);
  WeightTensor out;
  out.kernel = Tensor({d.out, d.in + k_new, d.kh, d.kw});
  out.bias = w.bias;
  return out;
}

double *slice(Tensor &kernel, int64_t o, int64_t c) {
  const auto &s = kernel.shape();
  return kernel.data() + ((o * s[1] + c) * s[2] * s[3]);
}

const double *slice(const Tensor &kernel, int64_t o, int64_t c) {
  const auto &s = kernel.shape();
  return kernel.data() + ((o * s[1] + c) * s[2] * s[3]);
}

void fill_kaiming(Tensor &kernel, SplitMix64 &rng) {
  const auto &s = kernel.shape();
  const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (int64_t i = 0; i < kernel.numel(); ++i)
    kernel[i] = rng.normal(0.0, stddev);
}

} // namespace

WeightTensor adapt_olaf(const WeightTensor &w, int64_t k_new,
                        bool allow_any_in) {
  const KernelDims d = dims_of(w);
  OLAF_CHECK(allow_any_in || d.in == 3, ConfigError,
             "adapt_olaf: source has %lld input channels, expected 3",
             static_cast<long long>(d.in));
  WeightTensor out = widen(w, k_new);
  const int64_t hw = d.kh * d.kw;
  for (int64_t o = 0; o < d.out; ++o) {
    for (int64_t c = 0; c < d.in; ++c)
      std::copy_n(slice(w.kernel, o, c), hw, slice(out.kernel, o, c));
    for (int64_t p = 0; p < hw; ++p) {
      double mean = 0.0;
      for (int64_t c = 0; c < d.in; ++c) mean += slice(w.kernel, o, c)[p];
      mean /= static_cast<double>(d.in);
      for (int64_t j = 0; j < k_new; ++j)
        slice(out.kernel, o, d.in + j)[p] = mean;
    }
  }
  return out;
}

WeightTensor adapt_random5(const WeightTensor &w, int64_t k_new,
                           uint64_t seed) {
  WeightTensor out = widen(w, k_new);
  SplitMix64 rng(seed);
  fill_kaiming(out.kernel, rng);
  return out;
}

WeightTensor adapt_random2(const WeightTensor &w, int64_t k_new,
                           uint64_t seed) {
  const KernelDims d = dims_of(w);
  WeightTensor out = widen(w, k_new);
  const int64_t hw = d.kh * d.kw;
  SplitMix64 rng(seed);
  const double fan_in = static_cast<double>((d.in + k_new) * hw);
  const double stddev = std::sqrt(2.0 / fan_in);
  for (int64_t o = 0; o < d.out; ++o) {
    for (int64_t c = 0; c < d.in; ++c)
      std::copy_n(slice(w.kernel, o, c), hw, slice(out.kernel, o, c));
    for (int64_t j = 0; j < k_new; ++j) {
      double *dst = slice(out.kernel, o, d.in + j);
      for (int64_t p = 0; p < hw; ++p) dst[p] = rng.normal(0.0, stddev);
    }
  }
  return out;
}

WeightTensor adapt_average_rgb5(const WeightTensor &w, int64_t k_new) {
  const KernelDims d = dims_of(w);
  OLAF_CHECK(d.in == 3, ConfigError,
             "adapt_average_rgb5: source has %lld input channels, expected 3",
             static_cast<long long>(d.in));
  WeightTensor out = widen(w, k_new);
  const int64_t hw = d.kh * d.kw;
  for (int64_t o = 0; o < d.out; ++o)
    for (int64_t p = 0; p < hw; ++p) {
      double mean = 0.0;
      for (int64_t c = 0; c < 3; ++c) mean += slice(w.kernel, o, c)[p];
      mean /= 3.0;
      for (int64_t c = 0; c < 3 + k_new; ++c)
        slice(out.kernel, o, c)[p] = mean;
    }
  return out;
}

SchemeKind parse_scheme(const std::string &name) {
  if (name == "olaf-average") return SchemeKind::olaf_average;
  if (name == "random-5") return SchemeKind::random5;
  if (name == "random-2") return SchemeKind::random2;
  if (name == "average-rgb-5") return SchemeKind::average_rgb5;
  if (name == "adapt-n-freeze") return SchemeKind::adapt_n_freeze;
  throw ConfigError(strfmt("unknown adaptation scheme '%s'", name.c_str()));
}

std::string scheme_name(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::olaf_average: return "olaf-average";
    case SchemeKind::random5: return "random-5";
    case SchemeKind::random2: return "random-2";
    case SchemeKind::average_rgb5: return "average-rgb-5";
    case SchemeKind::adapt_n_freeze: return "adapt-n-freeze";
  }
  return "unknown";
}

WeightTensor apply_scheme(SchemeKind kind, const WeightTensor &w,
                          int64_t k_new, uint64_t seed) {
  switch (kind) {
    case SchemeKind::olaf_average: return adapt_olaf(w, k_new);
    case SchemeKind::random5: return adapt_random5(w, k_new, seed);
    case SchemeKind::random2: return adapt_random2(w, k_new, seed);
    case SchemeKind::average_rgb5: return adapt_average_rgb5(w, k_new);
    case SchemeKind::adapt_n_freeze: break;
  }
  throw ConfigError(
      "adapt-n-freeze reshapes the network; use build_adapt_n_freeze");
}

nlohmann::json provenance_record(SchemeKind kind, uint64_t seed,
                                 int64_t k_new, const WeightTensor &source) {
  uint64_t sum = fnv1a64(source.kernel.data(),
                         static_cast<size_t>(source.kernel.numel()) *
                             sizeof(double));
  if (source.bias.defined())
    sum ^= fnv1a64(source.bias.data(),
                   static_cast<size_t>(source.bias.numel()) * sizeof(double));
  return nlohmann::json{{"scheme", scheme_name(kind)},
                        {"seed", seed},
                        {"k_new", k_new},
                        {"source_checksum", strfmt("%016llx",
                                                   static_cast<unsigned long long>(sum))}};
}

InputAdapter::InputAdapter(int64_t k_new, int64_t intermediate,
                           SplitMix64 &rng)
    : expand(3 + k_new, intermediate, 3, 1, 1, 1, true, rng),
      squeeze(intermediate, 3, 1, 1, 0, 1, true, rng) {
  register_module("expand", &expand);
  register_module("squeeze", &squeeze);
}

autograd::Variable InputAdapter::forward(const autograd::Variable &x) const {
  return squeeze.forward(expand.forward(x));
}

void AdaptNFreeze::set_epoch(int64_t epoch) {
  adapter->set_trainable(true);
  base->set_trainable(stage(epoch) == 2);
}

AdaptNFreeze build_adapt_n_freeze(nn::Module &base, int64_t k_new,
                                  int64_t n_warm, int64_t intermediate,
                                  uint64_t seed) {
  OLAF_CHECK(k_new >= 1, ConfigError,
             "build_adapt_n_freeze: k_new must be >= 1");
  if (intermediate <= 0) intermediate = 3 + k_new;
  SplitMix64 rng(seed);
  AdaptNFreeze plan;
  plan.adapter = std::make_unique<InputAdapter>(k_new, intermediate, rng);
  plan.base = &base;
  plan.n_warm = n_warm;
  plan.set_epoch(0);
  return plan;
}

double warmup_multiplier(int64_t epoch, const WarmupSchedule &sched) {
  OLAF_CHECK(epoch >= 0, ConfigError, "warmup_multiplier: negative epoch");
  if (sched.freeze_backbone || sched.n_warm <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch + 1) /
                           static_cast<double>(sched.n_warm));
}

std::vector<double> multiplier_table(const WarmupSchedule &sched,
                                     int64_t epochs) {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(epochs));
  for (int64_t e = 0; e < epochs; ++e)
    out.push_back(warmup_multiplier(e, sched));
  return out;
}

} // namespace olaf::adapt
