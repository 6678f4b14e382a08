// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "olaf/core/rng.hpp"
#include "olaf/core/tensor.hpp"
#include "olaf/nn/layers.hpp"
#include "olaf/nn/module.hpp"

namespace olaf::adapt {

/// First-layer filters under surgery: kernel [out, in, kh, kw] and an
/// optional bias that every scheme passes through untouched.
struct WeightTensor {
  Tensor kernel;
  Tensor bias; // undefined when the layer has none
};

/// Expands 3-channel filters to 3 + k_new: RGB slices copied verbatim, each
/// new slice set to the per-position mean of the RGB slices. With
/// allow_any_in the source may have any channel count and the new slices
/// average all of them; otherwise in_ch != 3 is a ConfigError.
WeightTensor adapt_olaf(const WeightTensor &w, int64_t k_new,
                        bool allow_any_in = false);

/// Re-initializes every input slice (old and new) from a Kaiming-normal
/// draw seeded by `seed`.
WeightTensor adapt_random5(const WeightTensor &w, int64_t k_new,
                           uint64_t seed);

/// Keeps RGB slices bitwise; draws only the new slices randomly.
WeightTensor adapt_random2(const WeightTensor &w, int64_t k_new,
                           uint64_t seed);

/// Sets every one of the 3 + k_new slices to the RGB mean slice.
WeightTensor adapt_average_rgb5(const WeightTensor &w, int64_t k_new);

enum class SchemeKind {
  olaf_average,
  random5,
  random2,
  average_rgb5,
  adapt_n_freeze,
};

SchemeKind parse_scheme(const std::string &name); // throws ConfigError
std::string scheme_name(SchemeKind kind);

/// Dispatches the four weight-surgery schemes. adapt-n-freeze reshapes the
/// network rather than the weights, so passing it here is a ConfigError.
WeightTensor apply_scheme(SchemeKind kind, const WeightTensor &w,
                          int64_t k_new, uint64_t seed);

/// {scheme, seed, k_new, source_checksum} for checkpoint metadata.
nlohmann::json provenance_record(SchemeKind kind, uint64_t seed,
                                 int64_t k_new, const WeightTensor &source);

// ---------------------------------------------------------------------------
// Adapt-n-Freeze: a trained adapter in front of an initially frozen base.

/// conv(3+k_new -> intermediate, 3x3) followed by 1x1 -> 3, so an
/// RGB-native model can consume the augmented input unchanged.
class InputAdapter : public nn::Module {
public:
  InputAdapter(int64_t k_new, int64_t intermediate, SplitMix64 &rng);

  autograd::Variable forward(const autograd::Variable &x) const;

  nn::Conv2d expand;
  nn::Conv2d squeeze;
};

/// Two-stage plan: before n_warm epochs only the adapter trains; from
/// n_warm onward the base unfreezes too.
struct AdaptNFreeze {
  std::unique_ptr<InputAdapter> adapter;
  nn::Module *base = nullptr;
  int64_t n_warm = 5;

  int64_t stage(int64_t epoch) const { return epoch < n_warm ? 1 : 2; }
  void set_epoch(int64_t epoch);
};

/// intermediate = 0 selects the default width 3 + k_new.
AdaptNFreeze build_adapt_n_freeze(nn::Module &base, int64_t k_new,
                                  int64_t n_warm = 5,
                                  int64_t intermediate = 0,
                                  uint64_t seed = 1);

// ---------------------------------------------------------------------------
// Warm-up schedule.

struct WarmupSchedule {
  int64_t n_warm = 5;
  double base_lr = 1e-3;
  bool freeze_backbone = false; // alternative stabilizer; default is LR ramp
};

/// Linear ramp (epoch+1)/n_warm capped at 1.0; epochs are 0-indexed. In
/// freeze-backbone mode the multiplier is 1.0 throughout (freezing does the
/// stabilizing instead).
double warmup_multiplier(int64_t epoch, const WarmupSchedule &sched);

std::vector<double> multiplier_table(const WarmupSchedule &sched,
                                     int64_t epochs);

} // namespace olaf::adapt
