// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "olaf/core/autograd.hpp"
#include "olaf/core/rng.hpp"
#include "olaf/nn/layers.hpp"
#include "olaf/nn/module.hpp"

namespace olaf::ldf {

using autograd::UpsampleMode;
using autograd::Variable;

/// Low-level dense feature extractor configuration.
struct LdfConfig {
  int64_t mid_channels = 48;
  std::vector<int64_t> aspp_rates = {1, 6, 12, 18};
  int64_t aspp_out_channels = 256;
  int64_t out_channels = 48;
  double upsample_factor = 2.0; // ratio of x1 to x2 spatial size; integral
  UpsampleMode mode = UpsampleMode::bilinear;

  bool operator==(const LdfConfig &) const = default;
};

/// The scaled-down configuration used by the desk-scale benchmark.
LdfConfig desk_ldf_config();

/// Throws ConfigError unless widths are positive, rates are non-empty,
/// strictly increasing and >= 1, and the upsample factor is integral >= 1.
void validate(const LdfConfig &cfg);

/// Upsample by an integral factor, then 1x1 conv + batch norm + ReLU.
class UpBlock : public nn::Module {
public:
  UpBlock(int64_t in_ch, int64_t out_ch, double factor, UpsampleMode mode,
          SplitMix64 &rng);

  Variable forward(const Variable &x);

  nn::Conv2d conv;
  nn::BatchNorm2d bn;

private:
  int64_t factor_;
  UpsampleMode mode_;
};

/// feat(x1, x2): Conv3x3(x1) concatenated with UpBlock(Conv3x3(x2)).
/// Output spatial size equals x1's; channels = 2 * mid_channels.
class Fuse : public nn::Module {
public:
  Fuse(int64_t in1_ch, int64_t in2_ch, const LdfConfig &cfg, SplitMix64 &rng);

  Variable forward(const Variable &x1, const Variable &x2);

  nn::Conv2d conv1, conv2;
  UpBlock up;
};

/// Atrous spatial pyramid pooling: one 3x3 branch per rate (padding equals
/// dilation, so spatial size is preserved), a 1x1 branch, and a broadcast
/// global-average-pool branch, concatenated and projected back to out_ch.
class Aspp : public nn::Module {
public:
  Aspp(int64_t in_ch, std::vector<int64_t> rates, int64_t out_ch,
       SplitMix64 &rng);

  Variable forward(const Variable &x);

  int64_t branches() const {
    return static_cast<int64_t>(rate_convs.size()) + 2;
  }

  std::vector<std::unique_ptr<nn::Conv2d>> rate_convs;
  nn::Conv2d conv1x1;
  nn::Conv2d pool_conv;
  nn::Conv2d project;

private:
  std::vector<int64_t> rates_;
};

/// LDF(x1, x2) = Conv1x1(ASPP(feat(x1, x2))).
class LdfModule : public nn::Module {
public:
  LdfModule(int64_t in1_ch, int64_t in2_ch, const LdfConfig &cfg,
            SplitMix64 &rng);

  Variable forward(const Variable &x1, const Variable &x2);

  int64_t out_channels() const { return head.out_channels(); }

  Fuse fuse;
  Aspp aspp;
  nn::Conv2d head;
};

// ---------------------------------------------------------------------------
// Wiring: how an LDF hangs off a backbone. Descriptors are plain data so a
// run report can record exactly what was attached where.

/// A named feature tap with its shape at a reference input size.
struct TapSpec {
  std::string name;
  int64_t channels = 0;
  int64_t height = 0;
  int64_t width = 0;

  bool operator==(const TapSpec &) const = default;
};

struct WiringDescriptor {
  std::string pattern;            // "cnn" | "unet" | "transformer"
  std::vector<std::string> taps;  // tapped feature names, x1 first
  std::string merge;              // where LDF output is concatenated
  int64_t instances = 0;
  int64_t out_channels = 0;
  bool resize = false;            // resize LDF output before the merge
  int64_t resize_factor = 1;      // integral factor
  bool upsample = true;           // direction when resize is set

  bool operator==(const WiringDescriptor &) const = default;
};

std::string serialize_wiring(const WiringDescriptor &w);
WiringDescriptor parse_wiring(const std::string &text); // throws DataError

/// Single LDF on backbone taps x1/x2, merged into the decoder input,
/// resized by an integral factor when the spatial sizes disagree.
WiringDescriptor attach_cnn(const TapSpec &x1, const TapSpec &x2,
                            const TapSpec &decoder_input,
                            const LdfConfig &cfg);

/// One LDF per encoder layer, each feeding the matching decoder layer's
/// skip connection. Layer-count mismatch is a WiringError.
WiringDescriptor attach_unet(const std::vector<TapSpec> &encoder_layers,
                             const std::vector<TapSpec> &decoder_layers,
                             const LdfConfig &cfg);

/// Single LDF on the first block's token grid (x2 is a stride-2 pooled
/// copy), merged with the final encoder output. The token count must form
/// the declared grid, or a square one when none is declared.
WiringDescriptor attach_transformer(int64_t tokens, int64_t embed_dim,
                                    const TapSpec &encoder_output,
                                    const LdfConfig &cfg, int64_t grid_h = 0,
                                    int64_t grid_w = 0);

} // namespace olaf::ldf
