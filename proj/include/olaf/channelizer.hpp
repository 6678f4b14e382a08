// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>

#include "olaf/core/tensor.hpp"
#include "olaf/data.hpp"

namespace olaf::channelizer {

/// The two object-cue rasters fed alongside RGB.
struct ChannelPair {
  data::Mask fg;
  data::Mask edge;
};

/// Foreground mask: 1 wherever the label is nonzero.
data::Mask derive_foreground(const data::LabelMap &labels);

/// Keeps raw edge responses that exceed tau and fall on foreground; the
/// result is contained in fg by construction. raw is a rank-2 [h, w] field.
data::Mask filter_edges(const Tensor &raw, const data::Mask &fg,
                        double tau = 0.0);

/// Flips exactly round(level * h * w) distinct pixels, chosen uniformly
/// without replacement from the seeded stream. level outside [0, 1] is a
/// ConfigError.
data::Mask inject_noise(const data::Mask &m, double level, uint64_t seed);

/// Fraction of pixels where the two masks disagree.
double estimate_noise(const data::Mask &a, const data::Mask &b);

/// Which cue channels ride along with RGB.
struct ChannelConfig {
  bool use_fg = true;
  bool use_edge = true;

  int64_t channels() const { return 3 + (use_fg ? 1 : 0) + (use_edge ? 1 : 0); }
};

/// Stacks [R, G, B, fg?, edge?] into a [c, h, w] tensor; cue channels are
/// written as 0.0 / 1.0.
Tensor assemble_input(const data::RgbImage &img, const ChannelPair &cues,
                      const ChannelConfig &cfg = {});

// ---------------------------------------------------------------------------
// Mask providers: where the cue channels come from.

class MaskProvider {
public:
  virtual ~MaskProvider() = default;
  virtual ChannelPair provide(const data::Sample &s, int64_t index) = 0;
  virtual std::string describe() const = 0;
};

struct ProviderConfig {
  std::string kind = "oracle"; // oracle | degraded | gradient | file
  double noise_level = 0.0;    // degraded: mask corruption level
  uint64_t seed = 1;           // degraded: flip-stream seed
  double tau = 0.08;           // gradient: edge response threshold
  std::string dir;             // file: root of foreground/ and edges/
};

/// Builds a provider from its config; unknown kinds are a ConfigError.
std::unique_ptr<MaskProvider> make_provider(const ProviderConfig &cfg);

} // namespace olaf::channelizer
