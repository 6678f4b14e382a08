// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "olaf/adapt.hpp"
#include "olaf/core/autograd.hpp"
#include "olaf/core/rng.hpp"
#include "olaf/ldf.hpp"
#include "olaf/nn/checkpoint.hpp"
#include "olaf/nn/layers.hpp"
#include "olaf/nn/module.hpp"
#include "olaf/nn/optim.hpp"

namespace olaf::model {

using autograd::UpsampleMode;
using autograd::Variable;

struct ModelConfig {
  std::string arch = "minisegnet"; // minisegnet | miniunet | minitransformer
  int64_t in_channels = 3;
  int64_t num_classes = 8;
  bool with_ldf = false;
  ldf::LdfConfig ldf = ldf::desk_ldf_config();
  uint64_t seed = 1;

  bool operator==(const ModelConfig &) const = default;
};

nlohmann::json model_config_to_json(const ModelConfig &cfg);
ModelConfig model_config_from_json(const nlohmann::json &j); // throws DataError

/// Common face of the three miniature architectures: a forward pass from a
/// channel stack to per-class logits, access to the input layer for weight
/// surgery, and a wiring descriptor documenting any attached LDF.
class SegModel : public nn::Module {
public:
  ~SegModel() override = default;

  /// [n, in_channels, h, w] -> logits [n, num_classes, h, w].
  virtual Variable forward(const Variable &x) = 0;

  /// The convolution whose weights input-layer adaptation rewrites.
  virtual nn::Conv2d &input_conv() = 0;

  /// LDF attachment for an h x w input; pattern "" when LDF is off.
  virtual ldf::WiringDescriptor wiring(int64_t h, int64_t w) const = 0;

  /// Heads zeroed by warm_start so a freshly attached LDF is silent.
  virtual std::vector<nn::Conv2d *> ldf_heads() { return {}; }

  const ModelConfig &config() const { return config_; }
  int64_t in_channels() const { return config_.in_channels; }
  int64_t num_classes() const { return config_.num_classes; }

protected:
  explicit SegModel(ModelConfig cfg) : config_(std::move(cfg)) {}

  void check_input(const Variable &x) const; // throws ShapeError

  ModelConfig config_;
};

/// 3x3 conv (no bias) -> batch norm -> ReLU.
class ConvBnRelu : public nn::Module {
public:
  ConvBnRelu(int64_t in_ch, int64_t out_ch, SplitMix64 &rng);

  Variable forward(const Variable &x);

  nn::Conv2d conv;
  nn::BatchNorm2d bn;
};

/// Plain encoder-decoder CNN: three [conv-bn-relu x2 -> 2x2 max-pool]
/// blocks of widths (16, 32, 64), two x2 bilinear decoder stages, a 1x1
/// classifier, and a final x2 upsample back to input resolution. The LDF
/// taps the first two encoder blocks and merges into the second decoder
/// stage. Input sides must be divisible by 8.
class MiniSegNet : public SegModel {
  SplitMix64 rng_;

public:
  explicit MiniSegNet(ModelConfig cfg);

  Variable forward(const Variable &x) override;
  nn::Conv2d &input_conv() override { return enc1a.conv; }
  ldf::WiringDescriptor wiring(int64_t h, int64_t w) const override;
  std::vector<nn::Conv2d *> ldf_heads() override;

  ConvBnRelu enc1a, enc1b, enc2a, enc2b, enc3a, enc3b;
  ConvBnRelu dec1, dec2;
  nn::Conv2d head;
  std::unique_ptr<ldf::LdfModule> aux;
};

/// Three-level U-Net of widths (16, 32, 64) with per-level skip
/// connections. One LDF per skip level, each fed by that level's encoder
/// output and the next deeper feature map, concatenated into the matching
/// decoder input. Input sides must be divisible by 4.
class MiniUNet : public SegModel {
  SplitMix64 rng_;

public:
  explicit MiniUNet(ModelConfig cfg);

  Variable forward(const Variable &x) override;
  nn::Conv2d &input_conv() override { return enc1a.conv; }
  ldf::WiringDescriptor wiring(int64_t h, int64_t w) const override;
  std::vector<nn::Conv2d *> ldf_heads() override;

  ConvBnRelu enc1a, enc1b, enc2a, enc2b, bota, botb;
  ConvBnRelu dec2, dec1;
  nn::Conv2d head;
  std::unique_ptr<ldf::LdfModule> aux1, aux2;
};

/// Pre-norm transformer block: 2-head self-attention + 2x MLP, dim 32.
class AttnBlock : public nn::Module {
public:
  AttnBlock(int64_t dim, int64_t heads, SplitMix64 &rng);

  Variable forward(const Variable &x); // [n, tokens, dim]

  nn::LayerNorm ln1, ln2;
  nn::Linear q, k, v, proj, fc1, fc2;

private:
  int64_t dim_, heads_;
};

/// 4x4 patch embedding to dim 32, two 2-head attention blocks, and a 1x1
/// linear decoder on the token grid followed by a x4 upsample. The LDF
/// taps the first block's grid with a stride-2 average-pooled copy as x2
/// and merges into the decoder input. Input sides must be divisible by 8
/// so the pooled copy exists.
class MiniTransformer : public SegModel {
  SplitMix64 rng_;

public:
  explicit MiniTransformer(ModelConfig cfg);

  Variable forward(const Variable &x) override;
  nn::Conv2d &input_conv() override { return patch; }
  ldf::WiringDescriptor wiring(int64_t h, int64_t w) const override;
  std::vector<nn::Conv2d *> ldf_heads() override;

  nn::Conv2d patch;
  AttnBlock block1, block2;
  nn::LayerNorm ln_f;
  nn::Conv2d dec;
  std::unique_ptr<ldf::LdfModule> aux;
};

/// Builds the architecture named by cfg.arch; unknown names are a
/// ConfigError.
std::unique_ptr<SegModel> make_model(const ModelConfig &cfg);

// ---------------------------------------------------------------------------
// Training step.

struct Batch {
  Tensor images; // [n, c, h, w]
  Tensor labels; // [n, h, w] class indices
};

struct StepResult {
  double loss = 0.0;
  bool diverged = false; // non-finite loss; no update was applied
};

/// One optimizer step of mean pixel cross-entropy on the batch. Returns
/// the loss measured before the update; lr_scale is the warm-up
/// multiplier for this step.
StepResult train_step(SegModel &m, const Batch &batch, nn::Optimizer &opt,
                      double lr_scale = 1.0);

// ---------------------------------------------------------------------------
// Checkpointing and warm starts.

/// Snapshot with a manifest {arch, widths, num_classes, in_channels,
/// config, provenance}.
nn::Checkpoint snapshot_model(SegModel &m, nlohmann::json provenance = {});

/// Rebuilds the architecture recorded in the manifest and restores its
/// weights.
std::unique_ptr<SegModel> model_from_checkpoint(const nn::Checkpoint &ck);

/// Warm-starts `target` from a narrower baseline snapshot: the input conv
/// kernel is widened by `scheme`, merge layers fed by new channels gain
/// zero-filled input slices, parameters absent from the baseline keep
/// their fresh initialization, and LDF heads are zeroed — so the step-0
/// forward pass equals the baseline's when the extra input channels are
/// all zero.
void warm_start(SegModel &target, const nn::Checkpoint &baseline,
                adapt::SchemeKind scheme, uint64_t seed);

} // namespace olaf::model
