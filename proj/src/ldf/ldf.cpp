// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "json.hpp"

#include "olaf/core/error.hpp"
#include "olaf/ldf.hpp"

namespace olaf::ldf {

using namespace autograd;

LdfConfig desk_ldf_config() {
  LdfConfig cfg;
  cfg.mid_channels = 8;
  cfg.aspp_rates = {1, 6};
  cfg.aspp_out_channels = 32;
  cfg.out_channels = 8;
  return cfg;
}

void validate(const LdfConfig &cfg) {
  OLAF_CHECK(cfg.mid_channels > 0 && cfg.aspp_out_channels > 0 &&
                 cfg.out_channels > 0,
             ConfigError, "ldf: channel widths must be positive");
  OLAF_CHECK(!cfg.aspp_rates.empty(), ConfigError,
             "ldf: aspp_rates must be non-empty");
  int64_t prev = 0;
  for (int64_t r : cfg.aspp_rates) {
    OLAF_CHECK(r >= 1, ConfigError, "ldf: aspp rate %lld below 1",
               static_cast<long long>(r));
    OLAF_CHECK(r > prev, ConfigError,
               "ldf: aspp_rates must be strictly increasing");
    prev = r;
  }
  OLAF_CHECK(cfg.upsample_factor >= 1.0 &&
                 cfg.upsample_factor == std::floor(cfg.upsample_factor),
             ConfigError, "ldf: upsample factor %g is not a positive integer",
             cfg.upsample_factor);
}

UpBlock::UpBlock(int64_t in_ch, int64_t out_ch, double factor,
                 UpsampleMode mode, SplitMix64 &rng)
    : conv(in_ch, out_ch, 1, 1, 0, 1, true, rng), bn(out_ch), mode_(mode) {
  OLAF_CHECK(factor >= 1.0 && factor == std::floor(factor), ConfigError,
             "up_block: factor %g is not a positive integer", factor);
  factor_ = static_cast<int64_t>(factor);
  register_module("conv", &conv);
  register_module("bn", &bn);
}

Variable UpBlock::forward(const Variable &x) {
  Variable y = x;
  if (factor_ > 1) y = upsample2d(y, factor_, mode_);
  return relu(bn.forward(conv.forward(y)));
}

Fuse::Fuse(int64_t in1_ch, int64_t in2_ch, const LdfConfig &cfg,
           SplitMix64 &rng)
    : conv1(in1_ch, cfg.mid_channels, 3, 1, 1, 1, true, rng),
      conv2(in2_ch, cfg.mid_channels, 3, 1, 1, 1, true, rng),
      up(cfg.mid_channels, cfg.mid_channels, cfg.upsample_factor, cfg.mode,
         rng) {
  validate(cfg);
  register_module("conv1", &conv1);
  register_module("conv2", &conv2);
  register_module("up", &up);
}

Variable Fuse::forward(const Variable &x1, const Variable &x2) {
  const Variable a = conv1.forward(x1);
  const Variable b = up.forward(conv2.forward(x2));
  OLAF_CHECK(a.value().shape()[2] == b.value().shape()[2] &&
                 a.value().shape()[3] == b.value().shape()[3],
             ShapeError,
             "fuse: x1 branch %lldx%lld vs upsampled x2 branch %lldx%lld",
             static_cast<long long>(a.value().shape()[2]),
             static_cast<long long>(a.value().shape()[3]),
             static_cast<long long>(b.value().shape()[2]),
             static_cast<long long>(b.value().shape()[3]));
  return concat_channels({a, b});
}

Aspp::Aspp(int64_t in_ch, std::vector<int64_t> rates, int64_t out_ch,
           SplitMix64 &rng)
    : conv1x1(in_ch, out_ch, 1, 1, 0, 1, true, rng),
      pool_conv(in_ch, out_ch, 1, 1, 0, 1, true, rng),
      project((static_cast<int64_t>(rates.size()) + 2) * out_ch, out_ch, 1, 1,
              0, 1, true, rng),
      rates_(std::move(rates)) {
  OLAF_CHECK(!rates_.empty(), ConfigError, "aspp: rates must be non-empty");
  int64_t prev = 0;
  for (int64_t r : rates_) {
    OLAF_CHECK(r >= 1 && r > prev, ConfigError,
               "aspp: rates must be strictly increasing and >= 1");
    prev = r;
  }
  for (size_t i = 0; i < rates_.size(); ++i) {
    rate_convs.push_back(std::make_unique<nn::Conv2d>(
        in_ch, out_ch, 3, 1, rates_[i], rates_[i], true, rng));
    register_module(strfmt("rate%lld", static_cast<long long>(rates_[i])),
                    rate_convs.back().get());
  }
  register_module("conv1x1", &conv1x1);
  register_module("pool", &pool_conv);
  register_module("project", &project);
}

Variable Aspp::forward(const Variable &x) {
  const int64_t h = x.value().shape()[2], w = x.value().shape()[3];
  std::vector<Variable> branches;
  branches.reserve(rate_convs.size() + 2);
  for (const auto &conv : rate_convs)
    branches.push_back(relu(conv->forward(x)));
  branches.push_back(relu(conv1x1.forward(x)));
  branches.push_back(relu(
      pool_conv.forward(broadcast_spatial(global_avg_pool(x), h, w))));
  return relu(project.forward(concat_channels(branches)));
}

LdfModule::LdfModule(int64_t in1_ch, int64_t in2_ch, const LdfConfig &cfg,
                     SplitMix64 &rng)
    : fuse(in1_ch, in2_ch, cfg, rng),
      aspp(2 * cfg.mid_channels, cfg.aspp_rates, cfg.aspp_out_channels, rng),
      head(cfg.aspp_out_channels, cfg.out_channels, 1, 1, 0, 1, true, rng) {
  register_module("fuse", &fuse);
  register_module("aspp", &aspp);
  register_module("head", &head);
}

Variable LdfModule::forward(const Variable &x1, const Variable &x2) {
  return head.forward(aspp.forward(fuse.forward(x1, x2)));
}

// ---------------------------------------------------------------------------
// Wiring.

std::string serialize_wiring(const WiringDescriptor &w) {
  return nlohmann::json{{"pattern", w.pattern},
                        {"taps", w.taps},
                        {"merge", w.merge},
                        {"instances", w.instances},
                        {"out_channels", w.out_channels},
                        {"resize", w.resize},
                        {"resize_factor", w.resize_factor},
                        {"upsample", w.upsample}}
      .dump();
}

WiringDescriptor parse_wiring(const std::string &text) {
  const nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  OLAF_CHECK(j.is_object(), DataError, "wiring descriptor is not valid JSON");
  WiringDescriptor w;
  try {
    w.pattern = j.at("pattern").get<std::string>();
    w.taps = j.at("taps").get<std::vector<std::string>>();
    w.merge = j.at("merge").get<std::string>();
    w.instances = j.at("instances").get<int64_t>();
    w.out_channels = j.at("out_channels").get<int64_t>();
    w.resize = j.at("resize").get<bool>();
    w.resize_factor = j.at("resize_factor").get<int64_t>();
    w.upsample = j.at("upsample").get<bool>();
  } catch (const nlohmann::json::exception &e) {
    throw DataError(strfmt("wiring descriptor: %s", e.what()));
  }
  return w;
}

WiringDescriptor attach_cnn(const TapSpec &x1, const TapSpec &x2,
                            const TapSpec &decoder_input,
                            const LdfConfig &cfg) {
  validate(cfg);
  const int64_t f = static_cast<int64_t>(cfg.upsample_factor);
  OLAF_CHECK(x2.height * f == x1.height && x2.width * f == x1.width,
             WiringError,
             "attach_cnn: tap '%s' at %lldx%lld cannot upsample x%lld to "
             "tap '%s' at %lldx%lld",
             x2.name.c_str(), static_cast<long long>(x2.height),
             static_cast<long long>(x2.width), static_cast<long long>(f),
             x1.name.c_str(), static_cast<long long>(x1.height),
             static_cast<long long>(x1.width));
  WiringDescriptor w;
  w.pattern = "cnn";
  w.taps = {x1.name, x2.name};
  w.merge = decoder_input.name;
  w.instances = 1;
  w.out_channels = cfg.out_channels;
  if (x1.height != decoder_input.height || x1.width != decoder_input.width) {
    w.resize = true;
    if (decoder_input.height % x1.height == 0 &&
        decoder_input.width % x1.width == 0 &&
        decoder_input.height / x1.height == decoder_input.width / x1.width) {
      w.upsample = true;
      w.resize_factor = decoder_input.height / x1.height;
    } else if (x1.height % decoder_input.height == 0 &&
               x1.width % decoder_input.width == 0 &&
               x1.height / decoder_input.height ==
                   x1.width / decoder_input.width) {
      w.upsample = false;
      w.resize_factor = x1.height / decoder_input.height;
    } else {
      throw WiringError(strfmt(
          "attach_cnn: no integral resize from %lldx%lld to '%s' at %lldx%lld",
          static_cast<long long>(x1.height), static_cast<long long>(x1.width),
          decoder_input.name.c_str(),
          static_cast<long long>(decoder_input.height),
          static_cast<long long>(decoder_input.width)));
    }
  }
  return w;
}

WiringDescriptor attach_unet(const std::vector<TapSpec> &encoder_layers,
                             const std::vector<TapSpec> &decoder_layers,
                             const LdfConfig &cfg) {
  validate(cfg);
  OLAF_CHECK(!encoder_layers.empty(), WiringError,
             "attach_unet: no encoder layers");
  OLAF_CHECK(encoder_layers.size() == decoder_layers.size(), WiringError,
             "attach_unet: %zu encoder layers vs %zu decoder layers",
             encoder_layers.size(), decoder_layers.size());
  WiringDescriptor w;
  w.pattern = "unet";
  for (const auto &t : encoder_layers) w.taps.push_back(t.name);
  w.merge = "skips";
  w.instances = static_cast<int64_t>(encoder_layers.size());
  w.out_channels = cfg.out_channels;
  return w;
}

WiringDescriptor attach_transformer(int64_t tokens, int64_t embed_dim,
                                    const TapSpec &encoder_output,
                                    const LdfConfig &cfg, int64_t grid_h,
                                    int64_t grid_w) {
  validate(cfg);
  OLAF_CHECK(tokens > 0 && embed_dim > 0, WiringError,
             "attach_transformer: empty token grid");
  if (grid_h > 0 || grid_w > 0) {
    OLAF_CHECK(grid_h > 0 && grid_w > 0 && grid_h * grid_w == tokens,
               WiringError,
               "attach_transformer: declared grid %lldx%lld does not hold "
               "%lld tokens",
               static_cast<long long>(grid_h), static_cast<long long>(grid_w),
               static_cast<long long>(tokens));
  } else {
    const int64_t side =
        static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
    OLAF_CHECK(side * side == tokens, WiringError,
               "attach_transformer: %lld tokens are not a square grid and no "
               "grid was declared",
               static_cast<long long>(tokens));
    grid_h = grid_w = side;
  }
  OLAF_CHECK(grid_h % 2 == 0 && grid_w % 2 == 0, WiringError,
             "attach_transformer: grid %lldx%lld cannot take a stride-2 "
             "pooled copy",
             static_cast<long long>(grid_h), static_cast<long long>(grid_w));
  WiringDescriptor w;
  w.pattern = "transformer";
  w.taps = {"block1"};
  w.merge = encoder_output.name;
  w.instances = 1;
  w.out_channels = cfg.out_channels;
  if (grid_h != encoder_output.height || grid_w != encoder_output.width) {
    OLAF_CHECK(encoder_output.height > 0 &&
                   grid_h % encoder_output.height == 0 &&
                   grid_w % encoder_output.width == 0,
               WiringError,
               "attach_transformer: no integral resize from %lldx%lld to "
               "'%s' at %lldx%lld",
               static_cast<long long>(grid_h), static_cast<long long>(grid_w),
               encoder_output.name.c_str(),
               static_cast<long long>(encoder_output.height),
               static_cast<long long>(encoder_output.width));
    w.resize = true;
    w.upsample = false;
    w.resize_factor = grid_h / encoder_output.height;
  }
  return w;
}

} // namespace olaf::ldf
