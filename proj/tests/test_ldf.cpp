// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "olaf/core/error.hpp"
#include "olaf/ldf.hpp"

using namespace olaf;
using namespace olaf::ldf;
using autograd::Variable;

namespace {

Tensor random_tensor(Shape shape, SplitMix64 &rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void fill_param(Variable &v, double value) { v.value().fill(value); }

LdfConfig tiny_config() {
  LdfConfig cfg;
  cfg.mid_channels = 4;
  cfg.aspp_rates = {1, 2};
  cfg.aspp_out_channels = 8;
  cfg.out_channels = 3;
  return cfg;
}

} // namespace

TEST_CASE("up_block scales spatial dims by its integral factor") {
  SplitMix64 rng(1);
  UpBlock up2(16, 8, 2.0, autograd::UpsampleMode::bilinear, rng);
  const Variable y2 = up2.forward(Variable(random_tensor({1, 16, 4, 4}, rng)));
  CHECK(y2.shape() == Shape{1, 8, 8, 8});

  UpBlock up1(16, 8, 1.0, autograd::UpsampleMode::nearest, rng);
  const Variable y1 = up1.forward(Variable(random_tensor({1, 16, 4, 4}, rng)));
  CHECK(y1.shape() == Shape{1, 8, 4, 4});

  CHECK_THROWS_AS(UpBlock(4, 4, 2.5, autograd::UpsampleMode::bilinear, rng),
                  ConfigError);
  CHECK_THROWS_AS(UpBlock(4, 4, 0.0, autograd::UpsampleMode::bilinear, rng),
                  ConfigError);
}

TEST_CASE("up_block clamps all-negative pre-activations to zero") {
  SplitMix64 rng(2);
  UpBlock up(3, 5, 2.0, autograd::UpsampleMode::bilinear, rng);
  fill_param(up.bn.gamma, 0.0);
  fill_param(up.bn.beta, -1.0); // pre-activation is -1 everywhere
  const Variable y = up.forward(Variable(random_tensor({2, 3, 3, 3}, rng)));
  for (int64_t i = 0; i < y.value().numel(); ++i)
    CHECK(y.value()[i] == 0.0);
}

TEST_CASE("fuse concatenates the two branches at x1's resolution") {
  SplitMix64 rng(3);
  LdfConfig cfg;
  cfg.mid_channels = 16;
  cfg.upsample_factor = 2.0;
  Fuse fuse(8, 8, cfg, rng);
  const Variable y = fuse.forward(Variable(random_tensor({1, 8, 32, 32}, rng)),
                                  Variable(random_tensor({1, 8, 16, 16}, rng)));
  CHECK(y.shape() == Shape{1, 32, 32, 32});

  LdfConfig flat = cfg;
  flat.upsample_factor = 1.0;
  Fuse even(4, 4, flat, rng);
  const Variable z = even.forward(Variable(random_tensor({2, 4, 7, 9}, rng)),
                                  Variable(random_tensor({2, 4, 7, 9}, rng)));
  CHECK(z.shape() == Shape{2, 32, 7, 9});

  CHECK_THROWS_AS(fuse.forward(Variable(random_tensor({1, 8, 16, 16}, rng)),
                               Variable(random_tensor({1, 8, 7, 7}, rng))),
                  ShapeError);
}

TEST_CASE("fuse with zeroed parameters emits exact zeros") {
  SplitMix64 rng(4);
  LdfConfig cfg;
  cfg.mid_channels = 3;
  Fuse fuse(2, 2, cfg, rng);
  fill_param(fuse.conv1.weight, 0.0);
  fill_param(fuse.conv1.bias, 0.0);
  fill_param(fuse.conv2.weight, 0.0);
  fill_param(fuse.conv2.bias, 0.0);
  fill_param(fuse.up.conv.weight, 0.0);
  fill_param(fuse.up.conv.bias, 0.0);
  const Variable y = fuse.forward(Variable(random_tensor({1, 2, 8, 8}, rng)),
                                  Variable(random_tensor({1, 2, 4, 4}, rng)));
  for (int64_t i = 0; i < y.value().numel(); ++i)
    CHECK(y.value()[i] == 0.0);
}

TEST_CASE("aspp preserves spatial size and projects to out_ch") {
  SplitMix64 rng(5);
  Aspp aspp(6, {1, 6, 12}, 10, rng);
  CHECK(aspp.branches() == 5);
  const Variable y = aspp.forward(Variable(random_tensor({2, 6, 9, 13}, rng)));
  CHECK(y.shape() == Shape{2, 10, 9, 13});

  Aspp single(4, {1}, 4, rng);
  CHECK(single.branches() == 3);
  CHECK(single.forward(Variable(random_tensor({1, 4, 5, 5}, rng))).shape() ==
        Shape{1, 4, 5, 5});

  CHECK_THROWS_AS(Aspp(4, {}, 4, rng), ConfigError);
  CHECK_THROWS_AS(Aspp(4, {3, 2}, 4, rng), ConfigError);
  CHECK_THROWS_AS(Aspp(4, {0, 1}, 4, rng), ConfigError);
}

TEST_CASE("the global-pool branch sees a constant input exactly") {
  SplitMix64 rng(6);
  const int64_t in_ch = 2, out_ch = 2;
  Aspp aspp(in_ch, {1}, out_ch, rng);
  for (auto &p : aspp.parameters()) fill_param(p, 0.0);
  // Identity 1x1 on the pool branch; projection copies that branch through.
  for (int64_t c = 0; c < out_ch; ++c) {
    aspp.pool_conv.weight.value()[(c * in_ch + c)] = 1.0;
    const int64_t pool_offset = 2 * out_ch; // branches: rate1, 1x1, pool
    aspp.project.weight.value()[c * aspp.project.in_channels() + pool_offset +
                                c] = 1.0;
  }
  Tensor x({1, in_ch, 5, 7});
  x.fill(0.75);
  const Variable y = aspp.forward(Variable(x));
  for (int64_t i = 0; i < y.value().numel(); ++i)
    CHECK(y.value()[i] == 0.75);
}

TEST_CASE("ldf output rides x1's resolution with cfg.out_channels") {
  SplitMix64 rng(7);
  // Backbone taps on a 64x64 image: block 1 at stride 4, block 2 at stride 8.
  LdfModule mod(6, 12, tiny_config(), rng);
  const Variable y = mod.forward(Variable(random_tensor({1, 6, 16, 16}, rng)),
                                 Variable(random_tensor({1, 12, 8, 8}, rng)));
  CHECK(y.shape() == Shape{1, 3, 16, 16});
  CHECK(mod.out_channels() == 3);

  LdfConfig guide = tiny_config();
  guide.out_channels = 1;
  LdfModule g(4, 4, guide, rng);
  CHECK(g.forward(Variable(random_tensor({2, 4, 8, 8}, rng)),
                  Variable(random_tensor({2, 4, 4, 4}, rng)))
            .shape() == Shape{2, 1, 8, 8});
}

TEST_CASE("ldf shape law holds over random configurations") {
  SplitMix64 rng(8);
  for (int rep = 0; rep < 50; ++rep) {
    LdfConfig cfg;
    cfg.mid_channels = rng.uniform_int(1, 5);
    cfg.aspp_out_channels = rng.uniform_int(1, 6);
    cfg.out_channels = rng.uniform_int(1, 4);
    cfg.upsample_factor = static_cast<double>(rng.uniform_int(1, 3));
    const std::vector<std::vector<int64_t>> rate_menu = {
        {1}, {2}, {1, 2}, {1, 3, 5}};
    cfg.aspp_rates = rate_menu[static_cast<size_t>(rng.uniform_int(0, 3))];
    cfg.mode = rng.uniform() < 0.5 ? autograd::UpsampleMode::bilinear
                                   : autograd::UpsampleMode::nearest;

    const int64_t n = rng.uniform_int(1, 2);
    const int64_t c1 = rng.uniform_int(1, 5);
    const int64_t c2 = rng.uniform_int(1, 5);
    const int64_t h2 = rng.uniform_int(1, 5);
    const int64_t w2 = rng.uniform_int(1, 5);
    const int64_t f = static_cast<int64_t>(cfg.upsample_factor);

    LdfModule mod(c1, c2, cfg, rng);
    const Variable y =
        mod.forward(Variable(random_tensor({n, c1, h2 * f, w2 * f}, rng)),
                    Variable(random_tensor({n, c2, h2, w2}, rng)));
    CHECK(y.shape() == Shape{n, cfg.out_channels, h2 * f, w2 * f});
  }
}

TEST_CASE("ldf forward is bitwise deterministic") {
  SplitMix64 rng(9);
  LdfModule mod(4, 4, tiny_config(), rng);
  mod.set_training(false);
  const Tensor x1 = random_tensor({1, 4, 8, 8}, rng);
  const Tensor x2 = random_tensor({1, 4, 4, 4}, rng);
  autograd::NoGradGuard ng;
  const Variable a = mod.forward(Variable(x1), Variable(x2));
  const Variable b = mod.forward(Variable(x1), Variable(x2));
  REQUIRE(a.value().numel() == b.value().numel());
  for (int64_t i = 0; i < a.value().numel(); ++i)
    CHECK(a.value()[i] == b.value()[i]);
}

TEST_CASE("ldf analytic gradients match central differences") {
  SplitMix64 rng(10);
  LdfModule mod(4, 4, tiny_config(), rng);
  Variable x1(random_tensor({1, 4, 8, 8}, rng), true);
  Variable x2(random_tensor({1, 4, 4, 4}, rng), true);

  std::vector<Variable> leaves = mod.parameters();
  leaves.push_back(x1);
  leaves.push_back(x2);
  const double worst = testing::gradcheck(
      [&] {
        const Variable y = mod.forward(x1, x2);
        return autograd::sum(autograd::mul(y, y));
      },
      leaves, 1e-5, 1e-4);
  CHECK(worst < 1e-4);
}

TEST_CASE("wiring descriptors round-trip through their serialization") {
  LdfConfig cfg = tiny_config();
  const TapSpec b1{"block1", 16, 16, 16};
  const TapSpec b2{"block2", 32, 8, 8};
  const TapSpec dec{"decoder_in", 64, 16, 16};
  const WiringDescriptor cnn = attach_cnn(b1, b2, dec, cfg);
  CHECK(cnn.pattern == "cnn");
  CHECK(cnn.instances == 1);
  CHECK(cnn.out_channels == cfg.out_channels);
  CHECK(!cnn.resize);
  CHECK(parse_wiring(serialize_wiring(cnn)) == cnn);

  const WiringDescriptor unet = attach_unet(
      {{"enc1", 16, 32, 32}, {"enc2", 32, 16, 16}, {"enc3", 64, 8, 8}},
      {{"dec1", 16, 32, 32}, {"dec2", 32, 16, 16}, {"dec3", 64, 8, 8}}, cfg);
  CHECK(unet.instances == 3);
  CHECK(unet.taps.size() == 3);
  CHECK(parse_wiring(serialize_wiring(unet)) == unet);

  const WiringDescriptor tr =
      attach_transformer(256, 32, {"encoder_out", 32, 16, 16}, cfg);
  CHECK(tr.instances == 1);
  CHECK(tr.taps == std::vector<std::string>{"block1"});
  CHECK(!tr.resize);
  CHECK(parse_wiring(serialize_wiring(tr)) == tr);

  CHECK_THROWS_AS(parse_wiring("not json at all"), DataError);
  CHECK_THROWS_AS(parse_wiring("{\"pattern\": \"cnn\"}"), DataError);
}

TEST_CASE("attach_cnn resizes only by integral factors") {
  LdfConfig cfg = tiny_config();
  const TapSpec b1{"block1", 16, 16, 16};
  const TapSpec b2{"block2", 32, 8, 8};

  const WiringDescriptor up =
      attach_cnn(b1, b2, {"decoder_in", 64, 32, 32}, cfg);
  CHECK(up.resize);
  CHECK(up.upsample);
  CHECK(up.resize_factor == 2);

  const WiringDescriptor down =
      attach_cnn(b1, b2, {"decoder_in", 64, 8, 8}, cfg);
  CHECK(down.resize);
  CHECK(!down.upsample);
  CHECK(down.resize_factor == 2);

  CHECK_THROWS_AS(attach_cnn(b1, b2, {"decoder_in", 64, 24, 24}, cfg),
                  WiringError);
  // Taps whose sizes contradict the configured upsample factor.
  CHECK_THROWS_AS(attach_cnn(b1, {"block2", 32, 7, 7}, b1, cfg), WiringError);
}

TEST_CASE("attach_unet demands matching layer counts") {
  LdfConfig cfg = tiny_config();
  const std::vector<TapSpec> enc = {{"enc1", 8, 16, 16}, {"enc2", 16, 8, 8}};
  CHECK_THROWS_AS(attach_unet(enc, {{"dec1", 8, 16, 16}}, cfg), WiringError);
  CHECK_THROWS_AS(attach_unet({}, {}, cfg), WiringError);
}

TEST_CASE("attach_transformer needs a resolvable token grid") {
  LdfConfig cfg = tiny_config();
  const TapSpec enc_out{"encoder_out", 32, 16, 16};
  CHECK_THROWS_AS(attach_transformer(250, 32, enc_out, cfg), WiringError);
  const WiringDescriptor declared =
      attach_transformer(512, 32, {"encoder_out", 32, 16, 32}, cfg, 16, 32);
  CHECK(declared.instances == 1);
  CHECK_THROWS_AS(attach_transformer(512, 32, enc_out, cfg, 16, 31),
                  WiringError);
  // Odd grids cannot take the stride-2 pooled copy.
  CHECK_THROWS_AS(attach_transformer(225, 32, enc_out, cfg), WiringError);
  // Grid larger than the encoder output resizes down by an integral factor.
  const WiringDescriptor resized =
      attach_transformer(1024, 32, enc_out, cfg);
  CHECK(resized.resize);
  CHECK(!resized.upsample);
  CHECK(resized.resize_factor == 2);
}
