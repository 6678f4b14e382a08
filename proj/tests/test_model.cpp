// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "olaf/core/error.hpp"
#include "olaf/model.hpp"

using namespace olaf;
using namespace olaf::model;
using autograd::NoGradGuard;
using autograd::Variable;

namespace {

Tensor random_tensor(Shape shape, SplitMix64 &rng, double lo = 0.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor random_labels(Shape shape, int64_t k, SplitMix64 &rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i)
    t[i] = static_cast<double>(rng.uniform_int(static_cast<uint64_t>(k)));
  return t;
}

ModelConfig desk_config(const std::string &arch, int64_t in_ch, int64_t k,
                        bool with_ldf, uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.arch = arch;
  cfg.in_channels = in_ch;
  cfg.num_classes = k;
  cfg.with_ldf = with_ldf;
  cfg.seed = seed;
  return cfg;
}

Tensor eval_logits(SegModel &m, const Tensor &x) {
  NoGradGuard ng;
  m.set_training(false);
  return m.forward(Variable(x)).value();
}

/// Zero-pads extra channels onto a [n,3,h,w] stack.
Tensor pad_channels(const Tensor &rgb, int64_t total) {
  const auto &s = rgb.shape();
  Tensor out({s[0], total, s[2], s[3]});
  const int64_t plane = s[2] * s[3];
  for (int64_t n = 0; n < s[0]; ++n)
    for (int64_t c = 0; c < s[1]; ++c)
      for (int64_t p = 0; p < plane; ++p)
        out[(n * total + c) * plane + p] = rgb[(n * s[1] + c) * plane + p];
  return out;
}

int64_t total_params(SegModel &m) {
  int64_t n = 0;
  for (const auto &v : m.parameters()) n += v.value().numel();
  return n;
}

} // namespace

TEST_CASE("every architecture maps 5x64x64 stacks to Kx64x64 logits") {
  SplitMix64 rng(1);
  const Tensor x = random_tensor({1, 5, 64, 64}, rng);
  for (const std::string arch :
       {"minisegnet", "miniunet", "minitransformer"}) {
    for (const bool with_ldf : {false, true}) {
      auto m = make_model(desk_config(arch, 5, 7, with_ldf));
      const Tensor y = eval_logits(*m, x);
      CHECK(y.shape() == Shape{1, 7, 64, 64});
      for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(std::isfinite(y[i]));
    }
  }
}

TEST_CASE("channel mismatch names expected and got counts") {
  SplitMix64 rng(2);
  auto m = make_model(desk_config("minisegnet", 5, 4, false));
  const Tensor x3 = random_tensor({1, 3, 16, 16}, rng);
  try {
    NoGradGuard ng;
    m->forward(Variable(x3));
    FAIL("expected ShapeError");
  } catch (const ShapeError &e) {
    const std::string msg = e.what();
    CHECK(msg.find("expected 5") != std::string::npos);
    CHECK(msg.find("got 3") != std::string::npos);
  }
  CHECK_THROWS_AS(
      { m->forward(Variable(random_tensor({1, 5, 20, 20}, rng))); },
      ShapeError);
}

TEST_CASE("eval-mode forward passes are bitwise deterministic") {
  SplitMix64 rng(3);
  const Tensor x = random_tensor({2, 5, 16, 16}, rng);
  for (const std::string arch :
       {"minisegnet", "miniunet", "minitransformer"}) {
    auto m = make_model(desk_config(arch, 5, 4, true));
    const Tensor a = eval_logits(*m, x);
    const Tensor b = eval_logits(*m, x);
    CHECK(max_abs_diff(a, b) == 0.0);
  }
}

TEST_CASE("permuting the batch permutes eval logits identically") {
  SplitMix64 rng(4);
  const Tensor x = random_tensor({3, 5, 16, 16}, rng);
  const std::vector<int64_t> perm = {2, 0, 1};
  Tensor xp({3, 5, 16, 16});
  const int64_t stride = 5 * 16 * 16;
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < stride; ++j)
      xp[i * stride + j] = x[perm[i] * stride + j];

  for (const std::string arch :
       {"minisegnet", "miniunet", "minitransformer"}) {
    auto m = make_model(desk_config(arch, 5, 4, true));
    const Tensor y = eval_logits(*m, x);
    const Tensor yp = eval_logits(*m, xp);
    const int64_t out_stride = y.numel() / 3;
    for (int64_t i = 0; i < 3; ++i)
      for (int64_t j = 0; j < out_stride; ++j)
        REQUIRE(yp[i * out_stride + j] == y[perm[i] * out_stride + j]);
  }
}

TEST_CASE("architectures build for 3, 5, and 6 input channels") {
  SplitMix64 rng(5);
  for (const std::string arch :
       {"minisegnet", "miniunet", "minitransformer"}) {
    for (const int64_t c : {int64_t{3}, int64_t{5}, int64_t{6}}) {
      auto m = make_model(desk_config(arch, c, 4, false));
      const Tensor y = eval_logits(*m, random_tensor({1, c, 16, 16}, rng));
      CHECK(y.shape() == Shape{1, 4, 16, 16});
    }
  }
}

TEST_CASE("parameter count depends only on the configuration") {
  auto a = make_model(desk_config("minisegnet", 5, 8, true, 1));
  auto b = make_model(desk_config("minisegnet", 5, 8, true, 99));
  CHECK(total_params(*a) == total_params(*b));

  // Widening the input by two channels adds exactly two 16x3x3 slices.
  auto narrow = make_model(desk_config("minisegnet", 3, 8, true, 1));
  CHECK(total_params(*a) - total_params(*narrow) == 2 * 16 * 9);

  // One more class adds one 16-weight head row plus its bias.
  auto k9 = make_model(desk_config("minisegnet", 5, 9, true, 1));
  CHECK(total_params(*k9) - total_params(*a) == 16 + 1);
}

TEST_CASE("unknown architectures and bad widths are config errors") {
  CHECK_THROWS_AS(make_model(desk_config("resnet50", 3, 4, false)),
                  ConfigError);
  CHECK_THROWS_AS(make_model(desk_config("minisegnet", 0, 4, false)),
                  ConfigError);
  CHECK_THROWS_AS(make_model(desk_config("minisegnet", 3, 1, false)),
                  ConfigError);
}

TEST_CASE("cross-entropy hits its analytic anchors") {
  SplitMix64 rng(6);
  const int64_t k = 7;
  const Tensor labels = random_labels({2, 4, 4}, k, rng);

  // Uniform logits: loss = ln K exactly.
  const Tensor zeros({2, k, 4, 4});
  const Variable flat =
      autograd::cross_entropy_logits(Variable(zeros), labels);
  CHECK(flat.value()[0] == doctest::Approx(std::log(double(k))).epsilon(1e-12));

  // Near-delta prediction: one-hot logits scaled by 10.
  Tensor hot({2, k, 4, 4});
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 16; ++p) {
      const auto g = static_cast<int64_t>(labels[n * 16 + p]);
      hot[(n * k + g) * 16 + p] = 10.0;
    }
  const Variable sharp =
      autograd::cross_entropy_logits(Variable(hot), labels);
  CHECK(sharp.value()[0] < 1e-3);
}

TEST_CASE("train_step reports the pre-update loss and steps once") {
  SplitMix64 rng(7);
  Batch batch{random_tensor({2, 3, 16, 16}, rng),
              random_labels({2, 16, 16}, 4, rng)};

  auto m = make_model(desk_config("minisegnet", 3, 4, false));
  m->set_training(true);
  const Variable before = autograd::cross_entropy_logits(
      m->forward(Variable(batch.images)), batch.labels);

  nn::Adam opt(m->parameters(), 1e-3);
  const StepResult r = train_step(*m, batch, opt);
  CHECK(!r.diverged);
  CHECK(r.loss == before.value()[0]);

  // The update moved the input conv.
  const Variable after = autograd::cross_entropy_logits(
      m->forward(Variable(batch.images)), batch.labels);
  CHECK(after.value()[0] != r.loss);
}

TEST_CASE("lr_scale scales an SGD update linearly") {
  SplitMix64 rng(8);
  Batch batch{random_tensor({1, 3, 16, 16}, rng),
              random_labels({1, 16, 16}, 4, rng)};

  auto a = make_model(desk_config("minisegnet", 3, 4, false, 13));
  auto b = make_model(desk_config("minisegnet", 3, 4, false, 13));
  const Tensor wa0 = a->input_conv().weight.value();
  const Tensor wb0 = b->input_conv().weight.value();
  CHECK(max_abs_diff(wa0, wb0) == 0.0);

  nn::Sgd opt_a(a->parameters(), 0.1);
  nn::Sgd opt_b(b->parameters(), 0.1);
  train_step(*a, batch, opt_a, 1.0);
  train_step(*b, batch, opt_b, 0.5);

  const Tensor &wa = a->input_conv().weight.value();
  const Tensor &wb = b->input_conv().weight.value();
  for (int64_t i = 0; i < wa.numel(); ++i) {
    const double da = wa[i] - wa0[i], db = wb[i] - wb0[i];
    REQUIRE(db == doctest::Approx(0.5 * da).epsilon(1e-9));
  }

  // Zero scale freezes the model entirely.
  auto c = make_model(desk_config("minisegnet", 3, 4, false, 13));
  nn::Sgd opt_c(c->parameters(), 0.1);
  train_step(*c, batch, opt_c, 0.0);
  CHECK(max_abs_diff(c->input_conv().weight.value(), wa0) == 0.0);
}

TEST_CASE("non-finite losses are flagged and apply no update") {
  SplitMix64 rng(9);
  Batch batch{random_tensor({1, 3, 16, 16}, rng),
              random_labels({1, 16, 16}, 4, rng)};
  MiniSegNet m(desk_config("minisegnet", 3, 4, false));
  m.head.bias.value()[0] = std::nan("");
  const Tensor frozen = m.input_conv().weight.value();

  nn::Adam opt(m.parameters(), 1e-3);
  const StepResult r = train_step(m, batch, opt);
  CHECK(r.diverged);
  CHECK(!std::isfinite(r.loss));
  CHECK(max_abs_diff(m.input_conv().weight.value(), frozen) == 0.0);
}

TEST_CASE("50 steps overfit a four-image color-coded set") {
  const int64_t k = 4;
  const double colors[4][3] = {{0.9, 0.1, 0.1},
                               {0.1, 0.9, 0.1},
                               {0.1, 0.1, 0.9},
                               {0.8, 0.8, 0.1}};
  Tensor images({4, 3, 16, 16});
  Tensor labels({4, 16, 16});
  for (int64_t n = 0; n < 4; ++n)
    for (int64_t p = 0; p < 256; ++p) {
      for (int64_t c = 0; c < 3; ++c)
        images[(n * 3 + c) * 256 + p] = colors[n][c];
      labels[n * 256 + p] = static_cast<double>(n % k);
    }
  const Batch batch{images, labels};

  auto m = make_model(desk_config("minisegnet", 3, k, false, 21));
  nn::Adam opt(m->parameters(), 1e-2);
  double loss = 0.0;
  for (int i = 0; i < 50; ++i) {
    const StepResult r = train_step(*m, batch, opt);
    REQUIRE(!r.diverged);
    loss = r.loss;
  }
  CHECK(loss < 0.1);
}

TEST_CASE("full-model gradients match central differences") {
  SplitMix64 rng(10);
  const Tensor images = random_tensor({1, 5, 16, 16}, rng);
  const Tensor labels = random_labels({1, 16, 16}, 3, rng);

  const struct {
    const char *arch;
    int64_t stride;
  } cases[] = {{"minisegnet", 997}, {"miniunet", 1499},
               {"minitransformer", 499}};
  for (const auto &c : cases) {
    auto m = make_model(desk_config(c.arch, 5, 3, true, 11));
    m->set_training(true);
    Variable x(images, true);
    std::vector<Variable> leaves = m->parameters();
    leaves.push_back(x);
    const double worst = testing::gradcheck(
        [&] {
          return autograd::cross_entropy_logits(m->forward(x), labels);
        },
        leaves, 1e-6, 1e-3, c.stride);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("warm starts reproduce the baseline on zero aux channels") {
  SplitMix64 rng(12);
  auto baseline = make_model(desk_config("minisegnet", 3, 6, false, 31));

  // Move the running statistics off their defaults first.
  Batch batch{random_tensor({2, 3, 16, 16}, rng),
              random_labels({2, 16, 16}, 6, rng)};
  nn::Adam opt(baseline->parameters(), 1e-3);
  for (int i = 0; i < 3; ++i) train_step(*baseline, batch, opt);
  const nn::Checkpoint ck = snapshot_model(*baseline);

  const Tensor rgb = random_tensor({2, 3, 16, 16}, rng);
  const Tensor aug = pad_channels(rgb, 5);
  const Tensor want = eval_logits(*baseline, rgb);

  for (const auto scheme : {adapt::SchemeKind::olaf_average,
                            adapt::SchemeKind::random2,
                            adapt::SchemeKind::average_rgb5}) {
    auto target = make_model(desk_config("minisegnet", 5, 6, true, 77));
    warm_start(*target, ck, scheme, 5);
    const Tensor got = eval_logits(*target, aug);
    if (scheme == adapt::SchemeKind::average_rgb5) {
      // RGB filters are rewritten, so only gray inputs would agree.
      CHECK(max_abs_diff(got, want) > 0.0);
    } else {
      CHECK(max_abs_diff(got, want) < 1e-6);
    }
  }

  // random-5 redraws the RGB slices: equivalence must break.
  auto scrambled = make_model(desk_config("minisegnet", 5, 6, true, 77));
  warm_start(*scrambled, ck, adapt::SchemeKind::random5, 5);
  CHECK(max_abs_diff(eval_logits(*scrambled, aug), want) > 1e-6);

  // Nonzero aux channels light the new input slices up.
  auto live = make_model(desk_config("minisegnet", 5, 6, true, 77));
  warm_start(*live, ck, adapt::SchemeKind::olaf_average, 5);
  Tensor noisy = aug;
  const int64_t plane = 16 * 16;
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t p = 0; p < 2 * plane; ++p)
      noisy[(n * 5 + 3) * plane + p] = 1.0;
  CHECK(max_abs_diff(eval_logits(*live, noisy), want) > 1e-6);
}

TEST_CASE("warm starts keep equivalence across every architecture") {
  SplitMix64 rng(13);
  for (const std::string arch :
       {"minisegnet", "miniunet", "minitransformer"}) {
    auto baseline = make_model(desk_config(arch, 3, 4, false, 41));
    const nn::Checkpoint ck = snapshot_model(*baseline);
    auto target = make_model(desk_config(arch, 5, 4, true, 88));
    warm_start(*target, ck, adapt::SchemeKind::olaf_average, 1);

    const Tensor rgb = random_tensor({1, 3, 16, 16}, rng);
    CHECK(max_abs_diff(eval_logits(*target, pad_channels(rgb, 5)),
                       eval_logits(*baseline, rgb)) < 1e-6);
  }
}

TEST_CASE("model checkpoints round-trip through disk") {
  SplitMix64 rng(14);
  auto m = make_model(desk_config("miniunet", 5, 6, true, 3));
  Batch batch{random_tensor({2, 5, 16, 16}, rng),
              random_labels({2, 16, 16}, 6, rng)};
  nn::Adam opt(m->parameters(), 1e-3);
  for (int i = 0; i < 2; ++i) train_step(*m, batch, opt);

  nn::Checkpoint ck = snapshot_model(*m, {{"note", "round-trip"}});
  CHECK(ck.meta.at("arch") == "miniunet");
  CHECK(ck.meta.at("in_channels") == 5);
  CHECK(ck.meta.at("num_classes") == 6);
  CHECK(ck.meta.at("provenance").at("note") == "round-trip");

  const std::string path = "test_model_ckpt.bin";
  nn::save_checkpoint(path, ck);
  auto re = model_from_checkpoint(nn::load_checkpoint(path));
  std::remove(path.c_str());

  const Tensor x = random_tensor({1, 5, 16, 16}, rng);
  CHECK(max_abs_diff(eval_logits(*re, x), eval_logits(*m, x)) == 0.0);
}

TEST_CASE("model configs survive their JSON round-trip") {
  ModelConfig cfg = desk_config("minitransformer", 6, 9, true, 123);
  cfg.ldf.aspp_rates = {1, 3, 7};
  cfg.ldf.mode = UpsampleMode::nearest;
  const ModelConfig back = model_config_from_json(model_config_to_json(cfg));
  CHECK(back == cfg);
  CHECK_THROWS_AS(model_config_from_json(nlohmann::json{{"arch", "x"}}),
                  DataError);
}

TEST_CASE("wiring descriptors reflect the attached pattern") {
  const auto seg = make_model(desk_config("minisegnet", 5, 8, true));
  const ldf::WiringDescriptor cnn = seg->wiring(64, 64);
  CHECK(cnn.pattern == "cnn");
  CHECK(cnn.taps == std::vector<std::string>{"enc1", "enc2"});
  CHECK(cnn.instances == 1);
  CHECK(!cnn.resize);

  const auto unet = make_model(desk_config("miniunet", 5, 8, true));
  const ldf::WiringDescriptor skips = unet->wiring(64, 64);
  CHECK(skips.pattern == "unet");
  CHECK(skips.instances == 2);

  const auto vit = make_model(desk_config("minitransformer", 5, 8, true));
  const ldf::WiringDescriptor tr = vit->wiring(64, 64);
  CHECK(tr.pattern == "transformer");
  CHECK(tr.taps == std::vector<std::string>{"block1"});

  const auto plain = make_model(desk_config("minisegnet", 5, 8, false));
  CHECK(plain->wiring(64, 64).pattern.empty());
}
