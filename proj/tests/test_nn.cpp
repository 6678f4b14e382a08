// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "olaf/core/error.hpp"
#include "olaf/nn/checkpoint.hpp"
#include "olaf/nn/layers.hpp"
#include "olaf/nn/optim.hpp"

using namespace olaf;
using namespace olaf::autograd;
using namespace olaf::nn;

namespace {

/// Two-layer toy network exercising the registry plumbing.
struct TinyNet : Module {
  explicit TinyNet(SplitMix64 &rng)
      : conv(3, 4, 3, 1, 1, 1, true, rng), bn(4) {
    register_module("conv", &conv);
    register_module("bn", &bn);
  }
  Variable forward(const Variable &x) { return relu(bn.forward(conv.forward(x))); }
  Conv2d conv;
  BatchNorm2d bn;
};

std::string temp_path(const char *name) {
  return std::string("/tmp/olaf_test_") + name;
}

} // namespace

TEST_CASE("module registry exposes dotted parameter and buffer names") {
  SplitMix64 rng(3);
  TinyNet net(rng);
  auto params = net.named_parameters();
  std::vector<std::string> names;
  for (auto &[n, v] : params) names.push_back(n);
  CHECK(names == std::vector<std::string>{"conv.weight", "conv.bias",
                                          "bn.gamma", "bn.beta"});
  auto buffers = net.named_buffers();
  REQUIRE(buffers.size() == 2);
  CHECK(buffers[0].first == "bn.running_mean");
  CHECK(buffers[1].first == "bn.running_var");
}

TEST_CASE("kaiming init matches the fan-in variance rule") {
  SplitMix64 rng(5);
  Conv2d conv(32, 64, 3, 1, 1, 1, true, rng);
  const Tensor &w = conv.weight.value();
  double mean = 0.0, var = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) mean += w[i];
  mean /= static_cast<double>(w.numel());
  for (int64_t i = 0; i < w.numel(); ++i) var += (w[i] - mean) * (w[i] - mean);
  var /= static_cast<double>(w.numel());
  const double expected = 2.0 / (32.0 * 9.0);
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(expected).epsilon(0.05));
  // Bias starts at zero.
  for (int64_t i = 0; i < conv.bias.value().numel(); ++i)
    CHECK(conv.bias.value()[i] == 0.0);
}

TEST_CASE("identical seeds give identical weights, different seeds do not") {
  SplitMix64 a(9), b(9), c(10);
  Conv2d ca(4, 4, 3, 1, 1, 1, false, a);
  Conv2d cb(4, 4, 3, 1, 1, 1, false, b);
  Conv2d cc(4, 4, 3, 1, 1, 1, false, c);
  CHECK(max_abs_diff(ca.weight.value(), cb.weight.value()) == 0.0);
  CHECK(max_abs_diff(ca.weight.value(), cc.weight.value()) > 0.0);
}

TEST_CASE("frozen subtrees receive no gradient and no update") {
  SplitMix64 rng(7);
  TinyNet net(rng);
  net.conv.set_trainable(false);

  Tensor xt({2, 3, 6, 6});
  SplitMix64 xr(11);
  for (int64_t i = 0; i < xt.numel(); ++i) xt[i] = xr.uniform(-1.0, 1.0);
  Variable x(xt);
  Variable loss = sum(net.forward(x));
  loss.backward();

  CHECK_FALSE(net.conv.weight.grad().defined());
  CHECK(net.bn.gamma.grad().defined());

  const Tensor before = net.conv.weight.value();
  Adam opt(net.parameters(), 1e-2);
  opt.step();
  CHECK(max_abs_diff(before, net.conv.weight.value()) == 0.0);

  // Unfreezing brings the subtree back into training.
  net.conv.set_trainable(true);
  net.zero_grad();
  Variable loss2 = sum(net.forward(x));
  loss2.backward();
  opt.step();
  CHECK(max_abs_diff(before, net.conv.weight.value()) > 0.0);
}

TEST_CASE("sgd step matches the hand-computed update") {
  Variable p(Tensor::from_data({2}, {1.0, -2.0}), true);
  Variable loss = sum(mul(p, p)); // d/dp = 2p
  loss.backward();
  Sgd opt({p}, 0.1);
  opt.step();
  CHECK(p.value()[0] == doctest::Approx(1.0 - 0.1 * 2.0));
  CHECK(p.value()[1] == doctest::Approx(-2.0 - 0.1 * -4.0));
}

TEST_CASE("sgd momentum accumulates velocity") {
  Variable p(Tensor::from_data({1}, {0.0}), true);
  Sgd opt({p}, 1.0, 0.5);
  // Constant gradient of 1 across two steps: v1 = 1, v2 = 1.5.
  p.zero_grad();
  p.node()->ensure_grad();
  p.node()->grad[0] = 1.0;
  opt.step();
  CHECK(p.value()[0] == doctest::Approx(-1.0));
  opt.step();
  CHECK(p.value()[0] == doctest::Approx(-2.5));
}

TEST_CASE("adam step matches the closed-form first update") {
  // For any gradient g, the bias-corrected first Adam step moves the
  // parameter by lr * g / (|g| + eps), i.e. almost exactly lr.
  Variable p(Tensor::from_data({3}, {1.0, 2.0, 3.0}), true);
  Variable loss = sum(mul_scalar(p, 5.0)); // gradient = 5 everywhere
  loss.backward();
  Adam opt({p}, 1e-3);
  opt.step();
  for (int64_t i = 0; i < 3; ++i)
    CHECK(p.value()[i] ==
          doctest::Approx(static_cast<double>(i + 1) - 1e-3).epsilon(1e-6));
}

TEST_CASE("adam lr_scale multiplies only the current step") {
  Variable p(Tensor::from_data({1}, {0.0}), true);
  Adam opt({p}, 1.0);
  p.node()->ensure_grad();
  p.node()->grad[0] = 2.0;
  opt.step(0.25);
  CHECK(p.value()[0] == doctest::Approx(-0.25).epsilon(1e-6));
}

TEST_CASE("optimizer step leaves untouched parameters with zero grad alone") {
  Variable p(Tensor::from_data({1}, {4.0}), true);
  Adam opt({p}, 1e-3);
  opt.step(); // no backward ran; grad undefined
  CHECK(p.value()[0] == 4.0);
}

TEST_CASE("checkpoint round-trips parameters, buffers, and metadata") {
  SplitMix64 rng(21);
  TinyNet net(rng);

  // Push some data through in training mode so running stats move.
  Tensor xt({2, 3, 5, 5});
  SplitMix64 xr(23);
  for (int64_t i = 0; i < xt.numel(); ++i) xt[i] = xr.uniform(-1.0, 1.0);
  net.forward(Variable(xt));

  Checkpoint ck = snapshot(net, {{"scheme", "none"}, {"seed", 21}});
  const std::string path = temp_path("ckpt_roundtrip");
  save_checkpoint(path, ck);
  Checkpoint back = load_checkpoint(path);

  CHECK(back.meta.at("scheme") == "none");
  CHECK(back.meta.at("seed") == 21);
  REQUIRE(back.tensors.size() == ck.tensors.size());
  for (size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    CHECK(max_abs_diff(back.tensors[i].second, ck.tensors[i].second) == 0.0);
  }

  // Restoring into a differently seeded net reproduces the source exactly.
  SplitMix64 rng2(99);
  TinyNet other(rng2);
  restore(other, back);
  CHECK(max_abs_diff(other.conv.weight.value(), net.conv.weight.value()) == 0.0);
  CHECK(max_abs_diff(other.bn.running_mean, net.bn.running_mean) == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects damaged archives") {
  SplitMix64 rng(31);
  TinyNet net(rng);
  const std::string path = temp_path("ckpt_damage");
  save_checkpoint(path, snapshot(net));

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint("/tmp/olaf_no_such_file.ckpt"), DataError);
  }
  SUBCASE("bad magic") {
    std::ofstream f(path, std::ios::binary);
    f << "NOTACKPT";
    f.close();
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
  SUBCASE("truncated payload") {
    Checkpoint ck = snapshot(net);
    save_checkpoint(path, ck);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
  }
  SUBCASE("restore rejects a shape mismatch") {
    Checkpoint ck = snapshot(net);
    ck.tensors[0].second = Tensor({1, 1, 1, 1});
    CHECK_THROWS_AS(restore(net, ck), DataError);
  }
  SUBCASE("restore rejects missing tensors") {
    Checkpoint ck = snapshot(net);
    ck.tensors.erase(ck.tensors.begin());
    CHECK_THROWS_AS(restore(net, ck), DataError);
  }
  std::remove(path.c_str());
}

TEST_CASE("batch-norm layer switches statistics with training mode") {
  SplitMix64 rng(41);
  BatchNorm2d bn(2);
  Tensor xt({4, 2, 3, 3});
  for (int64_t i = 0; i < xt.numel(); ++i) xt[i] = rng.uniform(0.0, 4.0);

  bn.set_training(true);
  Variable ytrain = bn.forward(Variable(xt));
  // Batch statistics: per-channel output mean ~0.
  for (int64_t c = 0; c < 2; ++c) {
    double s = 0.0;
    for (int64_t n = 0; n < 4; ++n)
      for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) s += ytrain.value().at(n, c, i, j);
    CHECK(std::abs(s / 36.0) < 1e-12);
  }
  CHECK(max_abs_diff(bn.running_mean, Tensor({2})) > 0.0);

  bn.set_training(false);
  Tensor rm = bn.running_mean, rv = bn.running_var;
  bn.forward(Variable(xt));
  // Eval mode leaves the buffers untouched.
  CHECK(max_abs_diff(bn.running_mean, rm) == 0.0);
  CHECK(max_abs_diff(bn.running_var, rv) == 0.0);
}

TEST_CASE("linear and layer-norm layers forward as documented") {
  SplitMix64 rng(51);
  Linear lin(3, 2, rng);
  // Overwrite with known weights for a hand check.
  for (int64_t i = 0; i < 6; ++i) lin.weight.value()[i] = static_cast<double>(i);
  lin.bias.value()[0] = 1.0;
  lin.bias.value()[1] = -1.0;
  Variable y = lin.forward(Variable(Tensor::from_data({1, 3}, {1.0, 1.0, 1.0})));
  CHECK(y.value()[0] == doctest::Approx(0 + 1 + 2 + 1.0));
  CHECK(y.value()[1] == doctest::Approx(3 + 4 + 5 - 1.0));

  LayerNorm ln(4);
  Variable z =
      ln.forward(Variable(Tensor::from_data({1, 4}, {1.0, 2.0, 3.0, 4.0})));
  double mean = 0.0;
  for (int64_t i = 0; i < 4; ++i) mean += z.value()[i];
  CHECK(std::abs(mean) < 1e-10);
}
