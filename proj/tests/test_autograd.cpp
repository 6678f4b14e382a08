// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "olaf/core/autograd.hpp"
#include "olaf/core/rng.hpp"

using namespace olaf;
using namespace olaf::autograd;
using olaf::testing::gradcheck;

namespace {

Tensor random_tensor(Shape shape, SplitMix64 &rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

} // namespace

TEST_CASE("conv2d gradients match finite differences") {
  SplitMix64 rng(1);
  Variable x(random_tensor({1, 2, 6, 6}, rng), true);
  Variable w(random_tensor({3, 2, 3, 3}, rng), true);
  Variable b(random_tensor({3}, rng), true);
  Variable dy(random_tensor({1, 3, 6, 6}, rng));
  gradcheck([&] { return sum(mul(conv2d(x, w, b, 1, 1, 1), dy)); }, {x, w, b});
}

TEST_CASE("strided and dilated conv2d gradients") {
  SplitMix64 rng(2);
  Variable x(random_tensor({2, 2, 8, 8}, rng), true);
  Variable w(random_tensor({2, 2, 3, 3}, rng), true);
  gradcheck([&] { return sum(conv2d(x, w, Variable(), 2, 1, 1)); }, {x, w});
  Variable w2(random_tensor({2, 2, 3, 3}, rng), true);
  gradcheck([&] { return sum(conv2d(x, w2, Variable(), 1, 2, 2)); }, {x, w2});
}

TEST_CASE("batch_norm2d gradients and running statistics") {
  SplitMix64 rng(3);
  Variable x(random_tensor({2, 3, 4, 4}, rng), true);
  Variable gamma(random_tensor({3}, rng, 0.5, 1.5), true);
  Variable beta(random_tensor({3}, rng), true);
  Tensor run_mean({3}), run_var({3});
  run_var.fill(1.0);

  Variable dy(random_tensor({2, 3, 4, 4}, rng));
  gradcheck(
      [&] {
        return sum(mul(
            batch_norm2d(x, gamma, beta, run_mean, run_var, true, 0.1), dy));
      },
      {x, gamma, beta});

  // Training forwards pull the running statistics toward the batch values.
  Tensor rm0 = run_mean;
  {
    NoGradGuard ng;
    batch_norm2d(x, gamma, beta, run_mean, run_var, true, 0.5);
  }
  CHECK(max_abs_diff(rm0, run_mean) > 0.0);

  // Inference mode must not touch them and must use them for normalisation.
  Tensor rm1 = run_mean, rv1 = run_var;
  Variable y_eval;
  {
    NoGradGuard ng;
    y_eval = batch_norm2d(x, gamma, beta, run_mean, run_var, false, 0.5);
  }
  CHECK(max_abs_diff(rm1, run_mean) == 0.0);
  CHECK(max_abs_diff(rv1, run_var) == 0.0);
  double expect0 = (x.value()[0] - run_mean[0]) / std::sqrt(run_var[0] + 1e-5) *
                       gamma.value()[0] +
                   beta.value()[0];
  CHECK(y_eval.value()[0] == doctest::Approx(expect0).epsilon(1e-12));

  // Inference-mode gradients treat the normalisation as a per-channel
  // affine map.
  gradcheck(
      [&] {
        return sum(mul(
            batch_norm2d(x, gamma, beta, run_mean, run_var, false, 0.1), dy));
      },
      {x, gamma, beta});
}

TEST_CASE("relu and maxpool gradients away from kinks") {
  SplitMix64 rng(4);
  // Keep magnitudes above the FD step so no element crosses a kink.
  Tensor xv = random_tensor({1, 2, 4, 4}, rng, 0.2, 1.0);
  for (int64_t i = 0; i < xv.numel(); i += 2) xv[i] = -xv[i];
  Variable x(xv, true);
  Variable dy(random_tensor({1, 2, 4, 4}, rng));
  gradcheck([&] { return sum(mul(relu(x), dy)); }, {x});

  Variable xp(random_tensor({1, 2, 4, 4}, rng), true);
  Variable dyp(random_tensor({1, 2, 2, 2}, rng));
  gradcheck([&] { return sum(mul(maxpool2d(xp, 2), dyp)); }, {xp});
}

TEST_CASE("pool, upsample, pointwise and broadcast gradients") {
  SplitMix64 rng(5);
  Variable x(random_tensor({2, 2, 4, 4}, rng), true);
  Variable dy(random_tensor({2, 2, 2, 2}, rng));
  gradcheck([&] { return sum(mul(avgpool2d(x, 2), dy)); }, {x});

  Variable dyu(random_tensor({2, 2, 8, 8}, rng));
  gradcheck(
      [&] { return sum(mul(upsample2d(x, 2, UpsampleMode::nearest), dyu)); },
      {x});
  gradcheck(
      [&] { return sum(mul(upsample2d(x, 2, UpsampleMode::bilinear), dyu)); },
      {x});

  Variable g(random_tensor({2, 2, 1, 1}, rng), true);
  Variable dyb(random_tensor({2, 2, 4, 4}, rng));
  gradcheck([&] { return sum(mul(broadcast_spatial(g, 4, 4), dyb)); }, {g});
  Variable dyg(random_tensor({2, 2, 1, 1}, rng));
  gradcheck([&] { return sum(mul(global_avg_pool(x), dyg)); }, {x});
  gradcheck([&] { return sum(mul_scalar(x, -2.5)); }, {x});
}

TEST_CASE("concat_channels routes gradients to each slice") {
  SplitMix64 rng(6);
  Variable a(random_tensor({2, 2, 3, 3}, rng), true);
  Variable b(random_tensor({2, 3, 3, 3}, rng), true);
  Variable c(random_tensor({2, 1, 3, 3}, rng), true);
  Variable dy(random_tensor({2, 6, 3, 3}, rng));
  gradcheck([&] { return sum(mul(concat_channels({a, b, c}), dy)); }, {a, b, c});
}

TEST_CASE("linear, matmul, bmm, reshape, permute gradients") {
  SplitMix64 rng(7);
  Variable x(random_tensor({5, 4}, rng), true);
  Variable w(random_tensor({3, 4}, rng), true);
  Variable b(random_tensor({3}, rng), true);
  Variable dy(random_tensor({5, 3}, rng));
  gradcheck([&] { return sum(mul(linear(x, w, b), dy)); }, {x, w, b});

  Variable a2(random_tensor({4, 6}, rng), true);
  Variable b2(random_tensor({6, 3}, rng), true);
  Variable dy2(random_tensor({4, 3}, rng));
  gradcheck([&] { return sum(mul(matmul(a2, b2), dy2)); }, {a2, b2});

  Variable a3(random_tensor({2, 3, 4}, rng), true);
  Variable b3(random_tensor({2, 4, 5}, rng), true);
  Variable dy3(random_tensor({2, 3, 5}, rng));
  gradcheck([&] { return sum(mul(bmm(a3, b3), dy3)); }, {a3, b3});

  Variable xr(random_tensor({2, 3, 4}, rng), true);
  Variable dyr(random_tensor({6, 4}, rng));
  gradcheck([&] { return sum(mul(reshape(xr, {6, 4}), dyr)); }, {xr});

  Variable xp(random_tensor({2, 3, 4, 5}, rng), true);
  Variable dyp(random_tensor({4, 2, 5, 3}, rng));
  gradcheck([&] { return sum(mul(permute(xp, {2, 0, 3, 1}), dyp)); }, {xp});
}

TEST_CASE("permute round-trips through its inverse") {
  SplitMix64 rng(8);
  Variable x(random_tensor({2, 3, 4, 5}, rng));
  NoGradGuard ng;
  Variable y = permute(permute(x, {2, 0, 3, 1}), {1, 3, 0, 2});
  CHECK(max_abs_diff(x.value(), y.value()) == 0.0);
}

TEST_CASE("softmax and layer_norm gradients") {
  SplitMix64 rng(9);
  Variable x(random_tensor({4, 6}, rng, -2.0, 2.0), true);
  Variable dy(random_tensor({4, 6}, rng));
  gradcheck([&] { return sum(mul(softmax_lastdim(x), dy)); }, {x});

  Variable g(random_tensor({6}, rng, 0.5, 1.5), true);
  Variable b(random_tensor({6}, rng), true);
  gradcheck([&] { return sum(mul(layer_norm(x, g, b), dy)); }, {x, g, b});
}

TEST_CASE("cross entropy gradients and mean reduction") {
  SplitMix64 rng(10);
  Variable logits(random_tensor({2, 4, 3, 3}, rng, -2.0, 2.0), true);
  Tensor targets({2, 3, 3});
  for (int64_t i = 0; i < targets.numel(); ++i)
    targets[i] = static_cast<double>(rng.uniform_int(4));
  gradcheck([&] { return cross_entropy_logits(logits, targets); }, {logits});

  // Uniform logits give exactly log(K).
  Variable uni(Tensor({1, 5, 2, 2}, 0.3));
  Tensor t0({1, 2, 2});
  NoGradGuard ng;
  CHECK(cross_entropy_logits(uni, t0).value()[0] ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("diamond graphs accumulate gradients from every path") {
  SplitMix64 rng(11);
  Variable x(random_tensor({3, 3}, rng), true);
  // y = sum(x*x) has gradient 2x.
  Variable y = sum(mul(x, x));
  y.backward();
  for (int64_t i = 0; i < x.value().numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.value()[i]).epsilon(1e-12));

  // add(x, x) doubles the upstream gradient.
  x.zero_grad();
  sum(add(x, x)).backward();
  for (int64_t i = 0; i < x.value().numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("composite network end-to-end gradcheck") {
  SplitMix64 rng(12);
  Variable x(random_tensor({1, 3, 8, 8}, rng), true);
  Variable w1(random_tensor({4, 3, 3, 3}, rng, -0.5, 0.5), true);
  Variable g1(random_tensor({4}, rng, 0.8, 1.2), true);
  Variable b1(random_tensor({4}, rng, -0.1, 0.1), true);
  Variable w2(random_tensor({2, 4, 1, 1}, rng, -0.5, 0.5), true);
  Tensor rm({4}), rv({4});
  rv.fill(1.0);
  Tensor targets({1, 8, 8});
  for (int64_t i = 0; i < targets.numel(); ++i)
    targets[i] = static_cast<double>(rng.uniform_int(2));

  auto f = [&] {
    Variable h = conv2d(x, w1, Variable(), 1, 1, 1);
    h = batch_norm2d(h, g1, b1, rm, rv, true);
    h = avgpool2d(h, 2);
    h = upsample2d(h, 2, UpsampleMode::bilinear);
    Variable logits = conv2d(h, w2, Variable(), 1, 0, 1);
    return cross_entropy_logits(logits, targets);
  };
  gradcheck(f, {x, w1, g1, b1, w2}, 1e-6, 1e-4, 3);
}

TEST_CASE("NoGradGuard suppresses tape construction") {
  SplitMix64 rng(13);
  Variable x(random_tensor({2, 2}, rng), true);
  NoGradGuard ng;
  Variable y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("backward rejects non-scalar roots and shape errors throw") {
  SplitMix64 rng(14);
  Variable x(random_tensor({2, 2}, rng), true);
  Variable y = mul(x, x);
  CHECK_THROWS_AS(y.backward(), Error);

  Variable a(random_tensor({2, 3}, rng));
  Variable b(random_tensor({3, 2}, rng));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  Variable xc(random_tensor({1, 3, 4, 4}, rng));
  Variable wc(random_tensor({2, 4, 3, 3}, rng));
  CHECK_THROWS_AS(conv2d(xc, wc, Variable()), ShapeError);
}

TEST_CASE("gradients accumulate across backward calls until zeroed") {
  SplitMix64 rng(15);
  Variable x(random_tensor({4}, rng), true);
  sum(mul_scalar(x, 3.0)).backward();
  sum(mul_scalar(x, 3.0)).backward();
  for (int64_t i = 0; i < 4; ++i)
    CHECK(x.grad()[i] == doctest::Approx(6.0).epsilon(1e-12));
  x.zero_grad();
  sum(mul_scalar(x, 3.0)).backward();
  for (int64_t i = 0; i < 4; ++i)
    CHECK(x.grad()[i] == doctest::Approx(3.0).epsilon(1e-12));
}
