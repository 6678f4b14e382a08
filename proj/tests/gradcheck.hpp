// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <doctest.h>

#include "olaf/core/autograd.hpp"

namespace olaf::testing {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

/// Compares reverse-mode gradients of a scalar-valued graph builder against
/// central finite differences, rebuilding the graph after each perturbation.
/// `check_stride` subsamples large leaves to keep runtimes sane.
inline double gradcheck(const std::function<autograd::Variable()> &f,
                        std::vector<autograd::Variable> leaves,
                        double step = 1e-6, double tol = 1e-5,
                        int64_t check_stride = 1) {
  for (auto &v : leaves) v.zero_grad();
  autograd::Variable loss = f();
  loss.backward();

  double worst = 0.0;
  for (auto &v : leaves) {
    for (int64_t i = 0; i < v.value().numel(); i += check_stride) {
      const double orig = v.value()[i];
      double fp, fm;
      {
        autograd::NoGradGuard ng;
        v.value()[i] = orig + step;
        fp = f().value()[0];
        v.value()[i] = orig - step;
        fm = f().value()[0];
        v.value()[i] = orig;
      }
      const double fd = (fp - fm) / (2.0 * step);
      const double ag = v.grad().defined() ? v.grad()[i] : 0.0;
      const double err = rel_err(fd, ag);
      worst = std::max(worst, err);
      if (err > tol) {
        CAPTURE(i);
        CAPTURE(fd);
        CAPTURE(ag);
        CHECK(err <= tol);
        return worst;
      }
    }
  }
  CHECK(worst <= tol);
  return worst;
}

} // namespace olaf::testing
