// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include "olaf/core/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "olaf/core/error.hpp"
#include "olaf/core/kernels.hpp"

namespace olaf::autograd {

namespace {

thread_local int g_no_grad_depth = 0;

using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node &)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  if (grad_enabled())
    for (const auto &p : parents)
      if (p && p->requires_grad) rg = true;
  n->requires_grad = rg;
  if (rg) {
    parents.erase(std::remove(parents.begin(), parents.end(), nullptr),
                  parents.end());
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void accumulate(const NodePtr &n, const Tensor &g) {
  if (!n || !n->requires_grad) return;
  n->ensure_grad();
  double *dst = n->grad.data();
  const double *src = g.data();
  const int64_t numel = n->grad.numel();
  for (int64_t i = 0; i < numel; ++i) dst[i] += src[i];
}

} // namespace

Variable::Variable(Tensor value, bool requires_grad) {
  node_ = std::make_shared<Node>();
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Variable Variable::from_node(NodePtr n) {
  Variable v;
  v.node_ = std::move(n);
  return v;
}

void Variable::backward() const {
  OLAF_CHECK(node_ != nullptr, Error, "backward: undefined variable");
  OLAF_CHECK(node_->value.numel() == 1, Error,
             "backward: output must be scalar, got %s",
             shape_str(node_->value.shape()).c_str());
  if (!node_->requires_grad) return;

  // Reverse post-order DFS gives a topological order with every consumer
  // ahead of its producers, so each node's gradient is complete before its
  // backward_fn runs.
  std::vector<Node *> order;
  std::unordered_set<Node *> visited;
  struct Frame {
    Node *n;
    size_t next;
  };
  std::vector<Frame> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame &f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node *c = f.n->parents[f.next++].get();
      if (c && c->requires_grad && !visited.count(c)) {
        visited.insert(c);
        stack.push_back({c, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad.fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node *n = *it;
    if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
  }
}

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

// ---- Ops --------------------------------------------------------------

Variable conv2d(const Variable &x, const Variable &w, const Variable &bias,
                int64_t stride, int64_t pad, int64_t dil) {
  OLAF_CHECK(x.defined() && w.defined(), Error, "conv2d: undefined input");
  const Tensor &xv = x.value(), &wv = w.value();
  OLAF_CHECK(xv.rank() == 4 && wv.rank() == 4, ShapeError,
             "conv2d: expected 4-D input/weight, got %s and %s",
             shape_str(xv.shape()).c_str(), shape_str(wv.shape()).c_str());
  OLAF_CHECK(xv.dim(1) == wv.dim(1), ShapeError,
             "conv2d: input channels %lld != weight channels %lld",
             static_cast<long long>(xv.dim(1)), static_cast<long long>(wv.dim(1)));
  OLAF_CHECK(stride >= 1 && dil >= 1 && pad >= 0, ConfigError,
             "conv2d: bad stride/pad/dilation");
  if (bias.defined())
    OLAF_CHECK(bias.value().rank() == 1 && bias.value().dim(0) == wv.dim(0),
               ShapeError, "conv2d: bias shape %s does not match %lld filters",
               shape_str(bias.value().shape()).c_str(),
               static_cast<long long>(wv.dim(0)));

  kernels::ConvDims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
                      wv.dim(0), wv.dim(2), wv.dim(3), stride, pad, dil};
  OLAF_CHECK(d.out_h() >= 1 && d.out_w() >= 1, ShapeError,
             "conv2d: kernel %lldx%lld does not fit input %s",
             static_cast<long long>(d.kh), static_cast<long long>(d.kw),
             shape_str(xv.shape()).c_str());

  Tensor y({d.n, d.cout, d.out_h(), d.out_w()});
  kernels::conv2d_forward(xv.data(), wv.data(),
                          bias.defined() ? bias.value().data() : nullptr,
                          y.data(), d);

  auto xn = x.node(), wn = w.node(), bn = bias.node();
  auto fn = [xn, wn, bn, d](Node &self) {
    const Tensor &g = self.grad;
    if (xn->requires_grad) {
      xn->ensure_grad();
      kernels::conv2d_backward_input(g.data(), wn->value.data(),
                                     xn->grad.data(), d);
    }
    if (wn->requires_grad || (bn && bn->requires_grad)) {
      wn->ensure_grad();
      double *db = nullptr;
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        db = bn->grad.data();
      }
      kernels::conv2d_backward_params(g.data(), xn->value.data(),
                                      wn->grad.data(), db, d);
    }
  };
  return Variable::from_node(make_node(std::move(y), {xn, wn, bn}, fn));
}

Variable batch_norm2d(const Variable &x, const Variable &gamma,
                      const Variable &beta, Tensor &running_mean,
                      Tensor &running_var, bool training, double momentum,
                      double eps) {
  const Tensor &xv = x.value();
  OLAF_CHECK(xv.rank() == 4, ShapeError, "batch_norm2d: expected NCHW, got %s",
             shape_str(xv.shape()).c_str());
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  OLAF_CHECK(gamma.value().numel() == c && beta.value().numel() == c &&
                 running_mean.numel() == c && running_var.numel() == c,
             ShapeError, "batch_norm2d: parameter size mismatch for %lld channels",
             static_cast<long long>(c));

  Tensor mean({c}), var({c});
  if (training) {
    kernels::bn2d_stats(xv.data(), n, c, h, w, mean.data(), var.data());
    for (int64_t i = 0; i < c; ++i) {
      running_mean[i] = (1.0 - momentum) * running_mean[i] + momentum * mean[i];
      running_var[i] = (1.0 - momentum) * running_var[i] + momentum * var[i];
    }
  } else {
    mean = running_mean;
    var = running_var;
  }

  Tensor y(xv.shape());
  kernels::bn2d_forward(xv.data(), mean.data(), var.data(), gamma.value().data(),
                        beta.value().data(), eps, y.data(), n, c, h, w);

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  auto fn = [xn, gn, bn, mean, var, training, eps, n, c, h, w](Node &self) {
    xn->ensure_grad();
    gn->ensure_grad();
    bn->ensure_grad();
    kernels::bn2d_backward(xn->value.data(), self.grad.data(), mean.data(),
                           var.data(), gn->value.data(), eps, training,
                           xn->grad.data(), gn->grad.data(), bn->grad.data(), n,
                           c, h, w);
  };
  return Variable::from_node(make_node(std::move(y), {xn, gn, bn}, fn));
}

Variable relu(const Variable &x) {
  const Tensor &xv = x.value();
  Tensor y(xv.shape());
  kernels::relu_forward(xv.data(), y.data(), xv.numel());
  auto xn = x.node();
  auto fn = [xn](Node &self) {
    xn->ensure_grad();
    kernels::relu_backward(xn->value.data(), self.grad.data(), xn->grad.data(),
                           xn->value.numel());
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable maxpool2d(const Variable &x, int64_t k) {
  const Tensor &xv = x.value();
  OLAF_CHECK(xv.rank() == 4, ShapeError, "maxpool2d: expected NCHW");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  OLAF_CHECK(k >= 1 && h % k == 0 && w % k == 0, ShapeError,
             "maxpool2d: window %lld does not tile %s",
             static_cast<long long>(k), shape_str(xv.shape()).c_str());
  Tensor y({n, c, h / k, w / k});
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(y.numel()));
  kernels::maxpool2d_forward(xv.data(), y.data(), argmax->data(), n, c, h, w, k);
  auto xn = x.node();
  auto fn = [xn, argmax, n, c, h, w, k](Node &self) {
    xn->ensure_grad();
    kernels::maxpool2d_backward(self.grad.data(), argmax->data(),
                                xn->grad.data(), n, c, h, w, k);
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable avgpool2d(const Variable &x, int64_t k) {
  const Tensor &xv = x.value();
  OLAF_CHECK(xv.rank() == 4, ShapeError, "avgpool2d: expected NCHW");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  OLAF_CHECK(k >= 1 && h % k == 0 && w % k == 0, ShapeError,
             "avgpool2d: window %lld does not tile %s",
             static_cast<long long>(k), shape_str(xv.shape()).c_str());
  Tensor y({n, c, h / k, w / k});
  kernels::avgpool2d_forward(xv.data(), y.data(), n, c, h, w, k);
  auto xn = x.node();
  auto fn = [xn, n, c, h, w, k](Node &self) {
    xn->ensure_grad();
    kernels::avgpool2d_backward(self.grad.data(), xn->grad.data(), n, c, h, w, k);
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable upsample2d(const Variable &x, int64_t factor, UpsampleMode mode) {
  const Tensor &xv = x.value();
  OLAF_CHECK(xv.rank() == 4, ShapeError, "upsample2d: expected NCHW");
  OLAF_CHECK(factor >= 1, ConfigError, "upsample2d: factor must be >= 1");
  const int64_t n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  Tensor y({n, c, h * factor, w * factor});
  if (mode == UpsampleMode::nearest)
    kernels::upsample_nearest_forward(xv.data(), y.data(), n, c, h, w, factor);
  else
    kernels::upsample_bilinear_forward(xv.data(), y.data(), n, c, h, w, factor);
  auto xn = x.node();
  auto fn = [xn, n, c, h, w, factor, mode](Node &self) {
    xn->ensure_grad();
    if (mode == UpsampleMode::nearest)
      kernels::upsample_nearest_backward(self.grad.data(), xn->grad.data(), n,
                                         c, h, w, factor);
    else
      kernels::upsample_bilinear_backward(self.grad.data(), xn->grad.data(), n,
                                          c, h, w, factor);
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable concat_channels(const std::vector<Variable> &xs) {
  OLAF_CHECK(!xs.empty(), Error, "concat_channels: empty input list");
  const Tensor &first = xs[0].value();
  OLAF_CHECK(first.rank() == 4, ShapeError, "concat_channels: expected NCHW");
  const int64_t n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int64_t c_total = 0;
  for (const auto &x : xs) {
    const Tensor &xv = x.value();
    OLAF_CHECK(xv.rank() == 4 && xv.dim(0) == n && xv.dim(2) == h &&
                   xv.dim(3) == w,
               ShapeError, "concat_channels: %s does not match %s",
               shape_str(xv.shape()).c_str(), shape_str(first.shape()).c_str());
    c_total += xv.dim(1);
  }
  Tensor y({n, c_total, h, w});
  const int64_t plane = h * w;
  int64_t c_off = 0;
  for (const auto &x : xs) {
    const Tensor &xv = x.value();
    const int64_t c = xv.dim(1);
    for (int64_t b = 0; b < n; ++b)
      std::copy(xv.data() + b * c * plane, xv.data() + (b + 1) * c * plane,
                y.data() + (b * c_total + c_off) * plane);
    c_off += c;
  }

  std::vector<NodePtr> parents;
  for (const auto &x : xs) parents.push_back(x.node());
  auto fn = [parents, n, c_total, plane](Node &self) {
    int64_t off = 0;
    for (const auto &p : parents) {
      const int64_t c = p->value.dim(1);
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t b = 0; b < n; ++b) {
          const double *src = self.grad.data() + (b * c_total + off) * plane;
          double *dst = p->grad.data() + b * c * plane;
          for (int64_t i = 0; i < c * plane; ++i) dst[i] += src[i];
        }
      }
      off += c;
    }
  };
  return Variable::from_node(make_node(std::move(y), parents, fn));
}

Variable add(const Variable &a, const Variable &b) {
  OLAF_CHECK(a.value().same_shape(b.value()), ShapeError,
             "add: shape mismatch %s vs %s", shape_str(a.shape()).c_str(),
             shape_str(b.shape()).c_str());
  Tensor y(a.value().shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] + b.value()[i];
  auto an = a.node(), bn = b.node();
  auto fn = [an, bn](Node &self) {
    accumulate(an, self.grad);
    accumulate(bn, self.grad);
  };
  return Variable::from_node(make_node(std::move(y), {an, bn}, fn));
}

Variable mul(const Variable &a, const Variable &b) {
  OLAF_CHECK(a.value().same_shape(b.value()), ShapeError,
             "mul: shape mismatch %s vs %s", shape_str(a.shape()).c_str(),
             shape_str(b.shape()).c_str());
  Tensor y(a.value().shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  auto fn = [an, bn](Node &self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i)
        an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t i = 0; i < self.grad.numel(); ++i)
        bn->grad[i] += self.grad[i] * an->value[i];
    }
  };
  return Variable::from_node(make_node(std::move(y), {an, bn}, fn));
}

Variable mul_scalar(const Variable &a, double s) {
  Tensor y(a.value().shape());
  for (int64_t i = 0; i < y.numel(); ++i) y[i] = a.value()[i] * s;
  auto an = a.node();
  auto fn = [an, s](Node &self) {
    an->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      an->grad[i] += self.grad[i] * s;
  };
  return Variable::from_node(make_node(std::move(y), {an}, fn));
}

Variable sum(const Variable &x) {
  double s = 0.0;
  for (int64_t i = 0; i < x.value().numel(); ++i) s += x.value()[i];
  Tensor y({1});
  y[0] = s;
  auto xn = x.node();
  auto fn = [xn](Node &self) {
    xn->ensure_grad();
    const double g = self.grad[0];
    for (int64_t i = 0; i < xn->grad.numel(); ++i) xn->grad[i] += g;
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable global_avg_pool(const Variable &x) {
  const Tensor &xv = x.value();
  OLAF_CHECK(xv.rank() == 4, ShapeError, "global_avg_pool: expected NCHW");
  const int64_t n = xv.dim(0), c = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  Tensor y({n, c, 1, 1});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *p = xv.data() + (b * c + ch) * plane;
      double s = 0.0;
      for (int64_t i = 0; i < plane; ++i) s += p[i];
      y[b * c + ch] = s / static_cast<double>(plane);
    }
  auto xn = x.node();
  auto fn = [xn, n, c, plane](Node &self) {
    xn->ensure_grad();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t ch = 0; ch < c; ++ch) {
        const double g = self.grad[b * c + ch] / static_cast<double>(plane);
        double *p = xn->grad.data() + (b * c + ch) * plane;
        for (int64_t i = 0; i < plane; ++i) p[i] += g;
      }
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable broadcast_spatial(const Variable &x, int64_t h, int64_t w) {
  const Tensor &xv = x.value();
  OLAF_CHECK(xv.rank() == 4 && xv.dim(2) == 1 && xv.dim(3) == 1, ShapeError,
             "broadcast_spatial: expected [n,c,1,1], got %s",
             shape_str(xv.shape()).c_str());
  const int64_t n = xv.dim(0), c = xv.dim(1), plane = h * w;
  Tensor y({n, c, h, w});
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double v = xv[b * c + ch];
      double *p = y.data() + (b * c + ch) * plane;
      for (int64_t i = 0; i < plane; ++i) p[i] = v;
    }
  auto xn = x.node();
  auto fn = [xn, n, c, plane](Node &self) {
    xn->ensure_grad();
    for (int64_t b = 0; b < n; ++b)
      for (int64_t ch = 0; ch < c; ++ch) {
        const double *p = self.grad.data() + (b * c + ch) * plane;
        double s = 0.0;
        for (int64_t i = 0; i < plane; ++i) s += p[i];
        xn->grad[b * c + ch] += s;
      }
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable linear(const Variable &x, const Variable &w, const Variable &bias) {
  const Tensor &xv = x.value(), &wv = w.value();
  OLAF_CHECK(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1),
             ShapeError, "linear: %s x %s mismatch",
             shape_str(xv.shape()).c_str(), shape_str(wv.shape()).c_str());
  const int64_t rows = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  Tensor y({rows, out});
  kernels::matmul(xv.data(), wv.data(), y.data(), rows, out, in, false, true,
                  false);
  if (bias.defined()) {
    OLAF_CHECK(bias.value().numel() == out, ShapeError,
               "linear: bias size %lld != %lld",
               static_cast<long long>(bias.value().numel()),
               static_cast<long long>(out));
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t j = 0; j < out; ++j) y[r * out + j] += bias.value()[j];
  }
  auto xn = x.node(), wn = w.node(), bn = bias.node();
  auto fn = [xn, wn, bn, rows, in, out](Node &self) {
    const Tensor &g = self.grad;
    if (xn->requires_grad) {
      xn->ensure_grad();
      kernels::matmul(g.data(), wn->value.data(), xn->grad.data(), rows, in,
                      out, false, false, true);
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      kernels::matmul(g.data(), xn->value.data(), wn->grad.data(), out, in,
                      rows, true, false, true);
    }
    if (bn && bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < out; ++j) bn->grad[j] += g[r * out + j];
    }
  };
  return Variable::from_node(make_node(std::move(y), {xn, wn, bn}, fn));
}

Variable matmul(const Variable &a, const Variable &b) {
  const Tensor &av = a.value(), &bv = b.value();
  OLAF_CHECK(av.rank() == 2 && bv.rank() == 2 && av.dim(1) == bv.dim(0),
             ShapeError, "matmul: %s x %s mismatch",
             shape_str(av.shape()).c_str(), shape_str(bv.shape()).c_str());
  const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor y({m, n});
  kernels::matmul(av.data(), bv.data(), y.data(), m, n, k, false, false, false);
  auto an = a.node(), bn = b.node();
  auto fn = [an, bn, m, n, k](Node &self) {
    const Tensor &g = self.grad;
    if (an->requires_grad) {
      an->ensure_grad();
      kernels::matmul(g.data(), bn->value.data(), an->grad.data(), m, k, n,
                      false, true, true);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      kernels::matmul(an->value.data(), g.data(), bn->grad.data(), k, n, m,
                      true, false, true);
    }
  };
  return Variable::from_node(make_node(std::move(y), {an, bn}, fn));
}

Variable bmm(const Variable &a, const Variable &b) {
  const Tensor &av = a.value(), &bv = b.value();
  OLAF_CHECK(av.rank() == 3 && bv.rank() == 3 && av.dim(0) == bv.dim(0) &&
                 av.dim(2) == bv.dim(1),
             ShapeError, "bmm: %s x %s mismatch", shape_str(av.shape()).c_str(),
             shape_str(bv.shape()).c_str());
  const int64_t batch = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(2);
  Tensor y({batch, m, n});
  for (int64_t i = 0; i < batch; ++i)
    kernels::matmul(av.data() + i * m * k, bv.data() + i * k * n,
                    y.data() + i * m * n, m, n, k, false, false, false);
  auto an = a.node(), bn = b.node();
  auto fn = [an, bn, batch, m, n, k](Node &self) {
    const Tensor &g = self.grad;
    for (int64_t i = 0; i < batch; ++i) {
      if (an->requires_grad) {
        an->ensure_grad();
        kernels::matmul(g.data() + i * m * n, bn->value.data() + i * k * n,
                        an->grad.data() + i * m * k, m, k, n, false, true, true);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        kernels::matmul(an->value.data() + i * m * k, g.data() + i * m * n,
                        bn->grad.data() + i * k * n, k, n, m, true, false, true);
      }
    }
  };
  return Variable::from_node(make_node(std::move(y), {an, bn}, fn));
}

Variable reshape(const Variable &x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  auto xn = x.node();
  auto fn = [xn](Node &self) {
    xn->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      xn->grad[i] += self.grad[i];
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

namespace {

Tensor permute_tensor(const Tensor &x, const std::vector<int> &perm) {
  const int r = x.rank();
  OLAF_CHECK(static_cast<int>(perm.size()) == r, ShapeError,
             "permute: %zu axes for rank-%d tensor", perm.size(), r);
  Shape in = x.shape(), out(static_cast<size_t>(r));
  std::vector<int64_t> in_strides(static_cast<size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i)
    in_strides[static_cast<size_t>(i)] =
        in_strides[static_cast<size_t>(i + 1)] * in[static_cast<size_t>(i + 1)];
  std::vector<int64_t> src_stride(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int p = perm[static_cast<size_t>(i)];
    OLAF_CHECK(p >= 0 && p < r, ShapeError, "permute: axis %d out of range", p);
    out[static_cast<size_t>(i)] = in[static_cast<size_t>(p)];
    src_stride[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(p)];
  }
  Tensor y(out);
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  int64_t src = 0;
  const int64_t total = y.numel();
  for (int64_t o = 0; o < total; ++o) {
    y[o] = x[src];
    for (int ax = r - 1; ax >= 0; --ax) {
      auto a = static_cast<size_t>(ax);
      ++idx[a];
      src += src_stride[a];
      if (idx[a] < out[a]) break;
      src -= src_stride[a] * out[a];
      idx[a] = 0;
    }
  }
  return y;
}

} // namespace

Variable permute(const Variable &x, std::vector<int> perm) {
  Tensor y = permute_tensor(x.value(), perm);
  std::vector<int> inv(perm.size());
  for (size_t i = 0; i < perm.size(); ++i)
    inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
  auto xn = x.node();
  auto fn = [xn, inv](Node &self) {
    Tensor g = permute_tensor(self.grad, inv);
    accumulate(xn, g);
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable softmax_lastdim(const Variable &x) {
  const Tensor &xv = x.value();
  OLAF_CHECK(xv.rank() >= 1, ShapeError, "softmax_lastdim: scalar input");
  const int64_t d = xv.dim(xv.rank() - 1);
  const int64_t rows = xv.numel() / d;
  Tensor y(xv.shape());
  kernels::softmax_lastdim_forward(xv.data(), y.data(), rows, d);
  auto xn = x.node();
  // Backward needs the forward output; share it with the node's value.
  auto fn = [xn, rows, d](Node &self) {
    xn->ensure_grad();
    kernels::softmax_lastdim_backward(self.value.data(), self.grad.data(),
                                      xn->grad.data(), rows, d);
  };
  return Variable::from_node(make_node(std::move(y), {xn}, fn));
}

Variable layer_norm(const Variable &x, const Variable &gamma,
                    const Variable &beta, double eps) {
  const Tensor &xv = x.value();
  const int64_t d = xv.dim(xv.rank() - 1);
  const int64_t rows = xv.numel() / d;
  OLAF_CHECK(gamma.value().numel() == d && beta.value().numel() == d, ShapeError,
             "layer_norm: parameter size mismatch for width %lld",
             static_cast<long long>(d));
  Tensor y(xv.shape());
  auto mean = std::make_shared<Tensor>(Shape{rows});
  auto rstd = std::make_shared<Tensor>(Shape{rows});
  kernels::layernorm_forward(xv.data(), gamma.value().data(),
                             beta.value().data(), eps, y.data(), mean->data(),
                             rstd->data(), rows, d);
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  auto fn = [xn, gn, bn, mean, rstd, rows, d](Node &self) {
    xn->ensure_grad();
    gn->ensure_grad();
    bn->ensure_grad();
    kernels::layernorm_backward(xn->value.data(), self.grad.data(),
                                gn->value.data(), mean->data(), rstd->data(),
                                xn->grad.data(), gn->grad.data(),
                                bn->grad.data(), rows, d);
  };
  return Variable::from_node(make_node(std::move(y), {xn, gn, bn}, fn));
}

Variable cross_entropy_logits(const Variable &logits, const Tensor &targets) {
  const Tensor &lv = logits.value();
  OLAF_CHECK(lv.rank() == 4, ShapeError, "cross_entropy: expected NCHW logits");
  const int64_t n = lv.dim(0), kcls = lv.dim(1), h = lv.dim(2), w = lv.dim(3);
  OLAF_CHECK(targets.rank() == 3 && targets.dim(0) == n && targets.dim(1) == h &&
                 targets.dim(2) == w,
             ShapeError, "cross_entropy: target shape %s for logits %s",
             shape_str(targets.shape()).c_str(), shape_str(lv.shape()).c_str());

  auto tgt = std::make_shared<std::vector<int32_t>>(
      static_cast<size_t>(targets.numel()));
  for (int64_t i = 0; i < targets.numel(); ++i) {
    auto t = static_cast<int64_t>(targets[i]);
    OLAF_CHECK(t >= 0 && t < kcls, DataError,
               "cross_entropy: target %lld outside [0,%lld)",
               static_cast<long long>(t), static_cast<long long>(kcls));
    (*tgt)[static_cast<size_t>(i)] = static_cast<int32_t>(t);
  }

  auto probs = std::make_shared<Tensor>(lv.shape());
  const double total = kernels::cross_entropy_forward(
      lv.data(), tgt->data(), probs->data(), n, kcls, h, w);
  const double inv_count = 1.0 / static_cast<double>(n * h * w);
  Tensor y({1});
  y[0] = total * inv_count;

  auto ln = logits.node();
  auto fn = [ln, tgt, probs, inv_count, n, kcls, h, w](Node &self) {
    ln->ensure_grad();
    kernels::cross_entropy_backward(probs->data(), tgt->data(),
                                    self.grad[0] * inv_count, ln->grad.data(),
                                    n, kcls, h, w);
  };
  return Variable::from_node(make_node(std::move(y), {ln}, fn));
}

} // namespace olaf::autograd
