// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include "olaf/core/kernels.hpp"

#include <atomic>

namespace olaf::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
} // namespace

Backend backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

#define OLAF_DISPATCH(fn, ...)                \
  do {                                        \
    if (backend() == Backend::parallel)       \
      par::fn(__VA_ARGS__);                   \
    else                                      \
      seq::fn(__VA_ARGS__);                   \
  } while (0)

void conv2d_forward(const double *x, const double *w, const double *bias,
                    double *y, const ConvDims &d) {
  OLAF_DISPATCH(conv2d_forward, x, w, bias, y, d);
}

void conv2d_backward_input(const double *dy, const double *w, double *dx,
                           const ConvDims &d) {
  OLAF_DISPATCH(conv2d_backward_input, dy, w, dx, d);
}

void conv2d_backward_params(const double *dy, const double *x, double *dw,
                            double *db, const ConvDims &d) {
  OLAF_DISPATCH(conv2d_backward_params, dy, x, dw, db, d);
}

void bn2d_stats(const double *x, int64_t n, int64_t c, int64_t h, int64_t w,
                double *mean, double *var) {
  OLAF_DISPATCH(bn2d_stats, x, n, c, h, w, mean, var);
}

void bn2d_forward(const double *x, const double *mean, const double *var,
                  const double *gamma, const double *beta, double eps,
                  double *y, int64_t n, int64_t c, int64_t h, int64_t w) {
  OLAF_DISPATCH(bn2d_forward, x, mean, var, gamma, beta, eps, y, n, c, h, w);
}

void bn2d_backward(const double *x, const double *dy, const double *mean,
                   const double *var, const double *gamma, double eps,
                   bool batch_stats, double *dx, double *dgamma, double *dbeta,
                   int64_t n, int64_t c, int64_t h, int64_t w) {
  OLAF_DISPATCH(bn2d_backward, x, dy, mean, var, gamma, eps, batch_stats, dx,
                dgamma, dbeta, n, c, h, w);
}

void relu_forward(const double *x, double *y, int64_t numel) {
  OLAF_DISPATCH(relu_forward, x, y, numel);
}

void relu_backward(const double *x, const double *dy, double *dx, int64_t numel) {
  OLAF_DISPATCH(relu_backward, x, dy, dx, numel);
}

void maxpool2d_forward(const double *x, double *y, int64_t *argmax, int64_t n,
                       int64_t c, int64_t h, int64_t w, int64_t k) {
  OLAF_DISPATCH(maxpool2d_forward, x, y, argmax, n, c, h, w, k);
}

void maxpool2d_backward(const double *dy, const int64_t *argmax, double *dx,
                        int64_t n, int64_t c, int64_t h, int64_t w, int64_t k) {
  OLAF_DISPATCH(maxpool2d_backward, dy, argmax, dx, n, c, h, w, k);
}

void avgpool2d_forward(const double *x, double *y, int64_t n, int64_t c,
                       int64_t h, int64_t w, int64_t k) {
  OLAF_DISPATCH(avgpool2d_forward, x, y, n, c, h, w, k);
}

void avgpool2d_backward(const double *dy, double *dx, int64_t n, int64_t c,
                        int64_t h, int64_t w, int64_t k) {
  OLAF_DISPATCH(avgpool2d_backward, dy, dx, n, c, h, w, k);
}

void upsample_nearest_forward(const double *x, double *y, int64_t n, int64_t c,
                              int64_t h, int64_t w, int64_t f) {
  OLAF_DISPATCH(upsample_nearest_forward, x, y, n, c, h, w, f);
}

void upsample_nearest_backward(const double *dy, double *dx, int64_t n,
                               int64_t c, int64_t h, int64_t w, int64_t f) {
  OLAF_DISPATCH(upsample_nearest_backward, dy, dx, n, c, h, w, f);
}

void upsample_bilinear_forward(const double *x, double *y, int64_t n, int64_t c,
                               int64_t h, int64_t w, int64_t f) {
  OLAF_DISPATCH(upsample_bilinear_forward, x, y, n, c, h, w, f);
}

void upsample_bilinear_backward(const double *dy, double *dx, int64_t n,
                                int64_t c, int64_t h, int64_t w, int64_t f) {
  OLAF_DISPATCH(upsample_bilinear_backward, dy, dx, n, c, h, w, f);
}

void matmul(const double *a, const double *b, double *c, int64_t m, int64_t n,
            int64_t k, bool trans_a, bool trans_b, bool accumulate) {
  OLAF_DISPATCH(matmul, a, b, c, m, n, k, trans_a, trans_b, accumulate);
}

void softmax_lastdim_forward(const double *x, double *y, int64_t rows, int64_t d) {
  OLAF_DISPATCH(softmax_lastdim_forward, x, y, rows, d);
}

void softmax_lastdim_backward(const double *y, const double *dy, double *dx,
                              int64_t rows, int64_t d) {
  OLAF_DISPATCH(softmax_lastdim_backward, y, dy, dx, rows, d);
}

void layernorm_forward(const double *x, const double *gamma, const double *beta,
                       double eps, double *y, double *mean, double *rstd,
                       int64_t rows, int64_t d) {
  OLAF_DISPATCH(layernorm_forward, x, gamma, beta, eps, y, mean, rstd, rows, d);
}

void layernorm_backward(const double *x, const double *dy, const double *gamma,
                        const double *mean, const double *rstd, double *dx,
                        double *dgamma, double *dbeta, int64_t rows, int64_t d) {
  OLAF_DISPATCH(layernorm_backward, x, dy, gamma, mean, rstd, dx, dgamma,
                dbeta, rows, d);
}

double cross_entropy_forward(const double *logits, const int32_t *targets,
                             double *probs, int64_t n, int64_t kcls, int64_t h,
                             int64_t w) {
  if (backend() == Backend::parallel)
    return par::cross_entropy_forward(logits, targets, probs, n, kcls, h, w);
  return seq::cross_entropy_forward(logits, targets, probs, n, kcls, h, w);
}

void cross_entropy_backward(const double *probs, const int32_t *targets,
                            double scale, double *dlogits, int64_t n,
                            int64_t kcls, int64_t h, int64_t w) {
  OLAF_DISPATCH(cross_entropy_backward, probs, targets, scale, dlogits, n,
                kcls, h, w);
}

#undef OLAF_DISPATCH

} // namespace olaf::kernels
