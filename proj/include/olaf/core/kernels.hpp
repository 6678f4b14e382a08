// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#if defined(__GNUC__) || defined(__clang__)
#define OLAF_RESTRICT __restrict__
#else
#define OLAF_RESTRICT
#endif

namespace olaf::kernels {

/// Which implementation the dispatching entry points use. The serial
/// backend is the reference implementation; the parallel backend carries
/// the OpenMP kernels. Parallel kernels assign every output element to
/// exactly one thread and keep per-element reduction order fixed, so
/// results are bitwise identical for any thread count.
enum class Backend { parallel, serial };

Backend backend();
void set_backend(Backend b);

/// Convolution geometry (NCHW activations, [cout,cin,kh,kw] weights).
struct ConvDims {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw;
  int64_t stride = 1, pad = 0, dil = 1;

  int64_t out_h() const { return (h + 2 * pad - dil * (kh - 1) - 1) / stride + 1; }
  int64_t out_w() const { return (w + 2 * pad - dil * (kw - 1) - 1) / stride + 1; }
};

// Backward kernels accumulate (+=) into their output buffers; callers zero
// the buffers on allocation. Forward kernels overwrite.

namespace par {
void conv2d_forward(const double *x, const double *w, const double *bias,
                    double *y, const ConvDims &d);
void conv2d_backward_input(const double *dy, const double *w, double *dx,
                           const ConvDims &d);
void conv2d_backward_params(const double *dy, const double *x, double *dw,
                            double *db, const ConvDims &d);

void bn2d_stats(const double *x, int64_t n, int64_t c, int64_t h, int64_t w,
                double *mean, double *var);
void bn2d_forward(const double *x, const double *mean, const double *var,
                  const double *gamma, const double *beta, double eps,
                  double *y, int64_t n, int64_t c, int64_t h, int64_t w);
void bn2d_backward(const double *x, const double *dy, const double *mean,
                   const double *var, const double *gamma, double eps,
                   bool batch_stats, double *dx, double *dgamma, double *dbeta,
                   int64_t n, int64_t c, int64_t h, int64_t w);

void relu_forward(const double *x, double *y, int64_t numel);
void relu_backward(const double *x, const double *dy, double *dx, int64_t numel);

void maxpool2d_forward(const double *x, double *y, int64_t *argmax, int64_t n,
                       int64_t c, int64_t h, int64_t w, int64_t k);
void maxpool2d_backward(const double *dy, const int64_t *argmax, double *dx,
                        int64_t n, int64_t c, int64_t h, int64_t w, int64_t k);

void avgpool2d_forward(const double *x, double *y, int64_t n, int64_t c,
                       int64_t h, int64_t w, int64_t k);
void avgpool2d_backward(const double *dy, double *dx, int64_t n, int64_t c,
                        int64_t h, int64_t w, int64_t k);

void upsample_nearest_forward(const double *x, double *y, int64_t n, int64_t c,
                              int64_t h, int64_t w, int64_t f);
void upsample_nearest_backward(const double *dy, double *dx, int64_t n,
                               int64_t c, int64_t h, int64_t w, int64_t f);
void upsample_bilinear_forward(const double *x, double *y, int64_t n, int64_t c,
                               int64_t h, int64_t w, int64_t f);
void upsample_bilinear_backward(const double *dy, double *dx, int64_t n,
                                int64_t c, int64_t h, int64_t w, int64_t f);

/// C[m,n] = op(A)·op(B) with op controlled by the transpose flags.
/// A is [m,k] (or [k,m] when trans_a), B is [k,n] (or [n,k] when trans_b).
void matmul(const double *a, const double *b, double *c, int64_t m, int64_t n,
            int64_t k, bool trans_a, bool trans_b, bool accumulate);

void softmax_lastdim_forward(const double *x, double *y, int64_t rows, int64_t d);
void softmax_lastdim_backward(const double *y, const double *dy, double *dx,
                              int64_t rows, int64_t d);

void layernorm_forward(const double *x, const double *gamma, const double *beta,
                       double eps, double *y, double *mean, double *rstd,
                       int64_t rows, int64_t d);
void layernorm_backward(const double *x, const double *dy, const double *gamma,
                        const double *mean, const double *rstd, double *dx,
                        double *dgamma, double *dbeta, int64_t rows, int64_t d);

/// Pixelwise softmax cross-entropy over NCHW logits with integer targets
/// [n,h,w]. Returns the summed loss; probs caches softmax for backward.
double cross_entropy_forward(const double *logits, const int32_t *targets,
                             double *probs, int64_t n, int64_t kcls, int64_t h,
                             int64_t w);
void cross_entropy_backward(const double *probs, const int32_t *targets,
                            double scale, double *dlogits, int64_t n,
                            int64_t kcls, int64_t h, int64_t w);
} // namespace par

namespace seq {
void conv2d_forward(const double *x, const double *w, const double *bias,
                    double *y, const ConvDims &d);
void conv2d_backward_input(const double *dy, const double *w, double *dx,
                           const ConvDims &d);
void conv2d_backward_params(const double *dy, const double *x, double *dw,
                            double *db, const ConvDims &d);

void bn2d_stats(const double *x, int64_t n, int64_t c, int64_t h, int64_t w,
                double *mean, double *var);
void bn2d_forward(const double *x, const double *mean, const double *var,
                  const double *gamma, const double *beta, double eps,
                  double *y, int64_t n, int64_t c, int64_t h, int64_t w);
void bn2d_backward(const double *x, const double *dy, const double *mean,
                   const double *var, const double *gamma, double eps,
                   bool batch_stats, double *dx, double *dgamma, double *dbeta,
                   int64_t n, int64_t c, int64_t h, int64_t w);

void relu_forward(const double *x, double *y, int64_t numel);
void relu_backward(const double *x, const double *dy, double *dx, int64_t numel);

void maxpool2d_forward(const double *x, double *y, int64_t *argmax, int64_t n,
                       int64_t c, int64_t h, int64_t w, int64_t k);
void maxpool2d_backward(const double *dy, const int64_t *argmax, double *dx,
                        int64_t n, int64_t c, int64_t h, int64_t w, int64_t k);

void avgpool2d_forward(const double *x, double *y, int64_t n, int64_t c,
                       int64_t h, int64_t w, int64_t k);
void avgpool2d_backward(const double *dy, double *dx, int64_t n, int64_t c,
                        int64_t h, int64_t w, int64_t k);

void upsample_nearest_forward(const double *x, double *y, int64_t n, int64_t c,
                              int64_t h, int64_t w, int64_t f);
void upsample_nearest_backward(const double *dy, double *dx, int64_t n,
                               int64_t c, int64_t h, int64_t w, int64_t f);
void upsample_bilinear_forward(const double *x, double *y, int64_t n, int64_t c,
                               int64_t h, int64_t w, int64_t f);
void upsample_bilinear_backward(const double *dy, double *dx, int64_t n,
                                int64_t c, int64_t h, int64_t w, int64_t f);

void matmul(const double *a, const double *b, double *c, int64_t m, int64_t n,
            int64_t k, bool trans_a, bool trans_b, bool accumulate);

void softmax_lastdim_forward(const double *x, double *y, int64_t rows, int64_t d);
void softmax_lastdim_backward(const double *y, const double *dy, double *dx,
                              int64_t rows, int64_t d);

void layernorm_forward(const double *x, const double *gamma, const double *beta,
                       double eps, double *y, double *mean, double *rstd,
                       int64_t rows, int64_t d);
void layernorm_backward(const double *x, const double *dy, const double *gamma,
                        const double *mean, const double *rstd, double *dx,
                        double *dgamma, double *dbeta, int64_t rows, int64_t d);

double cross_entropy_forward(const double *logits, const int32_t *targets,
                             double *probs, int64_t n, int64_t kcls, int64_t h,
                             int64_t w);
void cross_entropy_backward(const double *probs, const int32_t *targets,
                            double scale, double *dlogits, int64_t n,
                            int64_t kcls, int64_t h, int64_t w);
} // namespace seq

// Dispatching entry points; route to par:: or seq:: per backend().
void conv2d_forward(const double *x, const double *w, const double *bias,
                    double *y, const ConvDims &d);
void conv2d_backward_input(const double *dy, const double *w, double *dx,
                           const ConvDims &d);
void conv2d_backward_params(const double *dy, const double *x, double *dw,
                            double *db, const ConvDims &d);
void bn2d_stats(const double *x, int64_t n, int64_t c, int64_t h, int64_t w,
                double *mean, double *var);
void bn2d_forward(const double *x, const double *mean, const double *var,
                  const double *gamma, const double *beta, double eps,
                  double *y, int64_t n, int64_t c, int64_t h, int64_t w);
void bn2d_backward(const double *x, const double *dy, const double *mean,
                   const double *var, const double *gamma, double eps,
                   bool batch_stats, double *dx, double *dgamma, double *dbeta,
                   int64_t n, int64_t c, int64_t h, int64_t w);
void relu_forward(const double *x, double *y, int64_t numel);
void relu_backward(const double *x, const double *dy, double *dx, int64_t numel);
void maxpool2d_forward(const double *x, double *y, int64_t *argmax, int64_t n,
                       int64_t c, int64_t h, int64_t w, int64_t k);
void maxpool2d_backward(const double *dy, const int64_t *argmax, double *dx,
                        int64_t n, int64_t c, int64_t h, int64_t w, int64_t k);
void avgpool2d_forward(const double *x, double *y, int64_t n, int64_t c,
                       int64_t h, int64_t w, int64_t k);
void avgpool2d_backward(const double *dy, double *dx, int64_t n, int64_t c,
                        int64_t h, int64_t w, int64_t k);
void upsample_nearest_forward(const double *x, double *y, int64_t n, int64_t c,
                              int64_t h, int64_t w, int64_t f);
void upsample_nearest_backward(const double *dy, double *dx, int64_t n,
                               int64_t c, int64_t h, int64_t w, int64_t f);
void upsample_bilinear_forward(const double *x, double *y, int64_t n, int64_t c,
                               int64_t h, int64_t w, int64_t f);
void upsample_bilinear_backward(const double *dy, double *dx, int64_t n,
                                int64_t c, int64_t h, int64_t w, int64_t f);
void matmul(const double *a, const double *b, double *c, int64_t m, int64_t n,
            int64_t k, bool trans_a, bool trans_b, bool accumulate);
void softmax_lastdim_forward(const double *x, double *y, int64_t rows, int64_t d);
void softmax_lastdim_backward(const double *y, const double *dy, double *dx,
                              int64_t rows, int64_t d);
void layernorm_forward(const double *x, const double *gamma, const double *beta,
                       double eps, double *y, double *mean, double *rstd,
                       int64_t rows, int64_t d);
void layernorm_backward(const double *x, const double *dy, const double *gamma,
                        const double *mean, const double *rstd, double *dx,
                        double *dgamma, double *dbeta, int64_t rows, int64_t d);
double cross_entropy_forward(const double *logits, const int32_t *targets,
                             double *probs, int64_t n, int64_t kcls, int64_t h,
                             int64_t w);
void cross_entropy_backward(const double *probs, const int32_t *targets,
                            double scale, double *dlogits, int64_t n,
                            int64_t kcls, int64_t h, int64_t w);

} // namespace olaf::kernels
