// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
//
// OpenMP kernels. Every output element is written by exactly one loop
// iteration and all reductions run in a fixed serial order inside their
// owning thread, so results are bitwise identical for any thread count
// and match the serial reference kernels exactly.

#include <algorithm>
#include <cmath>
#include <vector>

#include "olaf/core/kernels.hpp"

namespace olaf::kernels::par {

namespace {

// Accumulates one convolution tap into an output row over the valid
// column range: y[j] += wv * x[j * stride + off] for j in [j_lo, j_hi).
inline void tap_axpy(double *OLAF_RESTRICT yrow, const double *OLAF_RESTRICT xrow,
                     double wv, int64_t off, int64_t stride, int64_t ow,
                     int64_t w) {
  if (stride == 1) {
    int64_t j_lo = std::max<int64_t>(0, -off);
    int64_t j_hi = std::min<int64_t>(ow, w - off);
    const double *xs = xrow + off;
    for (int64_t j = j_lo; j < j_hi; ++j) yrow[j] += wv * xs[j];
  } else {
    for (int64_t j = 0; j < ow; ++j) {
      int64_t iw = j * stride + off;
      if (iw >= 0 && iw < w) yrow[j] += wv * xrow[iw];
    }
  }
}

// Direct (tap-by-tap) convolution; used for shapes too small to repay
// the im2col transform.
void conv2d_forward_direct(const double *x, const double *w,
                           const double *bias, double *y, const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w();
  const bool fast3 = d.stride == 1 && d.dil == 1 && d.kw == 3;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t oc = 0; oc < d.cout; ++oc) {
      double *yp = y + ((n * d.cout + oc) * oh) * ow;
      const double bv = bias ? bias[oc] : 0.0;
      for (int64_t i = 0; i < oh * ow; ++i) yp[i] = bv;
      for (int64_t ic = 0; ic < d.cin; ++ic) {
        const double *xp = x + ((n * d.cin + ic) * d.h) * d.w;
        const double *wp = w + ((oc * d.cin + ic) * d.kh) * d.kw;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
          const double *wr = wp + ki * d.kw;
          for (int64_t i = 0; i < oh; ++i) {
            int64_t ih = i * d.stride - d.pad + ki * d.dil;
            if (ih < 0 || ih >= d.h) continue;
            const double *xrow = xp + ih * d.w;
            double *yrow = yp + i * ow;
            if (fast3) {
              // Fused three-tap row update; scalar edges, vector interior.
              const double w0 = wr[0], w1 = wr[1], w2 = wr[2];
              const double *xs = xrow - d.pad;
              int64_t jA = std::min<int64_t>(ow, std::max<int64_t>(0, d.pad));
              int64_t jB = std::max<int64_t>(
                  jA, std::min<int64_t>(ow, d.w + d.pad - 2));
              for (int64_t j = 0; j < jA; ++j)
                for (int64_t t = 0; t < 3; ++t) {
                  int64_t iw = j - d.pad + t;
                  if (iw >= 0 && iw < d.w) yrow[j] += wr[t] * xrow[iw];
                }
              for (int64_t j = jA; j < jB; ++j)
                yrow[j] += w0 * xs[j] + w1 * xs[j + 1] + w2 * xs[j + 2];
              for (int64_t j = jB; j < ow; ++j)
                for (int64_t t = 0; t < 3; ++t) {
                  int64_t iw = j - d.pad + t;
                  if (iw >= 0 && iw < d.w) yrow[j] += wr[t] * xrow[iw];
                }
            } else {
              for (int64_t kj = 0; kj < d.kw; ++kj)
                tap_axpy(yrow, xrow, wr[kj], kj * d.dil - d.pad, d.stride, ow,
                         d.w);
            }
          }
        }
      }
    }
}

void conv2d_backward_input_direct(const double *dy, const double *w,
                                  double *dx, const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t ic = 0; ic < d.cin; ++ic) {
      double *dxp = dx + ((n * d.cin + ic) * d.h) * d.w;
      for (int64_t oc = 0; oc < d.cout; ++oc) {
        const double *dyp = dy + ((n * d.cout + oc) * oh) * ow;
        const double *wp = w + ((oc * d.cin + ic) * d.kh) * d.kw;
        for (int64_t ki = 0; ki < d.kh; ++ki) {
          const double *wr = wp + ki * d.kw;
          for (int64_t i = 0; i < oh; ++i) {
            int64_t ih = i * d.stride - d.pad + ki * d.dil;
            if (ih < 0 || ih >= d.h) continue;
            const double *dyrow = dyp + i * ow;
            double *dxrow = dxp + ih * d.w;
            if (d.stride == 1) {
              for (int64_t kj = 0; kj < d.kw; ++kj) {
                // dx[iw] += dy[iw + pad - kj*dil] * w, gathered per tap.
                int64_t off = d.pad - kj * d.dil;
                int64_t lo = std::max<int64_t>(0, -off);
                int64_t hi = std::min<int64_t>(d.w, ow - off);
                const double wv = wr[kj];
                const double *ds = dyrow + off;
                for (int64_t iw = lo; iw < hi; ++iw) dxrow[iw] += wv * ds[iw];
              }
            } else {
              for (int64_t kj = 0; kj < d.kw; ++kj) {
                const double wv = wr[kj];
                for (int64_t j = 0; j < ow; ++j) {
                  int64_t iw = j * d.stride - d.pad + kj * d.dil;
                  if (iw >= 0 && iw < d.w) dxrow[iw] += wv * dyrow[j];
                }
              }
            }
          }
        }
      }
    }
}

void conv2d_backward_params_direct(const double *dy, const double *x,
                                   double *dw, double *db, const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w();
#pragma omp parallel for schedule(static)
  for (int64_t oc = 0; oc < d.cout; ++oc) {
    double *dwp = dw + ((oc * d.cin) * d.kh) * d.kw;
    double dbsum = 0.0;
    for (int64_t n = 0; n < d.n; ++n) {
      const double *dyp = dy + ((n * d.cout + oc) * oh) * ow;
      if (db) {
        const int64_t total = oh * ow;
#pragma omp simd reduction(+ : dbsum)
        for (int64_t i = 0; i < total; ++i) dbsum += dyp[i];
      }
      for (int64_t ic = 0; ic < d.cin; ++ic) {
        const double *xp = x + ((n * d.cin + ic) * d.h) * d.w;
        for (int64_t ki = 0; ki < d.kh; ++ki)
          for (int64_t kj = 0; kj < d.kw; ++kj) {
            double acc = 0.0;
            for (int64_t i = 0; i < oh; ++i) {
              int64_t ih = i * d.stride - d.pad + ki * d.dil;
              if (ih < 0 || ih >= d.h) continue;
              const double *dyrow = dyp + i * ow;
              const double *xrow = xp + ih * d.w;
              if (d.stride == 1) {
                int64_t off = kj * d.dil - d.pad;
                int64_t j_lo = std::max<int64_t>(0, -off);
                int64_t j_hi = std::min<int64_t>(ow, d.w - off);
                const double *xs = xrow + off;
                // simd reduction order is fixed at compile time, so the
                // result stays reproducible run to run.
#pragma omp simd reduction(+ : acc)
                for (int64_t j = j_lo; j < j_hi; ++j) acc += dyrow[j] * xs[j];
              } else {
                for (int64_t j = 0; j < ow; ++j) {
                  int64_t iw = j * d.stride - d.pad + kj * d.dil;
                  if (iw >= 0 && iw < d.w) acc += dyrow[j] * xrow[iw];
                }
              }
            }
            dwp[(ic * d.kh + ki) * d.kw + kj] += acc;
          }
      }
    }
    if (db) db[oc] += dbsum;
  }
}

// Lays out output pixels [p_begin, p_end) of one image as a patch matrix:
// colT[p - p_begin][ic*kh*kw + ki*kw + kj] holds the input tap feeding
// output pixel p, with zeros where the tap falls in padding. Column order
// matches the flattened weight layout.
void im2col(const double *xp, int64_t cin, int64_t h, int64_t w, int64_t kh,
            int64_t kw, int64_t stride, int64_t pad, int64_t dil, int64_t ow,
            int64_t p_begin, int64_t p_end, double *colT) {
  const int64_t K = cin * kh * kw;
#pragma omp parallel for schedule(static)
  for (int64_t p = p_begin; p < p_end; ++p) {
    const int64_t i = p / ow, j = p % ow;
    double *row = colT + (p - p_begin) * K;
    for (int64_t ic = 0; ic < cin; ++ic) {
      const double *xc = xp + ic * h * w;
      for (int64_t ki = 0; ki < kh; ++ki) {
        double *taps = row + (ic * kh + ki) * kw;
        const int64_t ih = i * stride - pad + ki * dil;
        if (ih < 0 || ih >= h) {
          for (int64_t kj = 0; kj < kw; ++kj) taps[kj] = 0.0;
          continue;
        }
        const double *xrow = xc + ih * w;
        for (int64_t kj = 0; kj < kw; ++kj) {
          const int64_t iw = j * stride - pad + kj * dil;
          taps[kj] = (iw >= 0 && iw < w) ? xrow[iw] : 0.0;
        }
      }
    }
  }
}

// yT[p][0..width) += sum over rows j of colT[p][j] * wT[j][0..width).
// Rows are consumed in ascending j so each output element accumulates in
// the same order as the direct loops; j is unrolled by four to cut yT
// traffic without reordering the additions.
void gemm_rows_axpy(const double *colT, const double *wT, double *yT,
                    int64_t P, int64_t K, int64_t width) {
#pragma omp parallel for schedule(static)
  for (int64_t p = 0; p < P; ++p) {
    const double *crow = colT + p * K;
    double *OLAF_RESTRICT yrow = yT + p * width;
    int64_t j = 0;
    for (; j + 4 <= K; j += 4) {
      const double v0 = crow[j], v1 = crow[j + 1];
      const double v2 = crow[j + 2], v3 = crow[j + 3];
      const double *w0 = wT + j * width, *w1 = w0 + width;
      const double *w2 = w1 + width, *w3 = w2 + width;
      for (int64_t t = 0; t < width; ++t)
        yrow[t] += v0 * w0[t] + v1 * w1[t] + v2 * w2[t] + v3 * w3[t];
    }
    for (; j < K; ++j) {
      const double v = crow[j];
      const double *wrow = wT + j * width;
      for (int64_t t = 0; t < width; ++t) yrow[t] += v * wrow[t];
    }
  }
}

// The patch matrix pays off while it stays cache-resident and the inner
// update rows are wide enough to vectorize; pointwise kernels need wider
// channel counts since their transform is a pure copy.
constexpr int64_t kGemmFootprint = 192 * 1024;

bool gemm_worthwhile_fwd(const ConvDims &d) {
  const int64_t K = d.cin * d.kh * d.kw;
  const int64_t P = d.out_h() * d.out_w();
  if (P < 64 || K < 24 || d.cout < 8) return false;
  if (d.kh * d.kw == 1) return d.cin >= 96 && d.cout >= 24;
  return P * K <= kGemmFootprint;
}

void conv2d_forward_gemm(const double *x, const double *w, const double *bias,
                         double *y, const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w(), P = oh * ow;
  const int64_t K = d.cin * d.kh * d.kw;
  std::vector<double> colT(P * K), yT(P * d.cout), wT(K * d.cout);
  for (int64_t oc = 0; oc < d.cout; ++oc)
    for (int64_t j = 0; j < K; ++j) wT[j * d.cout + oc] = w[oc * K + j];
  for (int64_t n = 0; n < d.n; ++n) {
    im2col(x + n * d.cin * d.h * d.w, d.cin, d.h, d.w, d.kh, d.kw, d.stride,
           d.pad, d.dil, ow, 0, P, colT.data());
    std::fill(yT.begin(), yT.end(), 0.0);
    gemm_rows_axpy(colT.data(), wT.data(), yT.data(), P, K, d.cout);
#pragma omp parallel for schedule(static)
    for (int64_t oc = 0; oc < d.cout; ++oc) {
      double *yp = y + ((n * d.cout + oc) * oh) * ow;
      const double bv = bias ? bias[oc] : 0.0;
      for (int64_t p = 0; p < P; ++p) yp[p] = yT[p * d.cout + oc] + bv;
    }
  }
}

// For stride 1 the input gradient is itself a convolution: correlate dy
// (padded by (k-1)*dil - pad) with the spatially flipped, transposed
// kernel. That reuses the forward GEMM and keeps every dx element owned
// by a single row.
void conv2d_backward_input_gemm(const double *dy, const double *w, double *dx,
                                const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w(), P = d.h * d.w;
  const int64_t Kb = d.cout * d.kh * d.kw;
  const int64_t pad_b = (d.kh - 1) * d.dil - d.pad;
  std::vector<double> wT(Kb * d.cin), colT(P * Kb), dxT(P * d.cin);
  for (int64_t oc = 0; oc < d.cout; ++oc)
    for (int64_t ic = 0; ic < d.cin; ++ic)
      for (int64_t ki = 0; ki < d.kh; ++ki)
        for (int64_t kj = 0; kj < d.kw; ++kj)
          wT[(((oc * d.kh + ki) * d.kw + kj) * d.cin) + ic] =
              w[((oc * d.cin + ic) * d.kh + (d.kh - 1 - ki)) * d.kw +
                (d.kw - 1 - kj)];
  for (int64_t n = 0; n < d.n; ++n) {
    im2col(dy + n * d.cout * oh * ow, d.cout, oh, ow, d.kh, d.kw, 1, pad_b,
           d.dil, d.w, 0, P, colT.data());
    std::fill(dxT.begin(), dxT.end(), 0.0);
    gemm_rows_axpy(colT.data(), wT.data(), dxT.data(), P, Kb, d.cin);
    double *dxn = dx + n * d.cin * P;
#pragma omp parallel for schedule(static)
    for (int64_t ic = 0; ic < d.cin; ++ic) {
      double *dxc = dxn + ic * P;
      for (int64_t p = 0; p < P; ++p) dxc[p] += dxT[p * d.cin + ic];
    }
  }
}

void conv2d_backward_params_gemm(const double *dy, const double *x, double *dw,
                                 double *db, const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w(), P = oh * ow;
  const int64_t K = d.cin * d.kh * d.kw;
  // Pixels are processed in tiles small enough that the patch matrix
  // stays cache-resident across all output-channel passes.
  const int64_t tile = std::max<int64_t>(1, std::min(P, 49152 / K));
  std::vector<double> colT(tile * K);
  for (int64_t n = 0; n < d.n; ++n) {
    const double *dyn = dy + n * d.cout * P;
    for (int64_t p0 = 0; p0 < P; p0 += tile) {
      const int64_t rows = std::min(tile, P - p0);
      im2col(x + n * d.cin * d.h * d.w, d.cin, d.h, d.w, d.kh, d.kw,
             d.stride, d.pad, d.dil, ow, p0, p0 + rows, colT.data());
      // Output channels go in pairs so each pass over the patch matrix
      // feeds two weight rows; per row the pixel order stays ascending,
      // matching the direct loops.
#pragma omp parallel for schedule(static)
      for (int64_t ob = 0; ob < (d.cout + 1) / 2; ++ob) {
        const int64_t oc = 2 * ob;
        const bool pair = oc + 1 < d.cout;
        const double *dy0 = dyn + oc * P + p0;
        const double *dy1 = pair ? dy0 + P : dy0;
        double *OLAF_RESTRICT dw0 = dw + oc * K;
        double *OLAF_RESTRICT dw1 = pair ? dw0 + K : dw0;
        int64_t p = 0;
        for (; pair && p + 2 <= rows; p += 2) {
          const double g00 = dy0[p], g01 = dy0[p + 1];
          const double g10 = dy1[p], g11 = dy1[p + 1];
          const double *c0 = colT.data() + p * K, *c1 = c0 + K;
          for (int64_t j = 0; j < K; ++j) {
            dw0[j] += g00 * c0[j] + g01 * c1[j];
            dw1[j] += g10 * c0[j] + g11 * c1[j];
          }
        }
        for (; p < rows; ++p) {
          const double g0 = dy0[p];
          const double g1 = dy1[p];
          const double *crow = colT.data() + p * K;
          for (int64_t j = 0; j < K; ++j) {
            dw0[j] += g0 * crow[j];
            if (pair) dw1[j] += g1 * crow[j];
          }
        }
      }
    }
    if (db) {
#pragma omp parallel for schedule(static)
      for (int64_t oc = 0; oc < d.cout; ++oc) {
        const double *dyp = dyn + oc * P;
        double dbsum = 0.0;
#pragma omp simd reduction(+ : dbsum)
        for (int64_t i = 0; i < P; ++i) dbsum += dyp[i];
        db[oc] += dbsum;
      }
    }
  }
}

} // namespace

namespace {

bool fused3x3_applies(const ConvDims &d) {
  return d.kh == 3 && d.kw == 3 && d.stride == 1 && d.dil == 1 &&
         d.pad == 1 && d.h >= 3 && d.w >= 3;
}

// Nine-tap fused plane update: all taps of one (oc, ic) pair applied in a
// single pass over interior rows, with the shortened-stencil borders handled
// explicitly. One pass per pair keeps every output element's update chain in
// registers instead of nine read-modify-write row sweeps.
void conv2d_forward_3x3(const double *x, const double *w, const double *bias,
                        double *y, const ConvDims &d) {
  const int64_t H = d.h, W = d.w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t oc = 0; oc < d.cout; ++oc) {
      double *yp = y + ((n * d.cout + oc) * H) * W;
      const double bv = bias ? bias[oc] : 0.0;
      for (int64_t i = 0; i < H * W; ++i) yp[i] = bv;
      for (int64_t ic = 0; ic < d.cin; ++ic) {
        const double *xp = x + ((n * d.cin + ic) * H) * W;
        const double *wp = w + ((oc * d.cin + ic) * 3) * 3;
        const double w00 = wp[0], w01 = wp[1], w02 = wp[2];
        const double w10 = wp[3], w11 = wp[4], w12 = wp[5];
        const double w20 = wp[6], w21 = wp[7], w22 = wp[8];
        for (int64_t i = 1; i + 1 < H; ++i) {
          const double *r0 = xp + (i - 1) * W;
          const double *r1 = xp + i * W;
          const double *r2 = xp + (i + 1) * W;
          double *OLAF_RESTRICT yr = yp + i * W;
          yr[0] += w01 * r0[0] + w02 * r0[1] + w11 * r1[0] + w12 * r1[1] +
                   w21 * r2[0] + w22 * r2[1];
          for (int64_t j = 1; j + 1 < W; ++j)
            yr[j] += w00 * r0[j - 1] + w01 * r0[j] + w02 * r0[j + 1] +
                     w10 * r1[j - 1] + w11 * r1[j] + w12 * r1[j + 1] +
                     w20 * r2[j - 1] + w21 * r2[j] + w22 * r2[j + 1];
          yr[W - 1] += w00 * r0[W - 2] + w01 * r0[W - 1] + w10 * r1[W - 2] +
                       w11 * r1[W - 1] + w20 * r2[W - 2] + w21 * r2[W - 1];
        }
        {
          const double *r1 = xp, *r2 = xp + W;
          double *OLAF_RESTRICT yr = yp;
          yr[0] += w11 * r1[0] + w12 * r1[1] + w21 * r2[0] + w22 * r2[1];
          for (int64_t j = 1; j + 1 < W; ++j)
            yr[j] += w10 * r1[j - 1] + w11 * r1[j] + w12 * r1[j + 1] +
                     w20 * r2[j - 1] + w21 * r2[j] + w22 * r2[j + 1];
          yr[W - 1] += w10 * r1[W - 2] + w11 * r1[W - 1] + w20 * r2[W - 2] +
                       w21 * r2[W - 1];
        }
        {
          const double *r0 = xp + (H - 2) * W, *r1 = xp + (H - 1) * W;
          double *OLAF_RESTRICT yr = yp + (H - 1) * W;
          yr[0] += w01 * r0[0] + w02 * r0[1] + w11 * r1[0] + w12 * r1[1];
          for (int64_t j = 1; j + 1 < W; ++j)
            yr[j] += w00 * r0[j - 1] + w01 * r0[j] + w02 * r0[j + 1] +
                     w10 * r1[j - 1] + w11 * r1[j] + w12 * r1[j + 1];
          yr[W - 1] += w00 * r0[W - 2] + w01 * r0[W - 1] + w10 * r1[W - 2] +
                       w11 * r1[W - 1];
        }
      }
    }
}

// Input gradient via the same fused stencil with the kernel rotated 180°:
// dx[i,j] += sum_{r,s} w[2-r,2-s] * dy[i+r-1, j+s-1].
void conv2d_backward_input_3x3(const double *dy, const double *w, double *dx,
                               const ConvDims &d) {
  const int64_t H = d.h, W = d.w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t ic = 0; ic < d.cin; ++ic) {
      double *dxp = dx + ((n * d.cin + ic) * H) * W;
      for (int64_t oc = 0; oc < d.cout; ++oc) {
        const double *gp = dy + ((n * d.cout + oc) * H) * W;
        const double *wp = w + ((oc * d.cin + ic) * 3) * 3;
        const double w00 = wp[8], w01 = wp[7], w02 = wp[6];
        const double w10 = wp[5], w11 = wp[4], w12 = wp[3];
        const double w20 = wp[2], w21 = wp[1], w22 = wp[0];
        for (int64_t i = 1; i + 1 < H; ++i) {
          const double *r0 = gp + (i - 1) * W;
          const double *r1 = gp + i * W;
          const double *r2 = gp + (i + 1) * W;
          double *OLAF_RESTRICT xr = dxp + i * W;
          xr[0] += w01 * r0[0] + w02 * r0[1] + w11 * r1[0] + w12 * r1[1] +
                   w21 * r2[0] + w22 * r2[1];
          for (int64_t j = 1; j + 1 < W; ++j)
            xr[j] += w00 * r0[j - 1] + w01 * r0[j] + w02 * r0[j + 1] +
                     w10 * r1[j - 1] + w11 * r1[j] + w12 * r1[j + 1] +
                     w20 * r2[j - 1] + w21 * r2[j] + w22 * r2[j + 1];
          xr[W - 1] += w00 * r0[W - 2] + w01 * r0[W - 1] + w10 * r1[W - 2] +
                       w11 * r1[W - 1] + w20 * r2[W - 2] + w21 * r2[W - 1];
        }
        {
          const double *r1 = gp, *r2 = gp + W;
          double *OLAF_RESTRICT xr = dxp;
          xr[0] += w11 * r1[0] + w12 * r1[1] + w21 * r2[0] + w22 * r2[1];
          for (int64_t j = 1; j + 1 < W; ++j)
            xr[j] += w10 * r1[j - 1] + w11 * r1[j] + w12 * r1[j + 1] +
                     w20 * r2[j - 1] + w21 * r2[j] + w22 * r2[j + 1];
          xr[W - 1] += w10 * r1[W - 2] + w11 * r1[W - 1] + w20 * r2[W - 2] +
                       w21 * r2[W - 1];
        }
        {
          const double *r0 = gp + (H - 2) * W, *r1 = gp + (H - 1) * W;
          double *OLAF_RESTRICT xr = dxp + (H - 1) * W;
          xr[0] += w01 * r0[0] + w02 * r0[1] + w11 * r1[0] + w12 * r1[1];
          for (int64_t j = 1; j + 1 < W; ++j)
            xr[j] += w00 * r0[j - 1] + w01 * r0[j] + w02 * r0[j + 1] +
                     w10 * r1[j - 1] + w11 * r1[j] + w12 * r1[j + 1];
          xr[W - 1] += w00 * r0[W - 2] + w01 * r0[W - 1] + w10 * r1[W - 2] +
                       w11 * r1[W - 1];
        }
      }
    }
}

// Weight gradient: nine running dot products between the dy plane and the
// shifted x rows, one pass per (oc, ic, image) triple. The omp simd
// reductions give the compiler leave to keep lane-partial sums.
void conv2d_backward_params_3x3(const double *dy, const double *x, double *dw,
                                double *db, const ConvDims &d) {
  const int64_t H = d.h, W = d.w, P = H * W;
#pragma omp parallel for schedule(static)
  for (int64_t oc = 0; oc < d.cout; ++oc) {
    for (int64_t ic = 0; ic < d.cin; ++ic) {
      double a00 = 0, a01 = 0, a02 = 0, a10 = 0, a11 = 0, a12 = 0, a20 = 0,
             a21 = 0, a22 = 0;
      for (int64_t n = 0; n < d.n; ++n) {
        const double *gp = dy + ((n * d.cout + oc) * P);
        const double *xp = x + ((n * d.cin + ic) * P);
        for (int64_t i = 1; i + 1 < H; ++i) {
          const double *r0 = xp + (i - 1) * W;
          const double *r1 = xp + i * W;
          const double *r2 = xp + (i + 1) * W;
          const double *g = gp + i * W;
#pragma omp simd reduction(+ : a00, a01, a02, a10, a11, a12, a20, a21, a22)
          for (int64_t j = 1; j < W - 1; ++j) {
            const double gv = g[j];
            a00 += gv * r0[j - 1];
            a01 += gv * r0[j];
            a02 += gv * r0[j + 1];
            a10 += gv * r1[j - 1];
            a11 += gv * r1[j];
            a12 += gv * r1[j + 1];
            a20 += gv * r2[j - 1];
            a21 += gv * r2[j];
            a22 += gv * r2[j + 1];
          }
          {
            const double gv = g[0];
            a01 += gv * r0[0];
            a02 += gv * r0[1];
            a11 += gv * r1[0];
            a12 += gv * r1[1];
            a21 += gv * r2[0];
            a22 += gv * r2[1];
          }
          {
            const double gv = g[W - 1];
            a00 += gv * r0[W - 2];
            a01 += gv * r0[W - 1];
            a10 += gv * r1[W - 2];
            a11 += gv * r1[W - 1];
            a20 += gv * r2[W - 2];
            a21 += gv * r2[W - 1];
          }
        }
        {
          const double *g = gp;
          const double *r1 = xp, *r2 = xp + W;
#pragma omp simd reduction(+ : a10, a11, a12, a20, a21, a22)
          for (int64_t j = 1; j < W - 1; ++j) {
            const double gv = g[j];
            a10 += gv * r1[j - 1];
            a11 += gv * r1[j];
            a12 += gv * r1[j + 1];
            a20 += gv * r2[j - 1];
            a21 += gv * r2[j];
            a22 += gv * r2[j + 1];
          }
          a11 += g[0] * r1[0];
          a12 += g[0] * r1[1];
          a21 += g[0] * r2[0];
          a22 += g[0] * r2[1];
          a10 += g[W - 1] * r1[W - 2];
          a11 += g[W - 1] * r1[W - 1];
          a20 += g[W - 1] * r2[W - 2];
          a21 += g[W - 1] * r2[W - 1];
        }
        {
          const double *g = gp + (H - 1) * W;
          const double *r0 = xp + (H - 2) * W, *r1 = xp + (H - 1) * W;
#pragma omp simd reduction(+ : a00, a01, a02, a10, a11, a12)
          for (int64_t j = 1; j < W - 1; ++j) {
            const double gv = g[j];
            a00 += gv * r0[j - 1];
            a01 += gv * r0[j];
            a02 += gv * r0[j + 1];
            a10 += gv * r1[j - 1];
            a11 += gv * r1[j];
            a12 += gv * r1[j + 1];
          }
          a01 += g[0] * r0[0];
          a02 += g[0] * r0[1];
          a11 += g[0] * r1[0];
          a12 += g[0] * r1[1];
          a00 += g[W - 1] * r0[W - 2];
          a01 += g[W - 1] * r0[W - 1];
          a10 += g[W - 1] * r1[W - 2];
          a11 += g[W - 1] * r1[W - 1];
        }
      }
      double *dwp = dw + ((oc * d.cin + ic) * 3) * 3;
      dwp[0] += a00;
      dwp[1] += a01;
      dwp[2] += a02;
      dwp[3] += a10;
      dwp[4] += a11;
      dwp[5] += a12;
      dwp[6] += a20;
      dwp[7] += a21;
      dwp[8] += a22;
    }
    if (db) {
      double s = 0.0;
      for (int64_t n = 0; n < d.n; ++n) {
        const double *gp = dy + ((n * d.cout + oc) * P);
#pragma omp simd reduction(+ : s)
        for (int64_t i = 0; i < P; ++i) s += gp[i];
      }
      db[oc] += s;
    }
  }
}

} // namespace

void conv2d_forward(const double *x, const double *w, const double *bias,
                    double *y, const ConvDims &d) {
  if (fused3x3_applies(d))
    conv2d_forward_3x3(x, w, bias, y, d);
  else if (gemm_worthwhile_fwd(d))
    conv2d_forward_gemm(x, w, bias, y, d);
  else
    conv2d_forward_direct(x, w, bias, y, d);
}

void conv2d_backward_input(const double *dy, const double *w, double *dx,
                           const ConvDims &d) {
  if (fused3x3_applies(d)) {
    conv2d_backward_input_3x3(dy, w, dx, d);
    return;
  }
  const int64_t Kb = d.cout * d.kh * d.kw, P = d.h * d.w;
  bool use_gemm = d.stride == 1 && d.kh == d.kw &&
                  (d.kh - 1) * d.dil >= d.pad && P >= 64 && Kb >= 24 &&
                  d.cin >= 12 && P * Kb <= 2 * kGemmFootprint;
  if (d.kh * d.kw == 1)
    use_gemm = d.stride == 1 && d.pad == 0 && d.cin >= 24 && d.cout >= 8 &&
               P >= 64 && P * Kb <= kGemmFootprint;
  else if (d.dil > 1)
    use_gemm = false;
  if (use_gemm)
    conv2d_backward_input_gemm(dy, w, dx, d);
  else
    conv2d_backward_input_direct(dy, w, dx, d);
}

void conv2d_backward_params(const double *dy, const double *x, double *dw,
                            double *db, const ConvDims &d) {
  // The nine-way reduction needs long rows to amortize; narrow planes do
  // better on the tiled patch-matrix path.
  if (fused3x3_applies(d) && d.w >= 48) {
    conv2d_backward_params_3x3(dy, x, dw, db, d);
    return;
  }
  const int64_t K = d.cin * d.kh * d.kw;
  const int64_t P = d.out_h() * d.out_w();
  bool use_gemm = K >= 24 && P >= 64 && P * K <= 4 * kGemmFootprint;
  if (d.kh * d.kw == 1) use_gemm = use_gemm && d.cin >= 96;
  if (use_gemm)
    conv2d_backward_params_gemm(dy, x, dw, db, d);
  else
    conv2d_backward_params_direct(dy, x, dw, db, d);
}

void bn2d_stats(const double *x, int64_t n, int64_t c, int64_t h, int64_t w,
                double *mean, double *var) {
  const int64_t plane = h * w;
  const double m = static_cast<double>(n * plane);
#pragma omp parallel for schedule(static)
  for (int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int64_t b = 0; b < n; ++b) {
      const double *p = x + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i) s += p[i];
    }
    const double mu = s / m;
    double v = 0.0;
    for (int64_t b = 0; b < n; ++b) {
      const double *p = x + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i) {
        double dlt = p[i] - mu;
        v += dlt * dlt;
      }
    }
    mean[ch] = mu;
    var[ch] = v / m;
  }
}

void bn2d_forward(const double *x, const double *mean, const double *var,
                  const double *gamma, const double *beta, double eps,
                  double *y, int64_t n, int64_t c, int64_t h, int64_t w) {
  const int64_t plane = h * w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double rstd = 1.0 / std::sqrt(var[ch] + eps);
      const double g = gamma[ch], bt = beta[ch], mu = mean[ch];
      const double *px = x + ((b * c + ch) * plane);
      double *py = y + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i) py[i] = (px[i] - mu) * rstd * g + bt;
    }
}

void bn2d_backward(const double *x, const double *dy, const double *mean,
                   const double *var, const double *gamma, double eps,
                   bool batch_stats, double *dx, double *dgamma, double *dbeta,
                   int64_t n, int64_t c, int64_t h, int64_t w) {
  const int64_t plane = h * w;
  const double m = static_cast<double>(n * plane);
#pragma omp parallel for schedule(static)
  for (int64_t ch = 0; ch < c; ++ch) {
    const double rstd = 1.0 / std::sqrt(var[ch] + eps);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t b = 0; b < n; ++b) {
      const double *px = x + ((b * c + ch) * plane);
      const double *pdy = dy + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i) {
        sum_dy += pdy[i];
        sum_dy_xhat += pdy[i] * (px[i] - mean[ch]) * rstd;
      }
    }
    if (dgamma) dgamma[ch] += sum_dy_xhat;
    if (dbeta) dbeta[ch] += sum_dy;
    for (int64_t b = 0; b < n; ++b) {
      const double *px = x + ((b * c + ch) * plane);
      const double *pdy = dy + ((b * c + ch) * plane);
      double *pdx = dx + ((b * c + ch) * plane);
      if (batch_stats) {
        for (int64_t i = 0; i < plane; ++i) {
          double xhat = (px[i] - mean[ch]) * rstd;
          pdx[i] += gamma[ch] * rstd *
                    (pdy[i] - sum_dy / m - xhat * sum_dy_xhat / m);
        }
      } else {
        for (int64_t i = 0; i < plane; ++i) pdx[i] += gamma[ch] * rstd * pdy[i];
      }
    }
  }
}

void relu_forward(const double *x, double *y, int64_t numel) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double *x, const double *dy, double *dx, int64_t numel) {
  // Unconditional store keeps the loop branch free on mixed-sign data.
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < numel; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
}

void maxpool2d_forward(const double *x, double *y, int64_t *argmax, int64_t n,
                       int64_t c, int64_t h, int64_t w, int64_t k) {
  const int64_t oh = h / k, ow = w / k;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *px = x + ((b * c + ch) * h * w);
      double *py = y + ((b * c + ch) * oh * ow);
      int64_t *pa = argmax + ((b * c + ch) * oh * ow);
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          double best = px[(i * k) * w + (j * k)];
          int64_t bidx = (i * k) * w + (j * k);
          for (int64_t di = 0; di < k; ++di)
            for (int64_t dj = 0; dj < k; ++dj) {
              int64_t idx = (i * k + di) * w + (j * k + dj);
              if (px[idx] > best) {
                best = px[idx];
                bidx = idx;
              }
            }
          py[i * ow + j] = best;
          pa[i * ow + j] = bidx;
        }
    }
}

void maxpool2d_backward(const double *dy, const int64_t *argmax, double *dx,
                        int64_t n, int64_t c, int64_t h, int64_t w, int64_t k) {
  const int64_t oh = h / k, ow = w / k;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *pdy = dy + ((b * c + ch) * oh * ow);
      const int64_t *pa = argmax + ((b * c + ch) * oh * ow);
      double *pdx = dx + ((b * c + ch) * h * w);
      for (int64_t i = 0; i < oh * ow; ++i) pdx[pa[i]] += pdy[i];
    }
}

void avgpool2d_forward(const double *x, double *y, int64_t n, int64_t c,
                       int64_t h, int64_t w, int64_t k) {
  const int64_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *px = x + ((b * c + ch) * h * w);
      double *py = y + ((b * c + ch) * oh * ow);
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          double s = 0.0;
          for (int64_t di = 0; di < k; ++di)
            for (int64_t dj = 0; dj < k; ++dj)
              s += px[(i * k + di) * w + (j * k + dj)];
          py[i * ow + j] = s * inv;
        }
    }
}

void avgpool2d_backward(const double *dy, double *dx, int64_t n, int64_t c,
                        int64_t h, int64_t w, int64_t k) {
  const int64_t oh = h / k, ow = w / k;
  const double inv = 1.0 / static_cast<double>(k * k);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *pdy = dy + ((b * c + ch) * oh * ow);
      double *pdx = dx + ((b * c + ch) * h * w);
      for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j)
          pdx[i * w + j] += pdy[(i / k) * ow + (j / k)] * inv;
    }
}

void upsample_nearest_forward(const double *x, double *y, int64_t n, int64_t c,
                              int64_t h, int64_t w, int64_t f) {
  const int64_t oh = h * f, ow = w * f;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *px = x + ((b * c + ch) * h * w);
      double *py = y + ((b * c + ch) * oh * ow);
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) py[i * ow + j] = px[(i / f) * w + (j / f)];
    }
}

void upsample_nearest_backward(const double *dy, double *dx, int64_t n,
                               int64_t c, int64_t h, int64_t w, int64_t f) {
  const int64_t oh = h * f, ow = w * f;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *pdy = dy + ((b * c + ch) * oh * ow);
      double *pdx = dx + ((b * c + ch) * h * w);
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) pdx[(i / f) * w + (j / f)] += pdy[i * ow + j];
    }
}

namespace {
inline void bilinear_coeff(int64_t dst, int64_t f, int64_t src_size,
                           int64_t &lo, int64_t &hi, double &w_hi) {
  double s = (static_cast<double>(dst) + 0.5) / static_cast<double>(f) - 0.5;
  if (s < 0.0) s = 0.0;
  double fl = std::floor(s);
  lo = static_cast<int64_t>(fl);
  if (lo > src_size - 1) lo = src_size - 1;
  hi = std::min<int64_t>(lo + 1, src_size - 1);
  w_hi = s - fl;
  if (hi == lo) w_hi = 0.0;
}
} // namespace

namespace {
struct BilinearAxis {
  std::vector<int64_t> lo, hi;
  std::vector<double> w_hi;
  BilinearAxis(int64_t dst_size, int64_t f, int64_t src_size)
      : lo(dst_size), hi(dst_size), w_hi(dst_size) {
    for (int64_t d = 0; d < dst_size; ++d)
      bilinear_coeff(d, f, src_size, lo[d], hi[d], w_hi[d]);
  }
};
} // namespace

void upsample_bilinear_forward(const double *x, double *y, int64_t n, int64_t c,
                               int64_t h, int64_t w, int64_t f) {
  const int64_t oh = h * f, ow = w * f;
  const BilinearAxis ay(oh, f, h), ax(ow, f, w);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *px = x + ((b * c + ch) * h * w);
      double *py = y + ((b * c + ch) * oh * ow);
      for (int64_t i = 0; i < oh; ++i) {
        const double wi = ay.w_hi[i];
        const double *r0 = px + ay.lo[i] * w, *r1 = px + ay.hi[i] * w;
        for (int64_t j = 0; j < ow; ++j) {
          const int64_t j0 = ax.lo[j], j1 = ax.hi[j];
          const double wj = ax.w_hi[j];
          py[i * ow + j] = (1 - wi) * ((1 - wj) * r0[j0] + wj * r0[j1]) +
                           wi * ((1 - wj) * r1[j0] + wj * r1[j1]);
        }
      }
    }
}

void upsample_bilinear_backward(const double *dy, double *dx, int64_t n,
                                int64_t c, int64_t h, int64_t w, int64_t f) {
  const int64_t oh = h * f, ow = w * f;
  const BilinearAxis ay(oh, f, h), ax(ow, f, w);
  // Scatter stays inside one (b, ch) plane, so plane-level parallelism is
  // race free.
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *pdy = dy + ((b * c + ch) * oh * ow);
      double *pdx = dx + ((b * c + ch) * h * w);
      for (int64_t i = 0; i < oh; ++i) {
        const double wi = ay.w_hi[i];
        double *r0 = pdx + ay.lo[i] * w, *r1 = pdx + ay.hi[i] * w;
        for (int64_t j = 0; j < ow; ++j) {
          const int64_t j0 = ax.lo[j], j1 = ax.hi[j];
          const double wj = ax.w_hi[j];
          const double g = pdy[i * ow + j];
          r0[j0] += (1 - wi) * (1 - wj) * g;
          r0[j1] += (1 - wi) * wj * g;
          r1[j0] += wi * (1 - wj) * g;
          r1[j1] += wi * wj * g;
        }
      }
    }
}

void matmul(const double *a, const double *b, double *c, int64_t m, int64_t n,
            int64_t k, bool trans_a, bool trans_b, bool accumulate) {
  if (!trans_a && !trans_b) {
    // Row-major i-p-j order: the j loop is a contiguous AXPY.
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) {
      double *cr = c + i * n;
      if (!accumulate)
        for (int64_t j = 0; j < n; ++j) cr[j] = 0.0;
      const double *ar = a + i * k;
      for (int64_t p = 0; p < k; ++p) {
        const double av = ar[p];
        const double *br = b + p * n;
        for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
      }
    }
    return;
  }
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) {
        double av = trans_a ? a[p * m + i] : a[i * k + p];
        double bv = trans_b ? b[j * k + p] : b[p * n + j];
        acc += av * bv;
      }
      if (accumulate)
        c[i * n + j] += acc;
      else
        c[i * n + j] = acc;
    }
}

void softmax_lastdim_forward(const double *x, double *y, int64_t rows, int64_t d) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double *px = x + r * d;
    double *py = y + r * d;
    double mx = px[0];
    for (int64_t i = 1; i < d; ++i) mx = std::max(mx, px[i]);
    double s = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      py[i] = std::exp(px[i] - mx);
      s += py[i];
    }
    for (int64_t i = 0; i < d; ++i) py[i] /= s;
  }
}

void softmax_lastdim_backward(const double *y, const double *dy, double *dx,
                              int64_t rows, int64_t d) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double *py = y + r * d;
    const double *pdy = dy + r * d;
    double *pdx = dx + r * d;
    double dot = 0.0;
    for (int64_t i = 0; i < d; ++i) dot += py[i] * pdy[i];
    for (int64_t i = 0; i < d; ++i) pdx[i] += py[i] * (pdy[i] - dot);
  }
}

void layernorm_forward(const double *x, const double *gamma, const double *beta,
                       double eps, double *y, double *mean, double *rstd,
                       int64_t rows, int64_t d) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double *px = x + r * d;
    double *py = y + r * d;
    double mu = 0.0;
    for (int64_t i = 0; i < d; ++i) mu += px[i];
    mu /= static_cast<double>(d);
    double v = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      double dlt = px[i] - mu;
      v += dlt * dlt;
    }
    v /= static_cast<double>(d);
    double rs = 1.0 / std::sqrt(v + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int64_t i = 0; i < d; ++i) py[i] = (px[i] - mu) * rs * gamma[i] + beta[i];
  }
}

void layernorm_backward(const double *x, const double *dy, const double *gamma,
                        const double *mean, const double *rstd, double *dx,
                        double *dgamma, double *dbeta, int64_t rows, int64_t d) {
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double *px = x + r * d;
    const double *pdy = dy + r * d;
    double *pdx = dx + r * d;
    double sum_g = 0.0, sum_gx = 0.0;
    for (int64_t i = 0; i < d; ++i) {
      double xhat = (px[i] - mean[r]) * rstd[r];
      double g = pdy[i] * gamma[i];
      sum_g += g;
      sum_gx += g * xhat;
    }
    for (int64_t i = 0; i < d; ++i) {
      double xhat = (px[i] - mean[r]) * rstd[r];
      double g = pdy[i] * gamma[i];
      pdx[i] += rstd[r] * (g - (sum_g + xhat * sum_gx) / static_cast<double>(d));
    }
  }
  // Parameter gradients reduce over rows; parallelising over columns keeps
  // each accumulator single-owner.
  if (dgamma || dbeta) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < d; ++i) {
      double sg = 0.0, sb = 0.0;
      for (int64_t r = 0; r < rows; ++r) {
        double pdyv = dy[r * d + i];
        sg += pdyv * (x[r * d + i] - mean[r]) * rstd[r];
        sb += pdyv;
      }
      if (dgamma) dgamma[i] += sg;
      if (dbeta) dbeta[i] += sb;
    }
  }
}

double cross_entropy_forward(const double *logits, const int32_t *targets,
                             double *probs, int64_t n, int64_t kcls, int64_t h,
                             int64_t w) {
  const int64_t plane = h * w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t px = 0; px < plane; ++px) {
      const double *pl = logits + (b * kcls) * plane + px;
      double *pp = probs + (b * kcls) * plane + px;
      double mx = pl[0];
      for (int64_t k = 1; k < kcls; ++k) mx = std::max(mx, pl[k * plane]);
      double s = 0.0;
      for (int64_t k = 0; k < kcls; ++k) {
        double e = std::exp(pl[k * plane] - mx);
        pp[k * plane] = e;
        s += e;
      }
      for (int64_t k = 0; k < kcls; ++k) pp[k * plane] /= s;
    }
  // Fixed-order serial sum keeps the loss bitwise reproducible.
  double total = 0.0;
  for (int64_t b = 0; b < n; ++b)
    for (int64_t px = 0; px < plane; ++px) {
      int32_t t = targets[b * plane + px];
      total -= std::log(std::max(probs[((b * kcls + t) * plane) + px], 1e-300));
    }
  return total;
}

void cross_entropy_backward(const double *probs, const int32_t *targets,
                            double scale, double *dlogits, int64_t n,
                            int64_t kcls, int64_t h, int64_t w) {
  const int64_t plane = h * w;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < n; ++b)
    for (int64_t px = 0; px < plane; ++px) {
      const double *pp = probs + (b * kcls) * plane + px;
      double *pd = dlogits + (b * kcls) * plane + px;
      int32_t t = targets[b * plane + px];
      for (int64_t k = 0; k < kcls; ++k) {
        double g = pp[k * plane];
        if (k == t) g -= 1.0;
        pd[k * plane] += g * scale;
      }
    }
}

} // namespace olaf::kernels::par
