// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
//
// Serial reference kernels. Written as plain textbook loops; the OpenMP
// kernels in kernels_par.cpp are validated against these.

#include <algorithm>
#include <cmath>

#include "olaf/core/kernels.hpp"

namespace olaf::kernels::seq {

void conv2d_forward(const double *x, const double *w, const double *bias,
                    double *y, const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t oc = 0; oc < d.cout; ++oc)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          double acc = bias ? bias[oc] : 0.0;
          for (int64_t ic = 0; ic < d.cin; ++ic)
            for (int64_t ki = 0; ki < d.kh; ++ki)
              for (int64_t kj = 0; kj < d.kw; ++kj) {
                int64_t ih = i * d.stride - d.pad + ki * d.dil;
                int64_t iw = j * d.stride - d.pad + kj * d.dil;
                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                acc += x[((n * d.cin + ic) * d.h + ih) * d.w + iw] *
                       w[((oc * d.cin + ic) * d.kh + ki) * d.kw + kj];
              }
          y[((n * d.cout + oc) * oh + i) * ow + j] = acc;
        }
}

void conv2d_backward_input(const double *dy, const double *w, double *dx,
                           const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t oc = 0; oc < d.cout; ++oc)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          double g = dy[((n * d.cout + oc) * oh + i) * ow + j];
          for (int64_t ic = 0; ic < d.cin; ++ic)
            for (int64_t ki = 0; ki < d.kh; ++ki)
              for (int64_t kj = 0; kj < d.kw; ++kj) {
                int64_t ih = i * d.stride - d.pad + ki * d.dil;
                int64_t iw = j * d.stride - d.pad + kj * d.dil;
                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                dx[((n * d.cin + ic) * d.h + ih) * d.w + iw] +=
                    g * w[((oc * d.cin + ic) * d.kh + ki) * d.kw + kj];
              }
        }
}

void conv2d_backward_params(const double *dy, const double *x, double *dw,
                            double *db, const ConvDims &d) {
  const int64_t oh = d.out_h(), ow = d.out_w();
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t oc = 0; oc < d.cout; ++oc)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          double g = dy[((n * d.cout + oc) * oh + i) * ow + j];
          if (db) db[oc] += g;
          for (int64_t ic = 0; ic < d.cin; ++ic)
            for (int64_t ki = 0; ki < d.kh; ++ki)
              for (int64_t kj = 0; kj < d.kw; ++kj) {
                int64_t ih = i * d.stride - d.pad + ki * d.dil;
                int64_t iw = j * d.stride - d.pad + kj * d.dil;
                if (ih < 0 || ih >= d.h || iw < 0 || iw >= d.w) continue;
                dw[((oc * d.cin + ic) * d.kh + ki) * d.kw + kj] +=
                    g * x[((n * d.cin + ic) * d.h + ih) * d.w + iw];
              }
        }
}

void bn2d_stats(const double *x, int64_t n, int64_t c, int64_t h, int64_t w,
                double *mean, double *var) {
  const int64_t plane = h * w;
  const double m = static_cast<double>(n * plane);
  for (int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (int64_t b = 0; b < n; ++b) {
      const double *p = x + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i) s += p[i];
    }
    mean[ch] = s / m;
    double v = 0.0;
    for (int64_t b = 0; b < n; ++b) {
      const double *p = x + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i) {
        double dlt = p[i] - mean[ch];
        v += dlt * dlt;
      }
    }
    var[ch] = v / m;
  }
}

void bn2d_forward(const double *x, const double *mean, const double *var,
                  const double *gamma, const double *beta, double eps,
                  double *y, int64_t n, int64_t c, int64_t h, int64_t w) {
  const int64_t plane = h * w;
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      double rstd = 1.0 / std::sqrt(var[ch] + eps);
      const double *px = x + ((b * c + ch) * plane);
      double *py = y + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i)
        py[i] = (px[i] - mean[ch]) * rstd * gamma[ch] + beta[ch];
    }
}

void bn2d_backward(const double *x, const double *dy, const double *mean,
                   const double *var, const double *gamma, double eps,
                   bool batch_stats, double *dx, double *dgamma, double *dbeta,
                   int64_t n, int64_t c, int64_t h, int64_t w) {
  const int64_t plane = h * w;
  const double m = static_cast<double>(n * plane);
  for (int64_t ch = 0; ch < c; ++ch) {
    double rstd = 1.0 / std::sqrt(var[ch] + eps);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int64_t b = 0; b < n; ++b) {
      const double *px = x + ((b * c + ch) * plane);
      const double *pdy = dy + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i) {
        double xhat = (px[i] - mean[ch]) * rstd;
        sum_dy += pdy[i];
        sum_dy_xhat += pdy[i] * xhat;
      }
    }
    if (dgamma) dgamma[ch] += sum_dy_xhat;
    if (dbeta) dbeta[ch] += sum_dy;
    for (int64_t b = 0; b < n; ++b) {
      const double *px = x + ((b * c + ch) * plane);
      const double *pdy = dy + ((b * c + ch) * plane);
      double *pdx = dx + ((b * c + ch) * plane);
      for (int64_t i = 0; i < plane; ++i) {
        if (batch_stats) {
          double xhat = (px[i] - mean[ch]) * rstd;
          pdx[i] += gamma[ch] * rstd *
                    (pdy[i] - sum_dy / m - xhat * sum_dy_xhat / m);
        } else {
          pdx[i] += gamma[ch] * rstd * pdy[i];
        }
      }
    }
  }
}

void relu_forward(const double *x, double *y, int64_t numel) {
  for (int64_t i = 0; i < numel; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double *x, const double *dy, double *dx, int64_t numel) {
  for (int64_t i = 0; i < numel; ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

void maxpool2d_forward(const double *x, double *y, int64_t *argmax, int64_t n,
                       int64_t c, int64_t h, int64_t w, int64_t k) {
  const int64_t oh = h / k, ow = w / k;
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
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *pdy = dy + ((b * c + ch) * oh * ow);
      double *pdx = dx + ((b * c + ch) * h * w);
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) pdx[(i / f) * w + (j / f)] += pdy[i * ow + j];
    }
}

namespace {
// Half-pixel source coordinate mapping used by both bilinear directions.
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

void upsample_bilinear_forward(const double *x, double *y, int64_t n, int64_t c,
                               int64_t h, int64_t w, int64_t f) {
  const int64_t oh = h * f, ow = w * f;
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *px = x + ((b * c + ch) * h * w);
      double *py = y + ((b * c + ch) * oh * ow);
      for (int64_t i = 0; i < oh; ++i) {
        int64_t i0, i1;
        double wi;
        bilinear_coeff(i, f, h, i0, i1, wi);
        for (int64_t j = 0; j < ow; ++j) {
          int64_t j0, j1;
          double wj;
          bilinear_coeff(j, f, w, j0, j1, wj);
          double v = (1 - wi) * ((1 - wj) * px[i0 * w + j0] + wj * px[i0 * w + j1]) +
                     wi * ((1 - wj) * px[i1 * w + j0] + wj * px[i1 * w + j1]);
          py[i * ow + j] = v;
        }
      }
    }
}

void upsample_bilinear_backward(const double *dy, double *dx, int64_t n,
                                int64_t c, int64_t h, int64_t w, int64_t f) {
  const int64_t oh = h * f, ow = w * f;
  for (int64_t b = 0; b < n; ++b)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double *pdy = dy + ((b * c + ch) * oh * ow);
      double *pdx = dx + ((b * c + ch) * h * w);
      for (int64_t i = 0; i < oh; ++i) {
        int64_t i0, i1;
        double wi;
        bilinear_coeff(i, f, h, i0, i1, wi);
        for (int64_t j = 0; j < ow; ++j) {
          int64_t j0, j1;
          double wj;
          bilinear_coeff(j, f, w, j0, j1, wj);
          double g = pdy[i * ow + j];
          pdx[i0 * w + j0] += (1 - wi) * (1 - wj) * g;
          pdx[i0 * w + j1] += (1 - wi) * wj * g;
          pdx[i1 * w + j0] += wi * (1 - wj) * g;
          pdx[i1 * w + j1] += wi * wj * g;
        }
      }
    }
}

void matmul(const double *a, const double *b, double *c, int64_t m, int64_t n,
            int64_t k, bool trans_a, bool trans_b, bool accumulate) {
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
      if (dgamma) dgamma[i] += pdy[i] * xhat;
      if (dbeta) dbeta[i] += pdy[i];
    }
    for (int64_t i = 0; i < d; ++i) {
      double xhat = (px[i] - mean[r]) * rstd[r];
      double g = pdy[i] * gamma[i];
      pdx[i] += rstd[r] * (g - (sum_g + xhat * sum_gx) / static_cast<double>(d));
    }
  }
}

double cross_entropy_forward(const double *logits, const int32_t *targets,
                             double *probs, int64_t n, int64_t kcls, int64_t h,
                             int64_t w) {
  const int64_t plane = h * w;
  double total = 0.0;
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
      int32_t t = targets[b * plane + px];
      total -= std::log(std::max(pp[t * plane], 1e-300));
    }
  return total;
}

void cross_entropy_backward(const double *probs, const int32_t *targets,
                            double scale, double *dlogits, int64_t n,
                            int64_t kcls, int64_t h, int64_t w) {
  const int64_t plane = h * w;
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

} // namespace olaf::kernels::seq
