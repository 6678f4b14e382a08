// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>

#include "olaf/channelizer.hpp"
#include "olaf/core/error.hpp"
#include "olaf/core/rng.hpp"

namespace fs = std::filesystem;

namespace olaf::channelizer {

data::Mask derive_foreground(const data::LabelMap &labels) {
  data::Mask fg(labels.h, labels.w);
  for (int64_t p = 0; p < labels.numel(); ++p)
    fg.v[static_cast<size_t>(p)] = labels.v[static_cast<size_t>(p)] != 0;
  return fg;
}

data::Mask filter_edges(const Tensor &raw, const data::Mask &fg, double tau) {
  OLAF_CHECK(raw.rank() == 2, ShapeError,
             "filter_edges: raw field must be rank 2, got rank %d",
             static_cast<int>(raw.rank()));
  OLAF_CHECK(raw.shape()[0] == fg.h && raw.shape()[1] == fg.w, ShapeError,
             "filter_edges: raw %lldx%lld does not match mask %lldx%lld",
             static_cast<long long>(raw.shape()[0]),
             static_cast<long long>(raw.shape()[1]),
             static_cast<long long>(fg.h), static_cast<long long>(fg.w));
  data::Mask out(fg.h, fg.w);
  const double *r = raw.data();
  for (int64_t p = 0; p < fg.numel(); ++p)
    out.v[static_cast<size_t>(p)] =
        r[p] > tau && fg.v[static_cast<size_t>(p)] != 0;
  return out;
}

data::Mask inject_noise(const data::Mask &m, double level, uint64_t seed) {
  OLAF_CHECK(level >= 0.0 && level <= 1.0, ConfigError,
             "inject_noise: level %g outside [0, 1]", level);
  data::Mask out = m;
  const int64_t n = m.numel();
  const int64_t flips = static_cast<int64_t>(
      std::floor(level * static_cast<double>(n) + 0.5));
  if (flips == 0) return out;
  SplitMix64 rng(seed);
  for (int64_t p : sample_without_replacement(n, flips, rng))
    out.v[static_cast<size_t>(p)] ^= 1;
  return out;
}

double estimate_noise(const data::Mask &a, const data::Mask &b) {
  OLAF_CHECK(a.h == b.h && a.w == b.w, ShapeError,
             "estimate_noise: masks %lldx%lld vs %lldx%lld",
             static_cast<long long>(a.h), static_cast<long long>(a.w),
             static_cast<long long>(b.h), static_cast<long long>(b.w));
  int64_t diff = 0;
  for (int64_t p = 0; p < a.numel(); ++p)
    diff += a.v[static_cast<size_t>(p)] != b.v[static_cast<size_t>(p)];
  return static_cast<double>(diff) / static_cast<double>(a.numel());
}

Tensor assemble_input(const data::RgbImage &img, const ChannelPair &cues,
                      const ChannelConfig &cfg) {
  const int64_t h = img.h, w = img.w;
  if (cfg.use_fg)
    OLAF_CHECK(cues.fg.h == h && cues.fg.w == w, ShapeError,
               "assemble_input: fg mask %lldx%lld does not match image "
               "%lldx%lld",
               static_cast<long long>(cues.fg.h),
               static_cast<long long>(cues.fg.w), static_cast<long long>(h),
               static_cast<long long>(w));
  if (cfg.use_edge)
    OLAF_CHECK(cues.edge.h == h && cues.edge.w == w, ShapeError,
               "assemble_input: edge mask %lldx%lld does not match image "
               "%lldx%lld",
               static_cast<long long>(cues.edge.h),
               static_cast<long long>(cues.edge.w), static_cast<long long>(h),
               static_cast<long long>(w));
  Tensor x({cfg.channels(), h, w});
  double *d = x.data();
  const int64_t plane = h * w;
  for (int64_t p = 0; p < 3 * plane; ++p) d[p] = img.v[static_cast<size_t>(p)];
  int64_t c = 3;
  if (cfg.use_fg) {
    for (int64_t p = 0; p < plane; ++p)
      d[c * plane + p] = cues.fg.v[static_cast<size_t>(p)] ? 1.0 : 0.0;
    ++c;
  }
  if (cfg.use_edge) {
    for (int64_t p = 0; p < plane; ++p)
      d[c * plane + p] = cues.edge.v[static_cast<size_t>(p)] ? 1.0 : 0.0;
    ++c;
  }
  return x;
}

namespace {

class OracleProvider final : public MaskProvider {
public:
  ChannelPair provide(const data::Sample &s, int64_t) override {
    return {derive_foreground(s.objects), s.gt_edges};
  }
  std::string describe() const override { return "oracle"; }
};

class DegradedProvider final : public MaskProvider {
public:
  DegradedProvider(double level, uint64_t seed) : level_(level), seed_(seed) {}

  ChannelPair provide(const data::Sample &s, int64_t index) override {
    const uint64_t base = SplitMix64::mix(seed_, static_cast<uint64_t>(index));
    ChannelPair cues{derive_foreground(s.objects), s.gt_edges};
    cues.fg = inject_noise(cues.fg, level_, SplitMix64::mix(base, 1));
    cues.edge = inject_noise(cues.edge, level_, SplitMix64::mix(base, 2));
    return cues;
  }

  std::string describe() const override {
    return strfmt("degraded(level=%g)", level_);
  }

private:
  double level_;
  uint64_t seed_;
};

class GradientEdgeProvider final : public MaskProvider {
public:
  explicit GradientEdgeProvider(double tau) : tau_(tau) {}

  ChannelPair provide(const data::Sample &s, int64_t) override {
    const int64_t h = s.image.h, w = s.image.w;
    Tensor lum({h, w});
    double *l = lum.data();
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j)
        l[i * w + j] = 0.299 * s.image.at(0, i, j) +
                       0.587 * s.image.at(1, i, j) +
                       0.114 * s.image.at(2, i, j);
    Tensor mag({h, w});
    double *g = mag.data();
    for (int64_t i = 0; i < h; ++i)
      for (int64_t j = 0; j < w; ++j) {
        const double gy = l[std::min(i + 1, h - 1) * w + j] -
                          l[std::max<int64_t>(i - 1, 0) * w + j];
        const double gx = l[i * w + std::min(j + 1, w - 1)] -
                          l[i * w + std::max<int64_t>(j - 1, 0)];
        g[i * w + j] = std::sqrt(gx * gx + gy * gy);
      }
    const data::Mask fg = derive_foreground(s.objects);
    return {fg, filter_edges(mag, fg, tau_)};
  }

  std::string describe() const override {
    return strfmt("gradient(tau=%g)", tau_);
  }

private:
  double tau_;
};

class FileBackedProvider final : public MaskProvider {
public:
  explicit FileBackedProvider(std::string dir) : dir_(std::move(dir)) {}

  ChannelPair provide(const data::Sample &s, int64_t) override {
    const fs::path fg_path = fs::path(dir_) / "foreground" / (s.id + ".pgm");
    const fs::path edge_path = fs::path(dir_) / "edges" / (s.id + ".pgm");
    OLAF_CHECK(fs::exists(fg_path), ProviderError,
               "mask provider asset missing: '%s'", fg_path.string().c_str());
    OLAF_CHECK(fs::exists(edge_path), ProviderError,
               "mask provider asset missing: '%s'",
               edge_path.string().c_str());
    return {data::load_mask_pgm(fg_path.string()),
            data::load_mask_pgm(edge_path.string())};
  }

  std::string describe() const override { return strfmt("file(%s)", dir_.c_str()); }

private:
  std::string dir_;
};

} // namespace

std::unique_ptr<MaskProvider> make_provider(const ProviderConfig &cfg) {
  if (cfg.kind == "oracle") return std::make_unique<OracleProvider>();
  if (cfg.kind == "degraded")
    return std::make_unique<DegradedProvider>(cfg.noise_level, cfg.seed);
  if (cfg.kind == "gradient")
    return std::make_unique<GradientEdgeProvider>(cfg.tau);
  if (cfg.kind == "file") return std::make_unique<FileBackedProvider>(cfg.dir);
  throw ConfigError(strfmt("unknown mask provider kind '%s'", cfg.kind.c_str()));
}

} // namespace olaf::channelizer
