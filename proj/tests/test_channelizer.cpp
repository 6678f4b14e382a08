// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <set>

#include "olaf/channelizer.hpp"
#include "olaf/core/error.hpp"
#include "olaf/core/rng.hpp"

using namespace olaf;
using namespace olaf::channelizer;
namespace fs = std::filesystem;

namespace {

data::LabelMap random_labels(int64_t h, int64_t w, int32_t num_classes,
                             SplitMix64 &rng) {
  data::LabelMap m(h, w);
  for (auto &x : m.v)
    x = static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(num_classes)));
  return m;
}

data::Mask random_mask(int64_t h, int64_t w, SplitMix64 &rng) {
  data::Mask m(h, w);
  for (auto &x : m.v) x = rng.uniform() < 0.5;
  return m;
}

std::set<int64_t> flipped_positions(const data::Mask &a, const data::Mask &b) {
  std::set<int64_t> s;
  for (int64_t p = 0; p < a.numel(); ++p)
    if (a.v[static_cast<size_t>(p)] != b.v[static_cast<size_t>(p)]) s.insert(p);
  return s;
}

} // namespace

TEST_CASE("foreground is the support of the label map") {
  SplitMix64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const int64_t h = 1 + static_cast<int64_t>(rng.uniform_int(16));
    const int64_t w = 1 + static_cast<int64_t>(rng.uniform_int(16));
    const data::LabelMap labels = random_labels(h, w, 8, rng);
    const data::Mask fg = derive_foreground(labels);
    for (int64_t p = 0; p < labels.numel(); ++p)
      CHECK(fg.v[static_cast<size_t>(p)] ==
            (labels.v[static_cast<size_t>(p)] != 0 ? 1 : 0));
  }
}

TEST_CASE("filtered edges are contained in the foreground") {
  SplitMix64 rng(2);
  for (int rep = 0; rep < 1000; ++rep) {
    const int64_t h = 1 + static_cast<int64_t>(rng.uniform_int(12));
    const int64_t w = 1 + static_cast<int64_t>(rng.uniform_int(12));
    Tensor raw({h, w});
    for (int64_t p = 0; p < raw.numel(); ++p)
      raw.data()[p] = rng.uniform(-1.0, 1.0);
    const data::Mask fg = random_mask(h, w, rng);
    const double tau = rng.uniform(-0.5, 0.5);
    const data::Mask edge = filter_edges(raw, fg, tau);
    for (int64_t p = 0; p < edge.numel(); ++p) {
      if (edge.v[static_cast<size_t>(p)]) {
        CHECK(fg.v[static_cast<size_t>(p)] == 1);
        CHECK(raw.data()[p] > tau);
      } else {
        CHECK((fg.v[static_cast<size_t>(p)] == 0 || raw.data()[p] <= tau));
      }
    }
  }
}

TEST_CASE("filter_edges applies the threshold exclusively") {
  Tensor raw({1, 3});
  raw.data()[0] = 0.0;
  raw.data()[1] = 0.5;
  raw.data()[2] = -0.5;
  data::Mask fg(1, 3);
  fg.v = {1, 1, 1};
  const data::Mask at_zero = filter_edges(raw, fg); // default tau = 0.0
  CHECK(at_zero.v == std::vector<uint8_t>{0, 1, 0});
  const data::Mask at_half = filter_edges(raw, fg, 0.5);
  CHECK(at_half.v == std::vector<uint8_t>{0, 0, 0});
  const data::Mask low = filter_edges(raw, fg, -1.0);
  CHECK(low.v == std::vector<uint8_t>{1, 1, 1});

  data::Mask wrong(2, 3);
  CHECK_THROWS_AS(filter_edges(raw, wrong), ShapeError);
  CHECK_THROWS_AS(filter_edges(Tensor({3}), fg), ShapeError);
}

TEST_CASE("noise injection flips exactly round(level * n) distinct pixels") {
  SplitMix64 rng(3);
  for (const double level : {0.0, 0.05, 0.1, 0.2, 0.3}) {
    for (const auto &[h, w] : {std::pair<int64_t, int64_t>{8, 8},
                               {13, 7},
                               {64, 64},
                               {1, 10}}) {
      const data::Mask m = random_mask(h, w, rng);
      const data::Mask noisy = inject_noise(m, level, 77);
      const int64_t n = h * w;
      const int64_t expect = static_cast<int64_t>(
          std::floor(level * static_cast<double>(n) + 0.5));
      CHECK(static_cast<int64_t>(flipped_positions(m, noisy).size()) == expect);
      CHECK(estimate_noise(m, noisy) ==
            static_cast<double>(expect) / static_cast<double>(n));
    }
  }
}

TEST_CASE("noise injection is deterministic in its seed") {
  SplitMix64 rng(4);
  const data::Mask m = random_mask(20, 20, rng);
  const data::Mask a = inject_noise(m, 0.2, 5);
  const data::Mask b = inject_noise(m, 0.2, 5);
  CHECK(a.v == b.v);
  const data::Mask c = inject_noise(m, 0.2, 6);
  CHECK(a.v != c.v);
  const data::Mask all = inject_noise(m, 1.0, 5);
  for (int64_t p = 0; p < m.numel(); ++p)
    CHECK(all.v[static_cast<size_t>(p)] == (m.v[static_cast<size_t>(p)] ^ 1));
  CHECK_THROWS_AS(inject_noise(m, -0.01, 5), ConfigError);
  CHECK_THROWS_AS(inject_noise(m, 1.01, 5), ConfigError);
}

TEST_CASE("estimate_noise measures disagreement") {
  data::Mask a(2, 3), b(2, 3);
  CHECK(estimate_noise(a, b) == 0.0);
  b.at(0, 0) = 1;
  b.at(1, 2) = 1;
  CHECK(estimate_noise(a, b) == doctest::Approx(2.0 / 6.0));
  data::Mask c(3, 2);
  CHECK_THROWS_AS(estimate_noise(a, c), ShapeError);
}

TEST_CASE("assemble_input stacks channels in R,G,B,fg,edge order") {
  data::RgbImage img(2, 2);
  for (size_t i = 0; i < img.v.size(); ++i)
    img.v[i] = static_cast<double>(i) / 16.0;
  ChannelPair cues{data::Mask(2, 2), data::Mask(2, 2)};
  cues.fg.at(0, 1) = 1;
  cues.edge.at(1, 0) = 1;

  const Tensor x = assemble_input(img, cues);
  REQUIRE(x.shape() == std::vector<int64_t>{5, 2, 2});
  for (int64_t p = 0; p < 12; ++p)
    CHECK(x.data()[p] == img.v[static_cast<size_t>(p)]);
  CHECK(x.data()[12 + 1] == 1.0); // fg at (0, 1)
  CHECK(x.data()[12 + 0] == 0.0);
  CHECK(x.data()[16 + 2] == 1.0); // edge at (1, 0)
  CHECK(x.data()[16 + 3] == 0.0);

  ChannelConfig fg_only{true, false};
  CHECK(assemble_input(img, cues, fg_only).shape() ==
        std::vector<int64_t>{4, 2, 2});
  ChannelConfig rgb_only{false, false};
  const Tensor rgb = assemble_input(img, cues, rgb_only);
  CHECK(rgb.shape() == std::vector<int64_t>{3, 2, 2});

  ChannelPair bad{data::Mask(3, 2), data::Mask(2, 2)};
  CHECK_THROWS_AS(assemble_input(img, bad), ShapeError);
  // A mismatched fg is fine when the config does not use it.
  ChannelConfig edge_only{false, true};
  CHECK(assemble_input(img, bad, edge_only).shape() ==
        std::vector<int64_t>{4, 2, 2});
}

TEST_CASE("oracle provider returns ground-truth cues") {
  data::GenConfig cfg;
  cfg.num_images = 2;
  const data::Dataset ds = data::generate_dataset(cfg);
  auto provider = make_provider({});
  CHECK(provider->describe() == "oracle");
  const ChannelPair cues = provider->provide(ds.samples[0], 0);
  CHECK(cues.fg.v == derive_foreground(ds.samples[0].objects).v);
  CHECK(cues.edge.v == ds.samples[0].gt_edges.v);
}

TEST_CASE("degraded provider draws independent flip sets per mask") {
  data::GenConfig gen;
  gen.num_images = 1;
  const data::Dataset ds = data::generate_dataset(gen);
  const data::Sample &s = ds.samples[0];

  ProviderConfig pc;
  pc.kind = "degraded";
  pc.noise_level = 0.1;
  pc.seed = 9;
  auto provider = make_provider(pc);

  const ChannelPair a = provider->provide(s, 0);
  const ChannelPair b = provider->provide(s, 0);
  CHECK(a.fg.v == b.fg.v); // deterministic per (seed, index)
  CHECK(a.edge.v == b.edge.v);

  const data::Mask clean_fg = derive_foreground(s.objects);
  const int64_t n = s.parts.numel();
  const int64_t expect = static_cast<int64_t>(
      std::floor(0.1 * static_cast<double>(n) + 0.5));
  const auto fg_flips = flipped_positions(clean_fg, a.fg);
  const auto edge_flips = flipped_positions(s.gt_edges, a.edge);
  CHECK(static_cast<int64_t>(fg_flips.size()) == expect);
  CHECK(static_cast<int64_t>(edge_flips.size()) == expect);
  CHECK(fg_flips != edge_flips);

  const ChannelPair other = provider->provide(s, 1);
  CHECK(flipped_positions(clean_fg, other.fg) != fg_flips);

  ProviderConfig zero = pc;
  zero.noise_level = 0.0;
  const ChannelPair clean = make_provider(zero)->provide(s, 0);
  CHECK(clean.fg.v == clean_fg.v);
  CHECK(clean.edge.v == s.gt_edges.v);
}

TEST_CASE("gradient provider yields edges inside the foreground") {
  data::GenConfig gen;
  gen.num_images = 4;
  gen.seed = 17;
  const data::Dataset ds = data::generate_dataset(gen);
  ProviderConfig pc;
  pc.kind = "gradient";
  pc.tau = 0.08;
  auto provider = make_provider(pc);
  for (int64_t i = 0; i < 4; ++i) {
    const ChannelPair cues = provider->provide(ds.samples[static_cast<size_t>(i)], i);
    CHECK(cues.fg.v == derive_foreground(ds.samples[static_cast<size_t>(i)].objects).v);
    int64_t edge_px = 0;
    for (int64_t p = 0; p < cues.edge.numel(); ++p) {
      if (cues.edge.v[static_cast<size_t>(p)]) {
        ++edge_px;
        CHECK(cues.fg.v[static_cast<size_t>(p)] == 1);
      }
    }
    CHECK(edge_px > 0); // flat-colour parts leave strong boundaries
  }
}

TEST_CASE("file provider loads rasters and names missing assets") {
  const fs::path dir =
      fs::temp_directory_path() / strfmt("olaf_test_chan_%d", ::getpid());
  fs::remove_all(dir);
  fs::create_directories(dir / "foreground");
  fs::create_directories(dir / "edges");

  data::GenConfig gen;
  gen.num_images = 1;
  const data::Dataset ds = data::generate_dataset(gen);
  const data::Sample &s = ds.samples[0];
  const data::Mask fg = derive_foreground(s.objects);
  data::save_mask_pgm((dir / "foreground" / (s.id + ".pgm")).string(), fg);
  data::save_mask_pgm((dir / "edges" / (s.id + ".pgm")).string(), s.gt_edges);

  ProviderConfig pc;
  pc.kind = "file";
  pc.dir = dir.string();
  auto provider = make_provider(pc);
  const ChannelPair cues = provider->provide(s, 0);
  CHECK(cues.fg.v == fg.v);
  CHECK(cues.edge.v == s.gt_edges.v);

  data::Sample ghost = s;
  ghost.id = "scene_99999";
  bool threw = false;
  try {
    provider->provide(ghost, 0);
  } catch (const ProviderError &e) {
    threw = true;
    CHECK(std::string(e.what()).find("scene_99999.pgm") != std::string::npos);
  }
  CHECK(threw);
  fs::remove_all(dir);
}

TEST_CASE("unknown provider kinds are rejected") {
  ProviderConfig pc;
  pc.kind = "telepathy";
  CHECK_THROWS_AS(make_provider(pc), ConfigError);
}
