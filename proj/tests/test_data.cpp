// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "olaf/core/error.hpp"
#include "olaf/data.hpp"

using namespace olaf;
using namespace olaf::data;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char *tag) {
  fs::path p = fs::temp_directory_path() /
               strfmt("olaf_test_data_%s_%d", tag, ::getpid());
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Areas of 4-connected components restricted to one part class.
std::vector<int64_t> component_areas(const LabelMap &parts, int32_t cls) {
  std::vector<int64_t> areas;
  std::vector<uint8_t> seen(static_cast<size_t>(parts.numel()), 0);
  std::vector<int64_t> stack;
  for (int64_t start = 0; start < parts.numel(); ++start) {
    if (seen[static_cast<size_t>(start)] ||
        parts.v[static_cast<size_t>(start)] != cls)
      continue;
    int64_t area = 0;
    stack.assign(1, start);
    seen[static_cast<size_t>(start)] = 1;
    while (!stack.empty()) {
      const int64_t p = stack.back();
      stack.pop_back();
      ++area;
      const int64_t i = p / parts.w, j = p % parts.w;
      const int64_t nbr[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto &n : nbr) {
        if (n[0] < 0 || n[0] >= parts.h || n[1] < 0 || n[1] >= parts.w)
          continue;
        const int64_t q = n[0] * parts.w + n[1];
        if (!seen[static_cast<size_t>(q)] &&
            parts.v[static_cast<size_t>(q)] == cls) {
          seen[static_cast<size_t>(q)] = 1;
          stack.push_back(q);
        }
      }
    }
    areas.push_back(area);
  }
  return areas;
}

} // namespace

TEST_CASE("label pgm round-trips through 8-bit and 16-bit encodings") {
  const fs::path dir = temp_dir("pgm");
  LabelMap small(3, 4);
  for (int64_t i = 0; i < small.numel(); ++i)
    small.v[static_cast<size_t>(i)] = static_cast<int32_t>(i * 7 % 200);
  save_label_pgm((dir / "small.pgm").string(), small);
  const LabelMap small2 = load_label_pgm((dir / "small.pgm").string());
  CHECK(small2.h == 3);
  CHECK(small2.w == 4);
  CHECK(small2.v == small.v);

  LabelMap wide(2, 5);
  for (int64_t i = 0; i < wide.numel(); ++i)
    wide.v[static_cast<size_t>(i)] = static_cast<int32_t>(100 + i * 313);
  save_label_pgm((dir / "wide.pgm").string(), wide);
  const LabelMap wide2 = load_label_pgm((dir / "wide.pgm").string());
  CHECK(wide2.v == wide.v);
  fs::remove_all(dir);
}

TEST_CASE("mask pgm stores 0/255 and reads back binary") {
  const fs::path dir = temp_dir("mask");
  Mask m(4, 4);
  m.at(0, 0) = 1;
  m.at(2, 3) = 1;
  save_mask_pgm((dir / "m.pgm").string(), m);
  const Mask m2 = load_mask_pgm((dir / "m.pgm").string());
  CHECK(m2.v == m.v);
  CHECK(m2.count() == 2);
  fs::remove_all(dir);
}

TEST_CASE("ppm round-trip is exact after byte quantisation") {
  const fs::path dir = temp_dir("ppm");
  RgbImage img(5, 3);
  SplitMix64 rng(9);
  for (auto &x : img.v)
    x = static_cast<double>(static_cast<int>(rng.uniform(0.0, 1.0) * 255.0 + 0.5)) /
        255.0;
  save_ppm((dir / "img.ppm").string(), img);
  const RgbImage img2 = load_ppm((dir / "img.ppm").string());
  REQUIRE(img2.v.size() == img.v.size());
  for (size_t i = 0; i < img.v.size(); ++i)
    CHECK(img2.v[i] == doctest::Approx(img.v[i]).epsilon(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("malformed rasters are rejected with the offending path") {
  const fs::path dir = temp_dir("bad");
  {
    std::ofstream out(dir / "bad.pgm", std::ios::binary);
    out << "P5\n4 4\n255\nxy"; // truncated payload
  }
  CHECK_THROWS_AS(load_label_pgm((dir / "bad.pgm").string()), DataError);
  {
    std::ofstream out(dir / "notpgm.pgm", std::ios::binary);
    out << "P6\n1 1\n255\nabc";
  }
  CHECK_THROWS_AS(load_label_pgm((dir / "notpgm.pgm").string()), DataError);
  CHECK_THROWS_AS(load_label_pgm((dir / "absent.pgm").string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("desk taxonomy wires seven parts to three objects") {
  const Taxonomy tax = desk_taxonomy();
  CHECK(tax.num_classes() == 8);
  CHECK(tax.objects.size() == 3);
  CHECK(tax.parts.size() == 7);
  CHECK(tax.object_of_part(1) == 1); // rim -> disk
  CHECK(tax.object_of_part(2) == 1); // core -> disk
  CHECK(tax.object_of_part(3) == 2); // shaft -> bar
  CHECK(tax.object_of_part(4) == 2);
  CHECK(tax.object_of_part(5) == 2);
  CHECK(tax.object_of_part(6) == 3); // body -> blob
  CHECK(tax.object_of_part(7) == 3); // spot -> blob
  CHECK(tax.part_by_id(4)->name == "cap_a");
  CHECK(tax.object_by_id(2)->name == "bar");
}

TEST_CASE("taxonomy text round-trips and rejects garbage") {
  const Taxonomy tax = desk_taxonomy();
  const Taxonomy back = parse_taxonomy(serialize_taxonomy(tax));
  CHECK(back.name == tax.name);
  REQUIRE(back.parts.size() == tax.parts.size());
  for (size_t i = 0; i < tax.parts.size(); ++i) {
    CHECK(back.parts[i].id == tax.parts[i].id);
    CHECK(back.parts[i].name == tax.parts[i].name);
    CHECK(back.parts[i].object_name == tax.parts[i].object_name);
  }
  CHECK_THROWS_AS(parse_taxonomy("bogus line\n"), DataError);
  CHECK_THROWS_AS(parse_taxonomy("taxonomy t\npart 1 p ghost\n"), DataError);
  CHECK_THROWS_AS(parse_taxonomy(""), DataError);
}

TEST_CASE("gt edges mark foreground pixels adjacent to a different label") {
  LabelMap parts(3, 4);
  // Row-wise: 1 1 2 2 / 1 1 2 2 / 0 0 0 0
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 4; ++j) parts.at(i, j) = j < 2 ? 1 : 2;
  const Mask e = derive_gt_edges(parts);
  // (0,0) and (0,3) only touch same-label pixels in bounds; everything else
  // in the labelled rows borders the other part or the background row.
  for (int64_t i = 0; i < 2; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      const bool interior_corner = i == 0 && (j == 0 || j == 3);
      CHECK(e.at(i, j) == (interior_corner ? 0 : 1));
    }
  for (int64_t j = 0; j < 4; ++j) CHECK(e.at(2, j) == 0);

  LabelMap solid(5, 5);
  for (auto &x : solid.v) x = 3;
  const Mask es = derive_gt_edges(solid);
  CHECK(es.count() == 0); // no 4-neighbour differs anywhere
}

TEST_CASE("scene generation is deterministic in (seed, index)") {
  GenConfig cfg;
  cfg.seed = 42;
  const Taxonomy tax = desk_taxonomy();
  const Sample a = generate_scene(cfg, tax, 3);
  const Sample b = generate_scene(cfg, tax, 3);
  CHECK(a.image.v == b.image.v);
  CHECK(a.objects.v == b.objects.v);
  CHECK(a.parts.v == b.parts.v);
  CHECK(a.gt_edges.v == b.gt_edges.v);

  const Sample c = generate_scene(cfg, tax, 4);
  CHECK(a.parts.v != c.parts.v);
  GenConfig other = cfg;
  other.seed = 43;
  const Sample d = generate_scene(other, tax, 3);
  CHECK(a.parts.v != d.parts.v);
}

TEST_CASE("parts partition objects and labels stay in range") {
  GenConfig cfg;
  cfg.num_images = 24;
  cfg.seed = 7;
  const Dataset ds = generate_dataset(cfg);
  REQUIRE(ds.samples.size() == 24);
  for (const auto &s : ds.samples) {
    for (int64_t p = 0; p < s.parts.numel(); ++p) {
      const int32_t part = s.parts.v[static_cast<size_t>(p)];
      const int32_t obj = s.objects.v[static_cast<size_t>(p)];
      CHECK(part >= 0);
      CHECK(part < ds.num_classes());
      CHECK((part == 0) == (obj == 0));
      if (part != 0) CHECK(ds.taxonomy.object_of_part(part) == obj);
    }
    for (double x : s.image.v) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

TEST_CASE("rim, cap, and spot components stay small") {
  GenConfig cfg;
  cfg.num_images = 40;
  cfg.seed = 11;
  cfg.min_objects = 3;
  cfg.max_objects = 3;
  const Dataset ds = generate_dataset(cfg);
  for (int32_t cls : {1, 4, 5, 7}) { // rim, cap_a, cap_b, spot
    std::vector<int64_t> areas;
    for (const auto &s : ds.samples) {
      const auto a = component_areas(s.parts, cls);
      areas.insert(areas.end(), a.begin(), a.end());
    }
    REQUIRE(!areas.empty());
    std::sort(areas.begin(), areas.end());
    const int64_t median = areas[areas.size() / 2];
    CHECK(median < 625);
  }
}

TEST_CASE("every scene carries at least one object and clean edges") {
  GenConfig cfg;
  cfg.num_images = 32;
  cfg.seed = 5;
  const Dataset ds = generate_dataset(cfg);
  for (const auto &s : ds.samples) {
    int64_t fg = 0;
    for (int32_t lab : s.parts.v) fg += lab != 0;
    CHECK(fg > 0);
    const Mask expect = derive_gt_edges(s.parts);
    CHECK(s.gt_edges.v == expect.v);
    // Edges are contained in the foreground.
    for (int64_t p = 0; p < s.parts.numel(); ++p)
      if (s.gt_edges.v[static_cast<size_t>(p)])
        CHECK(s.parts.v[static_cast<size_t>(p)] != 0);
  }
}

TEST_CASE("tiny canvases are rejected") {
  GenConfig cfg;
  cfg.width = 16;
  cfg.height = 16;
  CHECK_THROWS_AS(generate_scene(cfg, desk_taxonomy(), 0), ConfigError);
}

TEST_CASE("manifest counts class pixels") {
  GenConfig cfg;
  cfg.num_images = 6;
  cfg.seed = 3;
  const Dataset ds = generate_dataset(cfg);
  const nlohmann::json m = dataset_manifest(ds);
  CHECK(m["num_classes"] == 8);
  CHECK(m["num_images"] == 6);
  CHECK(m["images"].size() == 6);
  int64_t total = 0;
  for (const auto &[name, count] : m["class_pixels"].items())
    total += count.get<int64_t>();
  CHECK(total == 6 * cfg.width * cfg.height);
  int64_t fg = 0;
  for (const auto &s : ds.samples)
    for (int32_t lab : s.parts.v) fg += lab != 0;
  CHECK(m["class_pixels"]["background"].get<int64_t>() ==
        total - fg);
}

TEST_CASE("save/load round-trips a dataset exactly") {
  const fs::path dir = temp_dir("roundtrip");
  GenConfig cfg;
  cfg.num_images = 5;
  cfg.seed = 19;
  const Dataset ds = generate_dataset(cfg);
  save_dataset(ds, dir.string());
  const Dataset back = load_raster_dataset(dir.string());
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.num_classes() == ds.num_classes());
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].id == ds.samples[i].id);
    CHECK(back.samples[i].objects.v == ds.samples[i].objects.v);
    CHECK(back.samples[i].parts.v == ds.samples[i].parts.v);
    CHECK(back.samples[i].gt_edges.v == ds.samples[i].gt_edges.v);
    REQUIRE(back.samples[i].image.v.size() == ds.samples[i].image.v.size());
    for (size_t k = 0; k < ds.samples[i].image.v.size(); ++k)
      CHECK(back.samples[i].image.v[k] ==
            doctest::Approx(ds.samples[i].image.v[k]).epsilon(1e-12));
  }
  fs::remove_all(dir);
}

TEST_CASE("loader derives edges when the edges directory is missing") {
  const fs::path dir = temp_dir("noedges");
  GenConfig cfg;
  cfg.num_images = 3;
  cfg.seed = 23;
  const Dataset ds = generate_dataset(cfg);
  save_dataset(ds, dir.string());
  fs::remove_all(dir / "edges");
  const Dataset back = load_raster_dataset(dir.string());
  for (size_t i = 0; i < ds.samples.size(); ++i)
    CHECK(back.samples[i].gt_edges.v == ds.samples[i].gt_edges.v);
  fs::remove_all(dir);
}

TEST_CASE("loader names the file and pixel of an out-of-range label") {
  const fs::path dir = temp_dir("badlabel");
  GenConfig cfg;
  cfg.num_images = 1;
  cfg.seed = 2;
  Dataset ds = generate_dataset(cfg);
  ds.samples[0].parts.at(4, 9) = 200; // outside [0, 8)
  save_dataset(ds, dir.string());
  bool threw = false;
  try {
    load_raster_dataset(dir.string());
  } catch (const DataError &e) {
    threw = true;
    const std::string msg = e.what();
    CHECK(msg.find("scene_00000.pgm") != std::string::npos);
    CHECK(msg.find("200") != std::string::npos);
    CHECK(msg.find("(4, 9)") != std::string::npos);
  }
  CHECK(threw);
  fs::remove_all(dir);
}

TEST_CASE("loader works without a manifest by scanning images/") {
  const fs::path dir = temp_dir("scan");
  GenConfig cfg;
  cfg.num_images = 4;
  cfg.seed = 31;
  const Dataset ds = generate_dataset(cfg);
  save_dataset(ds, dir.string());
  fs::remove(dir / "manifest.json");
  const Dataset back = load_raster_dataset(dir.string());
  REQUIRE(back.samples.size() == 4);
  for (size_t i = 0; i < 4; ++i)
    CHECK(back.samples[i].parts.v == ds.samples[i].parts.v);
  fs::remove_all(dir);
}

TEST_CASE("loading a missing directory fails cleanly") {
  CHECK_THROWS_AS(load_raster_dataset("/nonexistent/olaf_ds"), DataError);
}
