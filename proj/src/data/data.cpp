// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
//
// Desk-scale synthetic scenes: three object archetypes with seven part
// classes, rendered as flat-colour rasters with background distractors so
// that object cues carry real information.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "olaf/core/error.hpp"
#include "olaf/data.hpp"

namespace fs = std::filesystem;

namespace olaf::data {

namespace {

constexpr int32_t kDisk = 1, kBar = 2, kBlob = 3;
constexpr int32_t kRim = 1, kCore = 2, kShaft = 3, kCapA = 4, kCapB = 5,
                  kBody = 6, kSpot = 7;

struct Rgb {
  double r, g, b;
};

Rgb part_palette(int32_t part) {
  switch (part) {
    case kRim: return {0.85, 0.16, 0.16};
    case kCore: return {0.95, 0.55, 0.20};
    case kShaft: return {0.20, 0.45, 0.85};
    case kCapA: return {0.52, 0.80, 0.95};
    case kCapB: return {0.36, 0.62, 0.90};
    case kBody: return {0.30, 0.70, 0.36};
    default: return {0.92, 0.86, 0.26}; // kSpot
  }
}

/// Pixels of one placed object, with per-pixel part labels.
struct Footprint {
  std::vector<int64_t> px;      // i * w + j
  std::vector<int32_t> part;    // parallel to px
  bool ok = false;
};

Footprint place_disk(SplitMix64 &rng, int64_t h, int64_t w) {
  Footprint f;
  const int64_t r = rng.uniform_int(7, 13);
  const int64_t t = rng.uniform_int(1, 2);
  if (w < 2 * r + 4 || h < 2 * r + 4) return f;
  const int64_t cy = rng.uniform_int(r + 1, h - r - 2);
  const int64_t cx = rng.uniform_int(r + 1, w - r - 2);
  const int64_t rr = r * r, ri = (r - t) * (r - t);
  for (int64_t i = cy - r; i <= cy + r; ++i)
    for (int64_t j = cx - r; j <= cx + r; ++j) {
      const int64_t d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
      if (d2 > rr) continue;
      f.px.push_back(i * w + j);
      f.part.push_back(d2 > ri ? kRim : kCore);
    }
  f.ok = true;
  return f;
}

Footprint place_bar(SplitMix64 &rng, int64_t h, int64_t w) {
  Footprint f;
  const int64_t len = rng.uniform_int(18, 28);
  const int64_t thick = rng.uniform_int(3, 5);
  const int64_t cap = rng.uniform_int(3, 5);
  const bool horizontal = rng.uniform_int(0, 1) == 1;
  const int64_t span_w = horizontal ? len : thick;
  const int64_t span_h = horizontal ? thick : len;
  if (w < span_w + 4 || h < span_h + 4) return f;
  const int64_t y0 = rng.uniform_int(1, h - span_h - 2);
  const int64_t x0 = rng.uniform_int(1, w - span_w - 2);
  for (int64_t i = 0; i < span_h; ++i)
    for (int64_t j = 0; j < span_w; ++j) {
      const int64_t along = horizontal ? j : i;
      int32_t part = kShaft;
      if (along < cap) part = kCapA;
      else if (along >= len - cap) part = kCapB;
      f.px.push_back((y0 + i) * w + (x0 + j));
      f.part.push_back(part);
    }
  f.ok = true;
  return f;
}

Footprint place_blob(SplitMix64 &rng, int64_t h, int64_t w) {
  Footprint f;
  const int64_t a = rng.uniform_int(6, 11); // x semi-axis
  const int64_t b = rng.uniform_int(6, 11); // y semi-axis
  if (w < 2 * a + 4 || h < 2 * b + 4) return f;
  const int64_t cy = rng.uniform_int(b + 1, h - b - 2);
  const int64_t cx = rng.uniform_int(a + 1, w - a - 2);
  const int64_t rs = rng.uniform_int(1, 2);
  // Spot centre kept well inside the ellipse.
  const double su = rng.uniform(-0.45, 0.45);
  const double sv = rng.uniform(-0.45, 0.45);
  const int64_t sy = cy + static_cast<int64_t>(std::lround(sv * b));
  const int64_t sx = cx + static_cast<int64_t>(std::lround(su * a));
  for (int64_t i = cy - b; i <= cy + b; ++i)
    for (int64_t j = cx - a; j <= cx + a; ++j) {
      const double ey = static_cast<double>(i - cy) / static_cast<double>(b);
      const double ex = static_cast<double>(j - cx) / static_cast<double>(a);
      if (ex * ex + ey * ey > 1.0) continue;
      const int64_t d2 = (i - sy) * (i - sy) + (j - sx) * (j - sx);
      f.px.push_back(i * w + j);
      f.part.push_back(d2 <= rs * rs ? kSpot : kBody);
    }
  f.ok = true;
  return f;
}

} // namespace

Taxonomy desk_taxonomy() {
  Taxonomy tax;
  tax.name = "desk";
  tax.objects = {{kDisk, "disk"}, {kBar, "bar"}, {kBlob, "blob"}};
  tax.parts = {{kRim, "rim", "disk"},    {kCore, "core", "disk"},
               {kShaft, "shaft", "bar"}, {kCapA, "cap_a", "bar"},
               {kCapB, "cap_b", "bar"},  {kBody, "body", "blob"},
               {kSpot, "spot", "blob"}};
  return tax;
}

const ObjectDef *Taxonomy::object_by_id(int32_t id) const {
  for (const auto &o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

const PartDef *Taxonomy::part_by_id(int32_t id) const {
  for (const auto &p : parts)
    if (p.id == id) return &p;
  return nullptr;
}

int32_t Taxonomy::object_of_part(int32_t part_id) const {
  const PartDef *p = part_by_id(part_id);
  if (!p) return 0;
  for (const auto &o : objects)
    if (o.name == p->object_name) return o.id;
  return 0;
}

std::string serialize_taxonomy(const Taxonomy &tax) {
  std::ostringstream out;
  out << "taxonomy " << tax.name << "\n";
  for (const auto &o : tax.objects)
    out << "object " << o.id << " " << o.name << "\n";
  for (const auto &p : tax.parts)
    out << "part " << p.id << " " << p.name << " " << p.object_name << "\n";
  return out.str();
}

Taxonomy parse_taxonomy(const std::string &text) {
  Taxonomy tax;
  std::istringstream in(text);
  std::string line;
  bool saw_header = false;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "taxonomy") {
      ls >> tax.name;
      saw_header = true;
    } else if (kind == "object") {
      ObjectDef o;
      ls >> o.id >> o.name;
      OLAF_CHECK(!ls.fail(), DataError, "taxonomy line %lld: bad object entry",
                 static_cast<long long>(lineno));
      tax.objects.push_back(o);
    } else if (kind == "part") {
      PartDef p;
      ls >> p.id >> p.name >> p.object_name;
      OLAF_CHECK(!ls.fail(), DataError, "taxonomy line %lld: bad part entry",
                 static_cast<long long>(lineno));
      tax.parts.push_back(p);
    } else {
      throw DataError(strfmt("taxonomy line %lld: unknown keyword '%s'",
                             static_cast<long long>(lineno), kind.c_str()));
    }
  }
  OLAF_CHECK(saw_header && !tax.parts.empty(), DataError,
             "taxonomy text lacks a header or parts");
  for (const auto &p : tax.parts)
    OLAF_CHECK(std::any_of(tax.objects.begin(), tax.objects.end(),
                           [&](const ObjectDef &o) { return o.name == p.object_name; }),
               DataError, "part '%s' references unknown object '%s'",
               p.name.c_str(), p.object_name.c_str());
  return tax;
}

void save_taxonomy(const std::string &path, const Taxonomy &tax) {
  std::ofstream out(path);
  OLAF_CHECK(out.good(), DataError, "cannot write '%s'", path.c_str());
  out << serialize_taxonomy(tax);
  OLAF_CHECK(out.good(), DataError, "short write to '%s'", path.c_str());
}

Taxonomy load_taxonomy(const std::string &path) {
  std::ifstream in(path);
  OLAF_CHECK(in.good(), DataError, "cannot open '%s'", path.c_str());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_taxonomy(buf.str());
}

Mask derive_gt_edges(const LabelMap &parts) {
  Mask edges(parts.h, parts.w);
  for (int64_t i = 0; i < parts.h; ++i)
    for (int64_t j = 0; j < parts.w; ++j) {
      const int32_t c = parts.at(i, j);
      if (c == 0) continue;
      const bool boundary =
          (i > 0 && parts.at(i - 1, j) != c) ||
          (i + 1 < parts.h && parts.at(i + 1, j) != c) ||
          (j > 0 && parts.at(i, j - 1) != c) ||
          (j + 1 < parts.w && parts.at(i, j + 1) != c);
      if (boundary) edges.at(i, j) = 1;
    }
  return edges;
}

Sample generate_scene(const GenConfig &cfg, const Taxonomy &tax,
                      int64_t index) {
  OLAF_CHECK(cfg.width >= 36 && cfg.height >= 36, ConfigError,
             "generate: canvas %lldx%lld too small for the desk archetypes",
             static_cast<long long>(cfg.width),
             static_cast<long long>(cfg.height));
  const int64_t h = cfg.height, w = cfg.width;
  SplitMix64 rng(SplitMix64::mix(cfg.seed, static_cast<uint64_t>(index)));

  Sample s;
  s.id = strfmt("scene_%05lld", static_cast<long long>(index));
  s.objects = LabelMap(h, w);
  s.parts = LabelMap(h, w);
  s.image = RgbImage(h, w);

  // Choose which archetypes appear.
  std::vector<int32_t> kinds = {kDisk, kBar, kBlob};
  shuffle(kinds, rng);
  const int64_t lo = std::clamp<int64_t>(cfg.min_objects, 1, 3);
  const int64_t hi = std::clamp<int64_t>(cfg.max_objects, lo, 3);
  kinds.resize(static_cast<size_t>(rng.uniform_int(lo, hi)));

  for (int32_t kind : kinds) {
    for (int attempt = 0; attempt < 60; ++attempt) {
      Footprint f;
      if (kind == kDisk) f = place_disk(rng, h, w);
      else if (kind == kBar) f = place_bar(rng, h, w);
      else f = place_blob(rng, h, w);
      if (!f.ok) break; // archetype cannot fit this canvas at all
      bool clear = true;
      for (int64_t p : f.px)
        if (s.objects.v[static_cast<size_t>(p)] != 0) {
          clear = false;
          break;
        }
      if (!clear) continue;
      for (size_t k = 0; k < f.px.size(); ++k) {
        s.objects.v[static_cast<size_t>(f.px[k])] = kind;
        s.parts.v[static_cast<size_t>(f.px[k])] = f.part[k];
      }
      break;
    }
  }

  // Per-scene part colours: fixed palette plus jitter.
  std::vector<Rgb> colours(static_cast<size_t>(tax.num_classes()));
  for (const auto &p : tax.parts) {
    Rgb c = part_palette(p.id);
    c.r += rng.uniform(-cfg.color_jitter, cfg.color_jitter);
    c.g += rng.uniform(-cfg.color_jitter, cfg.color_jitter);
    c.b += rng.uniform(-cfg.color_jitter, cfg.color_jitter);
    colours[static_cast<size_t>(p.id)] = c;
  }

  // Background wash.
  const Rgb bg = {rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0),
                  rng.uniform(0.0, 1.0)};
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      s.image.at(0, i, j) = bg.r;
      s.image.at(1, i, j) = bg.g;
      s.image.at(2, i, j) = bg.b;
    }

  // Distractor patches: background regions painted in part colours. They
  // never touch object pixels, so the labels stay clean while the RGB
  // evidence turns ambiguous.
  for (int64_t dcount = 0; dcount < cfg.distractors; ++dcount) {
    const int32_t part =
        tax.parts[static_cast<size_t>(rng.uniform_int(
                      0, static_cast<int64_t>(tax.parts.size()) - 1))]
            .id;
    const Rgb c = colours[static_cast<size_t>(part)];
    const int64_t dh = rng.uniform_int(2, 9);
    const int64_t dw = rng.uniform_int(2, 9);
    const int64_t y0 = rng.uniform_int(0, h - dh - 1);
    const int64_t x0 = rng.uniform_int(0, w - dw - 1);
    for (int64_t i = y0; i < y0 + dh; ++i)
      for (int64_t j = x0; j < x0 + dw; ++j) {
        if (s.objects.at(i, j) != 0) continue;
        s.image.at(0, i, j) = c.r;
        s.image.at(1, i, j) = c.g;
        s.image.at(2, i, j) = c.b;
      }
  }

  // Object colours over the top.
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      const int32_t part = s.parts.at(i, j);
      if (part == 0) continue;
      const Rgb c = colours[static_cast<size_t>(part)];
      s.image.at(0, i, j) = c.r;
      s.image.at(1, i, j) = c.g;
      s.image.at(2, i, j) = c.b;
    }

  // Pixel noise, clamp, and byte quantisation so that in-memory scenes
  // match their raster round-trip exactly.
  for (auto &x : s.image.v) {
    x += rng.normal(0.0, cfg.pixel_noise);
    x = std::clamp(x, 0.0, 1.0);
    x = static_cast<double>(static_cast<int>(x * 255.0 + 0.5)) / 255.0;
  }

  s.gt_edges = derive_gt_edges(s.parts);
  return s;
}

Dataset generate_dataset(const GenConfig &cfg) {
  Dataset ds;
  ds.taxonomy = desk_taxonomy();
  ds.samples.reserve(static_cast<size_t>(cfg.num_images));
  for (int64_t i = 0; i < cfg.num_images; ++i)
    ds.samples.push_back(generate_scene(cfg, ds.taxonomy, i));
  return ds;
}

nlohmann::json dataset_manifest(const Dataset &ds) {
  nlohmann::json m;
  m["taxonomy"] = ds.taxonomy.name;
  m["num_classes"] = ds.num_classes();
  m["num_images"] = ds.samples.size();
  std::vector<int64_t> class_pixels(static_cast<size_t>(ds.num_classes()), 0);
  nlohmann::json images = nlohmann::json::array();
  for (const auto &s : ds.samples) {
    images.push_back(s.id);
    for (int32_t lab : s.parts.v)
      if (lab >= 0 && lab < ds.num_classes())
        ++class_pixels[static_cast<size_t>(lab)];
  }
  m["images"] = images;
  nlohmann::json hist = nlohmann::json::object();
  for (size_t c = 0; c < class_pixels.size(); ++c) {
    const char *name = c == 0 ? "background"
                              : ds.taxonomy.part_by_id(static_cast<int32_t>(c))
                                    ->name.c_str();
    hist[name] = class_pixels[c];
  }
  m["class_pixels"] = hist;
  return m;
}

void save_dataset(const Dataset &ds, const std::string &dir) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "objects");
  fs::create_directories(fs::path(dir) / "parts");
  fs::create_directories(fs::path(dir) / "edges");
  for (const auto &s : ds.samples) {
    save_ppm((fs::path(dir) / "images" / (s.id + ".ppm")).string(), s.image);
    save_label_pgm((fs::path(dir) / "objects" / (s.id + ".pgm")).string(),
                   s.objects);
    save_label_pgm((fs::path(dir) / "parts" / (s.id + ".pgm")).string(),
                   s.parts);
    save_mask_pgm((fs::path(dir) / "edges" / (s.id + ".pgm")).string(),
                  s.gt_edges);
  }
  save_taxonomy((fs::path(dir) / "taxonomy.txt").string(), ds.taxonomy);
  std::ofstream mf((fs::path(dir) / "manifest.json").string());
  OLAF_CHECK(mf.good(), DataError, "cannot write manifest in '%s'",
             dir.c_str());
  mf << dataset_manifest(ds).dump(2) << "\n";
}

Dataset load_raster_dataset(const std::string &dir) {
  OLAF_CHECK(fs::is_directory(dir), DataError, "'%s' is not a directory",
             dir.c_str());
  Dataset ds;
  ds.taxonomy = load_taxonomy((fs::path(dir) / "taxonomy.txt").string());
  const int64_t K = ds.num_classes();
  const int32_t max_object =
      static_cast<int32_t>(ds.taxonomy.objects.size());

  std::vector<std::string> ids;
  const fs::path manifest = fs::path(dir) / "manifest.json";
  if (fs::exists(manifest)) {
    std::ifstream mf(manifest);
    nlohmann::json m = nlohmann::json::parse(mf, nullptr, false);
    OLAF_CHECK(!m.is_discarded() && m.contains("images"), DataError,
               "unparseable manifest '%s'", manifest.string().c_str());
    for (const auto &e : m["images"]) ids.push_back(e.get<std::string>());
  } else {
    for (const auto &entry : fs::directory_iterator(fs::path(dir) / "images"))
      if (entry.path().extension() == ".ppm")
        ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
  }
  OLAF_CHECK(!ids.empty(), DataError, "dataset '%s' lists no images",
             dir.c_str());

  for (const auto &id : ids) {
    Sample s;
    s.id = id;
    s.image = load_ppm((fs::path(dir) / "images" / (id + ".ppm")).string());
    const std::string obj_path =
        (fs::path(dir) / "objects" / (id + ".pgm")).string();
    const std::string part_path =
        (fs::path(dir) / "parts" / (id + ".pgm")).string();
    s.objects = load_label_pgm(obj_path);
    s.parts = load_label_pgm(part_path);
    OLAF_CHECK(s.objects.h == s.image.h && s.objects.w == s.image.w &&
                   s.parts.h == s.image.h && s.parts.w == s.image.w,
               DataError, "'%s': raster sizes disagree for image '%s'",
               dir.c_str(), id.c_str());
    for (int64_t i = 0; i < s.parts.h; ++i)
      for (int64_t j = 0; j < s.parts.w; ++j) {
        const int32_t lab = s.parts.at(i, j);
        OLAF_CHECK(lab >= 0 && lab < K, DataError,
                   "'%s': label %d at pixel (%lld, %lld) outside [0, %lld)",
                   part_path.c_str(), lab, static_cast<long long>(i),
                   static_cast<long long>(j), static_cast<long long>(K));
        const int32_t obj = s.objects.at(i, j);
        OLAF_CHECK(obj >= 0 && obj <= max_object, DataError,
                   "'%s': object id %d at pixel (%lld, %lld) outside [0, %d]",
                   obj_path.c_str(), obj, static_cast<long long>(i),
                   static_cast<long long>(j), max_object);
      }
    const fs::path edge_path = fs::path(dir) / "edges" / (id + ".pgm");
    if (fs::exists(edge_path))
      s.gt_edges = load_mask_pgm(edge_path.string());
    else
      s.gt_edges = derive_gt_edges(s.parts);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

} // namespace olaf::data
