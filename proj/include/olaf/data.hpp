// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "olaf/core/rng.hpp"
#include "olaf/core/tensor.hpp"

namespace olaf::data {

/// Dense integer label raster (object ids or part ids; 0 is background).
struct LabelMap {
  int64_t h = 0, w = 0;
  std::vector<int32_t> v;

  LabelMap() = default;
  LabelMap(int64_t height, int64_t width)
      : h(height), w(width), v(static_cast<size_t>(height * width), 0) {}

  int32_t &at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * w + j)]; }
  int32_t at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * w + j)]; }
  int64_t numel() const { return h * w; }
};

/// Binary raster with values 0/1.
struct Mask {
  int64_t h = 0, w = 0;
  std::vector<uint8_t> v;

  Mask() = default;
  Mask(int64_t height, int64_t width)
      : h(height), w(width), v(static_cast<size_t>(height * width), 0) {}

  uint8_t &at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * w + j)]; }
  uint8_t at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * w + j)]; }
  int64_t numel() const { return h * w; }
  int64_t count() const {
    int64_t c = 0;
    for (uint8_t b : v) c += b;
    return c;
  }
};

/// Planar RGB image with values in [0, 1], laid out [3][h][w].
struct RgbImage {
  int64_t h = 0, w = 0;
  std::vector<double> v;

  RgbImage() = default;
  RgbImage(int64_t height, int64_t width)
      : h(height), w(width), v(static_cast<size_t>(3 * height * width), 0.0) {}

  double &at(int64_t c, int64_t i, int64_t j) {
    return v[static_cast<size_t>((c * h + i) * w + j)];
  }
  double at(int64_t c, int64_t i, int64_t j) const {
    return v[static_cast<size_t>((c * h + i) * w + j)];
  }
};

// ---------------------------------------------------------------------------
// Raster file formats. Label maps and masks travel as binary PGM (P5),
// 16-bit big-endian when values exceed 255; images as binary PPM (P6).

void save_label_pgm(const std::string &path, const LabelMap &m);
LabelMap load_label_pgm(const std::string &path);

void save_mask_pgm(const std::string &path, const Mask &m); // 0 / 255
Mask load_mask_pgm(const std::string &path);                // nonzero -> 1

void save_ppm(const std::string &path, const RgbImage &img);
RgbImage load_ppm(const std::string &path);

// ---------------------------------------------------------------------------
// Taxonomy: the fixed object/part class table of a dataset.

struct ObjectDef {
  int32_t id;
  std::string name;
};

struct PartDef {
  int32_t id;
  std::string name;
  std::string object_name;
};

struct Taxonomy {
  std::string name;
  std::vector<ObjectDef> objects;
  std::vector<PartDef> parts;

  /// Part classes plus background.
  int64_t num_classes() const { return static_cast<int64_t>(parts.size()) + 1; }

  const ObjectDef *object_by_id(int32_t id) const;
  const PartDef *part_by_id(int32_t id) const;
  /// Object id owning the given part id, 0 if unknown.
  int32_t object_of_part(int32_t part_id) const;
};

/// The three-object, seven-part desk taxonomy used by the synthetic scenes.
Taxonomy desk_taxonomy();

std::string serialize_taxonomy(const Taxonomy &tax);
Taxonomy parse_taxonomy(const std::string &text); // throws DataError
void save_taxonomy(const std::string &path, const Taxonomy &tax);
Taxonomy load_taxonomy(const std::string &path);

// ---------------------------------------------------------------------------
// Samples and datasets.

struct Sample {
  std::string id;
  RgbImage image;
  LabelMap objects;
  LabelMap parts;
  Mask gt_edges;
};

struct Dataset {
  Taxonomy taxonomy;
  std::vector<Sample> samples;

  int64_t num_classes() const { return taxonomy.num_classes(); }
};

/// Ground-truth part-boundary edges: a pixel is an edge iff it is
/// foreground and at least one 4-neighbour carries a different part label.
Mask derive_gt_edges(const LabelMap &parts);

/// Scene generator configuration. Sizes are in pixels.
struct GenConfig {
  int64_t width = 64;
  int64_t height = 64;
  int64_t num_images = 16;
  uint64_t seed = 1;
  int64_t min_objects = 1;
  int64_t max_objects = 3;
  double pixel_noise = 0.05;   // per-pixel Gaussian RGB noise
  double color_jitter = 0.08;  // per-scene part colour jitter
  int64_t distractors = 6;     // background patches painted in part colours
};

/// Renders one scene deterministically from (cfg.seed, index).
Sample generate_scene(const GenConfig &cfg, const Taxonomy &tax, int64_t index);

/// Generates cfg.num_images scenes under the desk taxonomy.
Dataset generate_dataset(const GenConfig &cfg);

/// Per-class pixel histogram and inventory of a dataset.
nlohmann::json dataset_manifest(const Dataset &ds);

/// Writes images/, objects/, parts/, edges/, taxonomy.txt, manifest.json.
void save_dataset(const Dataset &ds, const std::string &dir);

/// Loads the layout written by save_dataset. edges/ is optional (derived
/// from parts/ when absent); labels outside [0, K) raise DataError naming
/// the file and pixel.
Dataset load_raster_dataset(const std::string &dir);

} // namespace olaf::data
