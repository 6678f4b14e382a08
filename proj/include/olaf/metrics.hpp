// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "olaf/data.hpp"

namespace olaf::metrics {

/// K x K pixel counts, counts[g][p] = pixels with ground truth g predicted p.
/// Mergeable by elementwise addition, so shards can accumulate independently.
struct ConfusionMatrix {
  int64_t k = 0;
  std::vector<int64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int64_t num_classes)
      : k(num_classes),
        counts(static_cast<size_t>(num_classes * num_classes), 0) {}

  int64_t &at(int64_t g, int64_t p) {
    return counts[static_cast<size_t>(g * k + p)];
  }
  int64_t at(int64_t g, int64_t p) const {
    return counts[static_cast<size_t>(g * k + p)];
  }
  int64_t total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
  }
  void merge(const ConfusionMatrix &other);
};

/// Adds one (pred, gt) raster pair. Labels outside [0, K) are a DataError
/// naming the offending value.
void accumulate(ConfusionMatrix &cm, const data::LabelMap &pred,
                const data::LabelMap &gt);

/// IoU_c = counts[c][c] / (row_c + col_c - counts[c][c]); classes absent
/// from both ground truth and prediction are nullopt.
std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix &cm);

/// Mean over defined entries; nullopt when every entry is undefined.
std::optional<double> mean_defined(const std::vector<std::optional<double>> &xs);

std::optional<double> miou(const ConfusionMatrix &cm);

/// Per-object aggregation: each object's value is the mean of its defined
/// part scores; the overall mean covers objects with at least one defined
/// part. Background never participates.
struct ObjectMeans {
  std::vector<std::optional<double>> per_object; // taxonomy object order
  std::optional<double> overall;
};

ObjectMeans mavg(const std::vector<std::optional<double>> &per_class,
                 const data::Taxonomy &tax);

/// sqIoU accumulator: sqIoU_c = sum_i sqrt(a_ic) * IoU_ic / sum_i sqrt(a_ic)
/// over images i, where a_ic is the ground-truth pixel area of class c in
/// image i. The square root compresses the dominance of large instances.
struct SqIouAccumulator {
  int64_t k = 0;
  std::vector<double> weighted; // sum of sqrt(area) * IoU per class
  std::vector<double> weight;   // sum of sqrt(area) per class

  SqIouAccumulator() = default;
  explicit SqIouAccumulator(int64_t num_classes)
      : k(num_classes), weighted(static_cast<size_t>(num_classes), 0.0),
        weight(static_cast<size_t>(num_classes), 0.0) {}

  void add(const data::LabelMap &pred, const data::LabelMap &gt);
  void merge(const SqIouAccumulator &other);
};

std::vector<std::optional<double>> sqiou_per_class(const SqIouAccumulator &acc);

/// One 4-connected component of a class, with an inclusive bounding box.
struct Component {
  int64_t area = 0;
  int64_t i0 = 0, j0 = 0, i1 = -1, j1 = -1;
};

std::vector<Component> connected_components(const data::LabelMap &m,
                                            int32_t cls);

/// Small-part IoU: per class, keep ground-truth components with area below
/// threshold_area, restrict both rasters to the union of their bounding
/// boxes dilated by 2 px, and accumulate intersection/union across images.
/// overall is nullopt when no small instance exists anywhere.
struct SmallPartResult {
  std::vector<std::optional<double>> per_class;
  std::vector<std::optional<double>> per_object;
  std::optional<double> overall;
};

SmallPartResult miou_small(const std::vector<data::LabelMap> &preds,
                           const std::vector<data::LabelMap> &gts,
                           const data::Taxonomy &tax,
                           int64_t threshold_area = 625);

// ---------------------------------------------------------------------------
// Reports.

struct MetricReport {
  std::string variant; // taxonomy name
  std::string scheme;  // run label
  std::vector<std::optional<double>> class_iou;
  std::optional<double> miou, mavg, sqiou, sqavg, miou_small;
};

/// Runs the whole metric family over aligned prediction/ground-truth lists.
MetricReport evaluate(const std::vector<data::LabelMap> &preds,
                      const std::vector<data::LabelMap> &gts,
                      const data::Taxonomy &tax);

/// One row per class plus summary rows; undefined values print as "undef".
std::string report_csv(const MetricReport &r, const data::Taxonomy &tax);

/// {variant, scheme, metrics{...}}; undefined values serialize as null.
nlohmann::json report_json(const MetricReport &r);

} // namespace olaf::metrics
