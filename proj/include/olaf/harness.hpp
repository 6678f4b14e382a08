// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "olaf/channelizer.hpp"
#include "olaf/core/tensor.hpp"
#include "olaf/data.hpp"
#include "olaf/metrics.hpp"
#include "olaf/model.hpp"

namespace olaf::harness {

/// Stamped into every report next to the config checksum.
inline constexpr const char *kCodeVersion = "olaf-0.1.0";

// ---------------------------------------------------------------------------
// Run configuration.

/// Either a directory with train/ and val/ raster datasets, or parameters
/// for generating a synthetic pair on the fly (path empty).
struct DatasetSpec {
  std::string path;
  int64_t train_images = 200;
  int64_t val_images = 50;
  int64_t height = 64;
  int64_t width = 64;
  uint64_t seed = 1;

  bool operator==(const DatasetSpec &) const = default;
};

/// One training or evaluation run, fully serializable. `pattern` selects the
/// ingredient combination: none | ldf | edge | fg | edge+fg | olaf.
struct RunConfig {
  DatasetSpec dataset;
  std::string arch = "minisegnet";
  std::string pattern = "none";
  std::string provider = "oracle"; // oracle | degraded | gradient | file
  double noise = 0.0;
  std::string scheme;   // input-adaptation scheme; empty = fresh init
  std::string baseline; // checkpoint path consumed by `scheme`
  int64_t n_warm = 5;
  std::string optimizer = "adam"; // adam | sgd
  double lr = 1e-3;
  int64_t batch_size = 8;
  int64_t epochs = 15;
  int64_t eval_every = 1; // validation cadence in epochs; 0 = final only
  uint64_t seed = 1;
  bool deterministic = true;
  std::string out_dir = "runs/run";

  bool operator==(const RunConfig &) const = default;
};

nlohmann::json run_config_to_json(const RunConfig &cfg);
RunConfig run_config_from_json(const nlohmann::json &j); // throws DataError
void save_run_config(const std::string &path, const RunConfig &cfg);
RunConfig load_run_config(const std::string &path);

/// FNV-1a over the canonical serialized form, as a 16-digit hex string.
/// out_dir is excluded: the checksum identifies what a run computes, not
/// where it lands, so archived runs can be replayed into fresh directories.
std::string config_checksum(const RunConfig &cfg);

/// What a pattern name means in terms of inputs and modules.
struct PatternSpec {
  bool use_fg = false;
  bool use_edge = false;
  bool with_ldf = false;

  int64_t channels() const { return 3 + (use_fg ? 1 : 0) + (use_edge ? 1 : 0); }
};

PatternSpec parse_pattern(const std::string &name); // throws ConfigError

// ---------------------------------------------------------------------------
// Run report.

struct RunReport {
  std::string checksum;     // of the RunConfig that produced this report
  std::string code_version = kCodeVersion;
  bool completed = false;
  std::vector<double> epoch_losses;      // mean training loss per epoch
  std::vector<double> first_epoch_steps; // per-step losses of epoch 0
  std::vector<int64_t> divergence_epochs;
  int64_t best_epoch = -1;
  double measured_noise = 0.0; // mean cue disagreement against the oracle
  double wall_seconds = 0.0;
  metrics::MetricReport final_metrics; // meaningful iff completed
};

nlohmann::json run_report_to_json(const RunReport &r);
RunReport run_report_from_json(const nlohmann::json &j); // throws DataError

// ---------------------------------------------------------------------------
// Data preparation.

/// A dataset split channelized once up front: per-image input stacks plus
/// part labels, ready to batch.
struct PreparedSplit {
  std::vector<Tensor> inputs; // each [c, h, w]
  std::vector<data::LabelMap> labels;
};

struct PreparedData {
  data::Taxonomy taxonomy;
  PreparedSplit train;
  PreparedSplit val;
  double measured_noise = 0.0;
};

/// Generates or loads the dataset named by the config and assembles input
/// stacks through the configured provider.
PreparedData prepare_data(const RunConfig &cfg);

/// Builds the run's model (fresh or warm-started per cfg.scheme). Schemes
/// other than adapt-n-freeze are applied here; adapt-n-freeze has its own
/// training path inside train_run.
std::unique_ptr<model::SegModel> build_run_model(const RunConfig &cfg,
                                                 int64_t num_classes);

/// Argmax over class logits [k, h, w] -> label map.
data::LabelMap logits_to_labels(const Tensor &logits);

/// Full-split evaluation in inference mode.
metrics::MetricReport evaluate_split(model::SegModel &m,
                                     const PreparedSplit &split,
                                     const data::Taxonomy &tax,
                                     int64_t batch_size);

// ---------------------------------------------------------------------------
// Commands.

/// Trains per config and writes config.json, report.json, and model.ckpt
/// (best validation mIoU) into cfg.out_dir. If the directory already holds a
/// completed report for this exact config checksum, returns it unchanged.
RunReport train_run(const RunConfig &cfg);

/// Evaluation-only pass: restores a checkpoint, evaluates it on the config's
/// validation split, and writes report.json plus a per-class CSV next to it.
RunReport eval_run(const std::string &checkpoint_path, const RunConfig &cfg,
                   const std::string &out_dir);

/// One grid cell of an ablation or sweep, with its per-seed reports.
struct GridRow {
  std::string name;
  std::vector<RunReport> reports; // one per seed
  double median_miou = 0.0;
  double median_mavg = 0.0;
  double median_sqiou = 0.0;
  double median_sqavg = 0.0;
  double median_miou_small = 0.0;
};

struct AblationTable {
  std::vector<GridRow> rows; // none, ldf, edge, fg, edge+fg, olaf
  std::vector<uint64_t> seeds;
  std::string axes_checksum; // checksum of the shared non-varied axes
};

/// Runs the 6-pattern grid over the given seeds (median-aggregated) and
/// writes ablation.csv / ablation.json under base.out_dir. Completed cells
/// are skipped on re-entry.
AblationTable ablate(const RunConfig &base, const std::vector<uint64_t> &seeds);

struct NoisePoint {
  double requested = 0.0;
  double measured = 0.0;
  std::vector<RunReport> reports;
  double median_miou = 0.0;
};

struct NoiseSweepResult {
  std::vector<NoisePoint> points;
  std::vector<uint64_t> seeds;
  std::string axes_checksum;
};

/// Trains the base pattern at each corruption level and emits
/// noise_sweep.csv plus a static noise_sweep.svg plot (measured noise on the
/// x-axis, no smoothing).
NoiseSweepResult noise_sweep(const RunConfig &base,
                             const std::vector<double> &levels,
                             const std::vector<uint64_t> &seeds);

struct SchemeRow {
  std::string scheme;
  std::vector<RunReport> reports; // one per seed
  int64_t divergences = 0;        // summed over seeds
  double median_miou = 0.0;
};

struct AdaptCompareResult {
  std::string baseline_checkpoint;
  std::vector<SchemeRow> rows; // the five schemes
  std::vector<uint64_t> seeds; // identical across schemes
  std::string axes_checksum;
};

/// Trains a shared 3-channel baseline, then every adaptation scheme from it
/// over the same seed set. Writes adapt_compare.csv / adapt_compare.json
/// (the JSON doubles as the fairness manifest) under base.out_dir.
AdaptCompareResult adapt_compare(const RunConfig &base,
                                 const std::vector<uint64_t> &seeds);

/// Polyline plot written as a self-contained SVG. One y-series per label;
/// `annotations` are printed next to the corresponding x positions.
void write_line_plot_svg(const std::string &path, const std::string &title,
                         const std::string &xlabel, const std::string &ylabel,
                         const std::vector<double> &xs,
                         const std::vector<std::vector<double>> &series,
                         const std::vector<std::string> &labels,
                         const std::vector<std::string> &annotations = {});

} // namespace olaf::harness
