// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "olaf/core/error.hpp"
#include "olaf/core/rng.hpp"
#include "olaf/data.hpp"
#include "olaf/harness.hpp"

namespace {

int g_exit = 0;

void print_report(const olaf::harness::RunReport &rep) {
  const auto show = [](const std::optional<double> &v) {
    return v ? olaf::strfmt("%.4f", *v) : std::string("undef");
  };
  const olaf::metrics::MetricReport &m = rep.final_metrics;
  std::printf("config   %s\n", rep.checksum.c_str());
  std::printf("mIoU %s  mAvg %s  sqIoU %s  sqAvg %s  mIoU_small %s\n",
              show(m.miou).c_str(), show(m.mavg).c_str(),
              show(m.sqiou).c_str(), show(m.sqavg).c_str(),
              show(m.miou_small).c_str());
  std::printf("best epoch %lld, %.1f s, %zu divergent epoch(s)\n",
              static_cast<long long>(rep.best_epoch), rep.wall_seconds,
              rep.divergence_epochs.size());
}

/// Registers --config plus one flag per RunConfig field on `sub`. The
/// returned materializer loads the config file (when given) and then applies
/// exactly the flags the user passed on top of it.
std::function<olaf::harness::RunConfig()> attach_run_options(CLI::App *sub) {
  using olaf::harness::RunConfig;
  struct Locals {
    std::string config_path;
    std::vector<std::function<void(RunConfig &)>> apply;
  };
  auto locals = std::make_shared<Locals>();
  sub->add_option("--config", locals->config_path,
                  "JSON run config; other flags override its fields");

  const auto add = [locals, sub](const char *name, auto init, auto setter,
                                 const char *help) {
    auto holder = std::make_shared<decltype(init)>(init);
    CLI::Option *opt = sub->add_option(name, *holder, help);
    locals->apply.push_back([opt, holder, setter](RunConfig &c) {
      if (opt->count() > 0) setter(c, *holder);
    });
  };

  add("--dataset", std::string(),
      [](RunConfig &c, const std::string &v) { c.dataset.path = v; },
      "directory with train/ and val/ rasters (empty: generate)");
  add("--train-images", int64_t{0},
      [](RunConfig &c, int64_t v) { c.dataset.train_images = v; },
      "generated training images");
  add("--val-images", int64_t{0},
      [](RunConfig &c, int64_t v) { c.dataset.val_images = v; },
      "generated validation images");
  add("--height", int64_t{0},
      [](RunConfig &c, int64_t v) { c.dataset.height = v; },
      "generated image height");
  add("--width", int64_t{0},
      [](RunConfig &c, int64_t v) { c.dataset.width = v; },
      "generated image width");
  add("--data-seed", uint64_t{0},
      [](RunConfig &c, uint64_t v) { c.dataset.seed = v; },
      "scene-generation seed");
  add("--arch", std::string(),
      [](RunConfig &c, const std::string &v) { c.arch = v; },
      "minisegnet | miniunet | minitransformer");
  add("--pattern", std::string(),
      [](RunConfig &c, const std::string &v) { c.pattern = v; },
      "none | ldf | edge | fg | edge+fg | olaf");
  add("--provider", std::string(),
      [](RunConfig &c, const std::string &v) { c.provider = v; },
      "cue-mask provider: oracle | degraded | gradient | file");
  add("--noise", 0.0, [](RunConfig &c, double v) { c.noise = v; },
      "cue-mask corruption level for the degraded provider");
  add("--scheme", std::string(),
      [](RunConfig &c, const std::string &v) { c.scheme = v; },
      "input-adaptation scheme (empty: fresh initialization)");
  add("--baseline", std::string(),
      [](RunConfig &c, const std::string &v) { c.baseline = v; },
      "baseline checkpoint consumed by --scheme");
  add("--n-warm", int64_t{0},
      [](RunConfig &c, int64_t v) { c.n_warm = v; },
      "warm-up epochs for adapted runs");
  add("--optimizer", std::string(),
      [](RunConfig &c, const std::string &v) { c.optimizer = v; },
      "adam | sgd");
  add("--lr", 0.0, [](RunConfig &c, double v) { c.lr = v; },
      "base learning rate");
  add("--batch-size", int64_t{0},
      [](RunConfig &c, int64_t v) { c.batch_size = v; }, "batch size");
  add("--epochs", int64_t{0},
      [](RunConfig &c, int64_t v) { c.epochs = v; }, "training epochs");
  add("--eval-every", int64_t{0},
      [](RunConfig &c, int64_t v) { c.eval_every = v; },
      "validation cadence in epochs (0: final only)");
  add("--seed", uint64_t{0},
      [](RunConfig &c, uint64_t v) { c.seed = v; },
      "model-init and training seed");
  add("--out", std::string(),
      [](RunConfig &c, const std::string &v) { c.out_dir = v; },
      "output directory");

  auto det = std::make_shared<bool>(true);
  CLI::Option *det_opt =
      sub->add_flag("--deterministic,!--no-deterministic", *det,
                    "fixed seeds and serial data order (default on)");
  locals->apply.push_back([det_opt, det](RunConfig &c) {
    if (det_opt->count() > 0) c.deterministic = *det;
  });

  return [locals]() {
    RunConfig cfg;
    if (!locals->config_path.empty())
      cfg = olaf::harness::load_run_config(locals->config_path);
    for (const auto &f : locals->apply) f(cfg);
    return cfg;
  };
}

void add_seeds_option(CLI::App *sub, std::vector<uint64_t> &seeds) {
  sub->add_option("--seeds", seeds, "seed set, e.g. --seeds 1,2,3")
      ->delimiter(',');
}

} // namespace

int main(int argc, char **argv) {
  using namespace olaf;

  CLI::App app{"olaf: object-cue segmentation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", harness::kCodeVersion);

  // generate-data
  CLI::App *gen = app.add_subcommand(
      "generate-data", "render a synthetic train/val dataset to disk");
  auto gen_out = std::make_shared<std::string>();
  auto gen_cfg = std::make_shared<data::GenConfig>();
  auto gen_val = std::make_shared<int64_t>(50);
  gen->add_option("--out", *gen_out, "output directory")->required();
  gen_cfg->num_images = 200;
  gen->add_option("--train-images", gen_cfg->num_images, "training images");
  gen->add_option("--val-images", *gen_val, "validation images");
  gen->add_option("--height", gen_cfg->height, "image height");
  gen->add_option("--width", gen_cfg->width, "image width");
  gen->add_option("--seed", gen_cfg->seed, "scene-generation seed");
  gen->add_option("--min-objects", gen_cfg->min_objects, "objects per scene");
  gen->add_option("--max-objects", gen_cfg->max_objects, "objects per scene");
  gen->add_option("--pixel-noise", gen_cfg->pixel_noise, "RGB noise stddev");
  gen->add_option("--color-jitter", gen_cfg->color_jitter,
                  "per-scene color jitter");
  gen->add_option("--distractors", gen_cfg->distractors,
                  "background distractor patches");
  gen->callback([gen_out, gen_cfg, gen_val]() {
    data::GenConfig g = *gen_cfg;
    data::save_dataset(data::generate_dataset(g), *gen_out + "/train");
    g.num_images = *gen_val;
    g.seed = SplitMix64::mix(gen_cfg->seed, 0x76616cull);
    data::save_dataset(data::generate_dataset(g), *gen_out + "/val");
    std::printf("wrote %s/train and %s/val\n", gen_out->c_str(),
                gen_out->c_str());
  });

  // train
  CLI::App *train = app.add_subcommand("train", "train one run config");
  auto train_cfg = attach_run_options(train);
  train->callback([train_cfg]() {
    const harness::RunReport rep = harness::train_run(train_cfg());
    print_report(rep);
    if (!rep.divergence_epochs.empty()) g_exit = 2;
  });

  // eval
  CLI::App *eval = app.add_subcommand(
      "eval", "evaluate a checkpoint on a config's validation split");
  auto eval_ckpt = std::make_shared<std::string>();
  auto eval_out = std::make_shared<std::string>("eval");
  eval->add_option("--checkpoint", *eval_ckpt, "model checkpoint")->required();
  eval->add_option("--report-dir", *eval_out,
                   "where report.json and per_class.csv land");
  auto eval_cfg = attach_run_options(eval);
  eval->callback([eval_ckpt, eval_out, eval_cfg]() {
    print_report(harness::eval_run(*eval_ckpt, eval_cfg(), *eval_out));
  });

  // ablate
  CLI::App *abl = app.add_subcommand(
      "ablate", "run the 6-pattern ingredient grid and emit the table");
  auto abl_seeds = std::make_shared<std::vector<uint64_t>>(
      std::vector<uint64_t>{1, 2, 3});
  add_seeds_option(abl, *abl_seeds);
  auto abl_cfg = attach_run_options(abl);
  abl->callback([abl_cfg, abl_seeds]() {
    const harness::RunConfig base = abl_cfg();
    const harness::AblationTable t = harness::ablate(base, *abl_seeds);
    for (const harness::GridRow &row : t.rows)
      std::printf("%-8s mIoU %.4f  mIoU_small %.4f\n", row.name.c_str(),
                  row.median_miou, row.median_miou_small);
    std::printf("wrote %s/ablation.csv\n", base.out_dir.c_str());
  });

  // noise-sweep
  CLI::App *sweep = app.add_subcommand(
      "noise-sweep", "train per corruption level and plot mIoU vs. noise");
  auto sweep_levels = std::make_shared<std::vector<double>>(
      std::vector<double>{0.0, 0.05, 0.1, 0.2, 0.3});
  auto sweep_seeds = std::make_shared<std::vector<uint64_t>>(
      std::vector<uint64_t>{1, 2, 3});
  sweep->add_option("--levels", *sweep_levels, "corruption levels")
      ->delimiter(',');
  add_seeds_option(sweep, *sweep_seeds);
  auto sweep_cfg = attach_run_options(sweep);
  sweep->callback([sweep_cfg, sweep_levels, sweep_seeds]() {
    const harness::RunConfig base = sweep_cfg();
    const harness::NoiseSweepResult r =
        harness::noise_sweep(base, *sweep_levels, *sweep_seeds);
    for (const harness::NoisePoint &p : r.points)
      std::printf("requested %.2f  measured %.4f  median mIoU %.4f\n",
                  p.requested, p.measured, p.median_miou);
    std::printf("wrote %s/noise_sweep.csv and noise_sweep.svg\n",
                base.out_dir.c_str());
  });

  // adapt-compare
  CLI::App *cmp = app.add_subcommand(
      "adapt-compare", "train every input-adaptation scheme from a shared "
                       "baseline and report stability");
  auto cmp_seeds = std::make_shared<std::vector<uint64_t>>(
      std::vector<uint64_t>{1, 2, 3});
  add_seeds_option(cmp, *cmp_seeds);
  auto cmp_cfg = attach_run_options(cmp);
  cmp->callback([cmp_cfg, cmp_seeds]() {
    const harness::RunConfig base = cmp_cfg();
    const harness::AdaptCompareResult r =
        harness::adapt_compare(base, *cmp_seeds);
    for (const harness::SchemeRow &row : r.rows)
      std::printf("%-14s divergences %lld  median mIoU %.4f\n",
                  row.scheme.c_str(), static_cast<long long>(row.divergences),
                  row.median_miou);
    std::printf("wrote %s/adapt_compare.csv\n", base.out_dir.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  } catch (const ConfigError &e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 3;
  } catch (const DataError &e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 4;
  } catch (const Error &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return g_exit;
}
