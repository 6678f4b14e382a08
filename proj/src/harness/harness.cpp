// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include "olaf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "olaf/adapt.hpp"
#include "olaf/core/autograd.hpp"
#include "olaf/core/error.hpp"
#include "olaf/core/rng.hpp"
#include "olaf/nn/checkpoint.hpp"
#include "olaf/nn/optim.hpp"

namespace olaf::harness {

namespace fs = std::filesystem;
using autograd::NoGradGuard;
using autograd::Variable;

// ---------------------------------------------------------------------------
// Config serialization.

nlohmann::json run_config_to_json(const RunConfig &cfg) {
  return nlohmann::json{
      {"dataset",
       {{"path", cfg.dataset.path},
        {"train_images", cfg.dataset.train_images},
        {"val_images", cfg.dataset.val_images},
        {"height", cfg.dataset.height},
        {"width", cfg.dataset.width},
        {"seed", cfg.dataset.seed}}},
      {"model", {{"arch", cfg.arch}, {"pattern", cfg.pattern}}},
      {"channels", {{"provider", cfg.provider}, {"noise", cfg.noise}}},
      {"adaptation",
       {{"scheme", cfg.scheme},
        {"baseline", cfg.baseline},
        {"n_warm", cfg.n_warm}}},
      {"train",
       {{"optimizer", cfg.optimizer},
        {"lr", cfg.lr},
        {"batch_size", cfg.batch_size},
        {"epochs", cfg.epochs},
        {"eval_every", cfg.eval_every},
        {"seed", cfg.seed},
        {"deterministic", cfg.deterministic}}},
      {"out_dir", cfg.out_dir}};
}

RunConfig run_config_from_json(const nlohmann::json &j) {
  RunConfig cfg;
  try {
    const auto &ds = j.at("dataset");
    cfg.dataset.path = ds.at("path").get<std::string>();
    cfg.dataset.train_images = ds.at("train_images").get<int64_t>();
    cfg.dataset.val_images = ds.at("val_images").get<int64_t>();
    cfg.dataset.height = ds.at("height").get<int64_t>();
    cfg.dataset.width = ds.at("width").get<int64_t>();
    cfg.dataset.seed = ds.at("seed").get<uint64_t>();
    cfg.arch = j.at("model").at("arch").get<std::string>();
    cfg.pattern = j.at("model").at("pattern").get<std::string>();
    cfg.provider = j.at("channels").at("provider").get<std::string>();
    cfg.noise = j.at("channels").at("noise").get<double>();
    cfg.scheme = j.at("adaptation").at("scheme").get<std::string>();
    cfg.baseline = j.at("adaptation").at("baseline").get<std::string>();
    cfg.n_warm = j.at("adaptation").at("n_warm").get<int64_t>();
    const auto &tr = j.at("train");
    cfg.optimizer = tr.at("optimizer").get<std::string>();
    cfg.lr = tr.at("lr").get<double>();
    cfg.batch_size = tr.at("batch_size").get<int64_t>();
    cfg.epochs = tr.at("epochs").get<int64_t>();
    cfg.eval_every = tr.at("eval_every").get<int64_t>();
    cfg.seed = tr.at("seed").get<uint64_t>();
    cfg.deterministic = tr.at("deterministic").get<bool>();
    cfg.out_dir = j.at("out_dir").get<std::string>();
  } catch (const nlohmann::json::exception &e) {
    throw DataError(strfmt("run config: %s", e.what()));
  }
  return cfg;
}

static void write_text(const std::string &path, const std::string &text) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  OLAF_CHECK(out.good(), DataError, "cannot open '%s' for writing",
             path.c_str());
  out << text;
  OLAF_CHECK(out.good(), DataError, "short write to '%s'", path.c_str());
}

static nlohmann::json read_json_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  OLAF_CHECK(in.good(), DataError, "cannot open '%s'", path.c_str());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception &e) {
    throw DataError(strfmt("%s: %s", path.c_str(), e.what()));
  }
}

void save_run_config(const std::string &path, const RunConfig &cfg) {
  write_text(path, run_config_to_json(cfg).dump(2) + "\n");
}

RunConfig load_run_config(const std::string &path) {
  return run_config_from_json(read_json_file(path));
}

std::string config_checksum(const RunConfig &cfg) {
  RunConfig keyed = cfg;
  keyed.out_dir.clear();
  const std::string dump = run_config_to_json(keyed).dump();
  return strfmt("%016llx",
                static_cast<unsigned long long>(fnv1a64(dump)));
}

PatternSpec parse_pattern(const std::string &name) {
  if (name == "none") return {false, false, false};
  if (name == "ldf") return {false, false, true};
  if (name == "edge") return {false, true, false};
  if (name == "fg") return {true, false, false};
  if (name == "edge+fg") return {true, true, false};
  if (name == "olaf") return {true, true, true};
  throw ConfigError(strfmt("unknown ingredient pattern '%s'", name.c_str()));
}

// ---------------------------------------------------------------------------
// Report serialization.

static nlohmann::json optional_json(const std::optional<double> &x) {
  return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

static std::optional<double> optional_from_json(const nlohmann::json &j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

static nlohmann::json metric_report_to_json(const metrics::MetricReport &r) {
  return metrics::report_json(r);
}

static metrics::MetricReport
metric_report_from_json(const nlohmann::json &j) {
  metrics::MetricReport r;
  r.variant = j.at("variant").get<std::string>();
  r.scheme = j.at("scheme").get<std::string>();
  const auto &m = j.at("metrics");
  r.miou = optional_from_json(m.at("miou"));
  r.mavg = optional_from_json(m.at("mavg"));
  r.sqiou = optional_from_json(m.at("sqiou"));
  r.sqavg = optional_from_json(m.at("sqavg"));
  r.miou_small = optional_from_json(m.at("miou_small"));
  for (const auto &x : m.at("class_iou")) r.class_iou.push_back(optional_from_json(x));
  return r;
}

nlohmann::json run_report_to_json(const RunReport &r) {
  nlohmann::json j{{"config_checksum", r.checksum},
                   {"code_version", r.code_version},
                   {"completed", r.completed},
                   {"epoch_losses", r.epoch_losses},
                   {"first_epoch_steps", r.first_epoch_steps},
                   {"divergence_epochs", r.divergence_epochs},
                   {"best_epoch", r.best_epoch},
                   {"measured_noise", r.measured_noise},
                   {"wall_seconds", r.wall_seconds}};
  if (r.completed) j["final_metrics"] = metric_report_to_json(r.final_metrics);
  return j;
}

RunReport run_report_from_json(const nlohmann::json &j) {
  RunReport r;
  try {
    r.checksum = j.at("config_checksum").get<std::string>();
    r.code_version = j.at("code_version").get<std::string>();
    r.completed = j.at("completed").get<bool>();
    for (const auto &x : j.at("epoch_losses"))
      r.epoch_losses.push_back(x.is_null()
                                   ? std::numeric_limits<double>::quiet_NaN()
                                   : x.get<double>());
    for (const auto &x : j.at("first_epoch_steps"))
      r.first_epoch_steps.push_back(
          x.is_null() ? std::numeric_limits<double>::quiet_NaN()
                      : x.get<double>());
    r.divergence_epochs = j.at("divergence_epochs").get<std::vector<int64_t>>();
    r.best_epoch = j.at("best_epoch").get<int64_t>();
    r.measured_noise = j.at("measured_noise").get<double>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    if (r.completed)
      r.final_metrics = metric_report_from_json(j.at("final_metrics"));
  } catch (const nlohmann::json::exception &e) {
    throw DataError(strfmt("run report: %s", e.what()));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Data preparation.

static void channelize_split(const data::Dataset &ds, const PatternSpec &ps,
                             const RunConfig &cfg, uint64_t provider_seed,
                             PreparedSplit &out, double &noise_sum,
                             int64_t &noise_count) {
  channelizer::ChannelConfig cc;
  cc.use_fg = ps.use_fg;
  cc.use_edge = ps.use_edge;

  channelizer::ProviderConfig pc;
  pc.kind = cfg.provider;
  pc.noise_level = cfg.noise;
  pc.seed = provider_seed;
  pc.dir = cfg.dataset.path;
  std::unique_ptr<channelizer::MaskProvider> provider =
      channelizer::make_provider(pc);

  std::unique_ptr<channelizer::MaskProvider> oracle;
  if ((cc.use_fg || cc.use_edge) && cfg.provider != "oracle") {
    channelizer::ProviderConfig oc;
    oc.kind = "oracle";
    oracle = channelizer::make_provider(oc);
  }

  out.inputs.reserve(ds.samples.size());
  out.labels.reserve(ds.samples.size());
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const data::Sample &s = ds.samples[i];
    const channelizer::ChannelPair cues =
        provider->provide(s, static_cast<int64_t>(i));
    if (oracle) {
      const channelizer::ChannelPair ref =
          oracle->provide(s, static_cast<int64_t>(i));
      noise_sum += 0.5 * (channelizer::estimate_noise(cues.fg, ref.fg) +
                          channelizer::estimate_noise(cues.edge, ref.edge));
      noise_count += 1;
    }
    out.inputs.push_back(channelizer::assemble_input(s.image, cues, cc));
    out.labels.push_back(s.parts);
  }
}

PreparedData prepare_data(const RunConfig &cfg) {
  data::Dataset train, val;
  if (!cfg.dataset.path.empty()) {
    train = data::load_raster_dataset(cfg.dataset.path + "/train");
    val = data::load_raster_dataset(cfg.dataset.path + "/val");
    OLAF_CHECK(train.num_classes() == val.num_classes(), DataError,
               "dataset '%s': train has %lld classes but val has %lld",
               cfg.dataset.path.c_str(),
               static_cast<long long>(train.num_classes()),
               static_cast<long long>(val.num_classes()));
  } else {
    data::GenConfig g;
    g.width = cfg.dataset.width;
    g.height = cfg.dataset.height;
    g.num_images = cfg.dataset.train_images;
    g.seed = cfg.dataset.seed;
    train = data::generate_dataset(g);
    g.num_images = cfg.dataset.val_images;
    g.seed = SplitMix64::mix(cfg.dataset.seed, 0x76616cull);
    val = data::generate_dataset(g);
  }

  const PatternSpec ps = parse_pattern(cfg.pattern);
  PreparedData out;
  out.taxonomy = train.taxonomy;
  double noise_sum = 0.0;
  int64_t noise_count = 0;
  channelize_split(train, ps, cfg, SplitMix64::mix(cfg.dataset.seed, 1),
                   out.train, noise_sum, noise_count);
  channelize_split(val, ps, cfg, SplitMix64::mix(cfg.dataset.seed, 2),
                   out.val, noise_sum, noise_count);
  if (noise_count > 0) out.measured_noise = noise_sum / noise_count;
  return out;
}

// ---------------------------------------------------------------------------
// Batching and evaluation.

static model::Batch make_batch(const PreparedSplit &split,
                               const std::vector<int64_t> &order, int64_t lo,
                               int64_t hi) {
  const Shape &is = split.inputs[0].shape();
  const int64_t n = hi - lo, c = is[0], h = is[1], w = is[2];
  model::Batch b{Tensor({n, c, h, w}), Tensor({n, h, w})};
  for (int64_t k = 0; k < n; ++k) {
    const size_t src = static_cast<size_t>(order[static_cast<size_t>(lo + k)]);
    const Tensor &img = split.inputs[src];
    std::memcpy(b.images.data() + k * c * h * w, img.data(),
                static_cast<size_t>(c * h * w) * sizeof(double));
    const data::LabelMap &lm = split.labels[src];
    double *dst = b.labels.data() + k * h * w;
    for (int64_t i = 0; i < h * w; ++i)
      dst[i] = static_cast<double>(lm.v[static_cast<size_t>(i)]);
  }
  return b;
}

data::LabelMap logits_to_labels(const Tensor &logits) {
  const Shape &s = logits.shape();
  OLAF_CHECK(s.size() == 3, ShapeError,
             "logits_to_labels: want [k, h, w], got %s",
             shape_str(s).c_str());
  const int64_t k = s[0], h = s[1], w = s[2];
  data::LabelMap out(h, w);
  const double *p = logits.data();
  for (int64_t i = 0; i < h * w; ++i) {
    int64_t arg = 0;
    double best = p[i];
    for (int64_t c = 1; c < k; ++c) {
      const double v = p[c * h * w + i];
      if (v > best) {
        best = v;
        arg = c;
      }
    }
    out.v[static_cast<size_t>(i)] = static_cast<int32_t>(arg);
  }
  return out;
}

using ForwardFn = std::function<Variable(const Variable &)>;

static metrics::MetricReport
evaluate_forward(const ForwardFn &forward, const PreparedSplit &split,
                 const data::Taxonomy &tax, int64_t batch_size) {
  NoGradGuard guard;
  const int64_t n = static_cast<int64_t>(split.inputs.size());
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<data::LabelMap> preds;
  preds.reserve(static_cast<size_t>(n));
  for (int64_t lo = 0; lo < n; lo += batch_size) {
    const int64_t hi = std::min(n, lo + batch_size);
    const model::Batch b = make_batch(split, order, lo, hi);
    const Tensor logits = forward(Variable(b.images)).value();
    const Shape &s = logits.shape();
    const int64_t plane = s[1] * s[2] * s[3];
    for (int64_t k = 0; k < hi - lo; ++k) {
      Tensor one({s[1], s[2], s[3]});
      std::memcpy(one.data(), logits.data() + k * plane,
                  static_cast<size_t>(plane) * sizeof(double));
      preds.push_back(logits_to_labels(one));
    }
  }
  return metrics::evaluate(preds, split.labels, tax);
}

metrics::MetricReport evaluate_split(model::SegModel &m,
                                     const PreparedSplit &split,
                                     const data::Taxonomy &tax,
                                     int64_t batch_size) {
  m.set_training(false);
  return evaluate_forward([&m](const Variable &x) { return m.forward(x); },
                          split, tax, batch_size);
}

// ---------------------------------------------------------------------------
// Training core.

std::unique_ptr<model::SegModel> build_run_model(const RunConfig &cfg,
                                                 int64_t num_classes) {
  const PatternSpec ps = parse_pattern(cfg.pattern);
  model::ModelConfig mc;
  mc.arch = cfg.arch;
  mc.in_channels = ps.channels();
  mc.num_classes = num_classes;
  mc.with_ldf = ps.with_ldf;
  mc.seed = cfg.seed;
  std::unique_ptr<model::SegModel> m = model::make_model(mc);
  if (!cfg.scheme.empty()) {
    const adapt::SchemeKind kind = adapt::parse_scheme(cfg.scheme);
    OLAF_CHECK(kind != adapt::SchemeKind::adapt_n_freeze, ConfigError,
               "adapt-n-freeze trains an input adapter; it has no "
               "warm-start form");
    OLAF_CHECK(!cfg.baseline.empty(), ConfigError,
               "scheme '%s' needs a baseline checkpoint", cfg.scheme.c_str());
    model::warm_start(*m, nn::load_checkpoint(cfg.baseline), kind, cfg.seed);
  }
  return m;
}

static std::unique_ptr<nn::Optimizer>
make_optimizer(const RunConfig &cfg, std::vector<Variable> params) {
  if (cfg.optimizer == "adam")
    return std::make_unique<nn::Adam>(std::move(params), cfg.lr);
  if (cfg.optimizer == "sgd")
    return std::make_unique<nn::Sgd>(std::move(params), cfg.lr, 0.9);
  throw ConfigError(strfmt("unknown optimizer '%s'", cfg.optimizer.c_str()));
}

namespace {

/// The pieces of a run that differ between a plain model and the
/// adapter-composite trained by adapt-n-freeze.
struct Trainer {
  std::function<model::StepResult(const model::Batch &, double)> step;
  std::function<metrics::MetricReport()> eval;
  std::function<nn::Checkpoint(nlohmann::json)> snapshot;
  std::function<void(int64_t)> on_epoch = [](int64_t) {};
  std::function<double(int64_t)> lr_scale = [](int64_t) { return 1.0; };
};

} // namespace

static double median(std::vector<double> v) {
  OLAF_CHECK(!v.empty(), Error, "median of an empty set");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

static double metric_or_nan(const std::optional<double> &x) {
  return x ? *x : std::numeric_limits<double>::quiet_NaN();
}

/// Returns the stored report when out_dir already holds a completed run of
/// this exact config, so grid cells are resumable and shareable.
static std::optional<RunReport> cached_report(const RunConfig &cfg,
                                              const std::string &checksum) {
  const std::string report_path = cfg.out_dir + "/report.json";
  if (!fs::exists(report_path) || !fs::exists(cfg.out_dir + "/model.ckpt"))
    return std::nullopt;
  RunReport r;
  try {
    r = run_report_from_json(read_json_file(report_path));
  } catch (const DataError &) {
    return std::nullopt;
  }
  if (!r.completed || r.checksum != checksum) return std::nullopt;
  return r;
}

static RunReport run_training(const RunConfig &cfg, const PreparedData &data,
                              Trainer &t, const std::string &checksum) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  rep.checksum = checksum;
  rep.measured_noise = data.measured_noise;

  const int64_t n = static_cast<int64_t>(data.train.inputs.size());
  OLAF_CHECK(n > 0, DataError, "training split is empty");
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::random_device entropy;

  metrics::MetricReport best;
  bool have_best = false;
  nn::Checkpoint best_ckpt;

  for (int64_t e = 0; e < cfg.epochs; ++e) {
    t.on_epoch(e);
    if (!cfg.deterministic) {
      SplitMix64 rng((static_cast<uint64_t>(entropy()) << 32) ^ entropy());
      shuffle(order, rng);
    }
    const double scale = t.lr_scale(e);
    double loss_sum = 0.0;
    int64_t steps = 0;
    bool diverged = false;
    for (int64_t lo = 0; lo < n; lo += cfg.batch_size) {
      const int64_t hi = std::min(n, lo + cfg.batch_size);
      const model::StepResult sr =
          t.step(make_batch(data.train, order, lo, hi), scale);
      loss_sum += sr.loss;
      steps += 1;
      diverged = diverged || sr.diverged;
      if (e == 0) rep.first_epoch_steps.push_back(sr.loss);
    }
    rep.epoch_losses.push_back(loss_sum / static_cast<double>(steps));
    if (diverged) rep.divergence_epochs.push_back(e);

    const bool eval_now =
        cfg.eval_every > 0 &&
        ((e + 1) % cfg.eval_every == 0 || e == cfg.epochs - 1);
    if (eval_now) {
      metrics::MetricReport mr = t.eval();
      if (!have_best ||
          metric_or_nan(mr.miou) > metric_or_nan(best.miou)) {
        have_best = true;
        best = mr;
        rep.best_epoch = e;
        best_ckpt = t.snapshot(nlohmann::json());
      }
    }
  }
  if (!have_best) {
    best = t.eval();
    have_best = true;
    rep.best_epoch = cfg.epochs - 1;
    best_ckpt = t.snapshot(nlohmann::json());
  }

  best.variant = cfg.pattern;
  best.scheme = cfg.scheme;
  rep.final_metrics = best;
  rep.completed = true;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  best_ckpt.meta["provenance"] = nlohmann::json{
      {"config_checksum", checksum},
      {"code_version", kCodeVersion},
      {"seed", cfg.seed},
      {"best_epoch", rep.best_epoch},
      {"pattern", cfg.pattern},
      {"scheme", cfg.scheme}};
  fs::create_directories(cfg.out_dir);
  nn::save_checkpoint(cfg.out_dir + "/model.ckpt", best_ckpt);
  save_run_config(cfg.out_dir + "/config.json", cfg);
  write_text(cfg.out_dir + "/report.json", run_report_to_json(rep).dump(2) + "\n");
  return rep;
}

/// The adapter+base pair trained by adapt-n-freeze. The adapter is owned
/// either here (restored from a checkpoint) or by the AdaptNFreeze plan that
/// drives the stage schedule; `adapter` always points at the live one.
struct AnfComposite {
  std::unique_ptr<model::SegModel> base;
  std::unique_ptr<adapt::InputAdapter> owned_adapter;
  adapt::InputAdapter *adapter = nullptr;

  Variable forward(const Variable &x) const {
    return base->forward(adapter->forward(x));
  }
  void set_training(bool on) {
    base->set_training(on);
    adapter->set_training(on);
  }
};

static nn::Checkpoint snapshot_composite(AnfComposite &c, int64_t n_warm) {
  nn::Checkpoint ck;
  ck.meta = nlohmann::json{
      {"scheme", "adapt-n-freeze"},
      {"n_warm", n_warm},
      {"base_config", model::model_config_to_json(c.base->config())},
      {"adapter_in", c.adapter->expand.weight.value().shape()[1]},
      {"adapter_mid", c.adapter->expand.weight.value().shape()[0]}};
  for (const auto &[name, v] : c.adapter->named_parameters())
    ck.tensors.emplace_back("adapter." + name, v.value());
  for (const auto &[name, v] : c.base->named_parameters())
    ck.tensors.emplace_back("base." + name, v.value());
  auto buffers = c.base->named_buffers();
  for (const auto &[name, ptr] : buffers)
    ck.tensors.emplace_back("base." + name, *ptr);
  return ck;
}

static nn::Checkpoint strip_prefix(const nn::Checkpoint &ck,
                                   const std::string &prefix) {
  nn::Checkpoint out;
  out.meta = ck.meta;
  for (const auto &[name, t] : ck.tensors)
    if (name.rfind(prefix, 0) == 0)
      out.tensors.emplace_back(name.substr(prefix.size()), t);
  return out;
}

static AnfComposite composite_from_checkpoint(const nn::Checkpoint &ck) {
  AnfComposite c;
  c.base = model::make_model(
      model::model_config_from_json(ck.meta.at("base_config")));
  nn::restore(*c.base, strip_prefix(ck, "base."));
  const int64_t k_new = ck.meta.at("adapter_in").get<int64_t>() - 3;
  const int64_t mid = ck.meta.at("adapter_mid").get<int64_t>();
  SplitMix64 rng(1);
  c.owned_adapter = std::make_unique<adapt::InputAdapter>(k_new, mid, rng);
  c.adapter = c.owned_adapter.get();
  nn::restore(*c.adapter, strip_prefix(ck, "adapter."));
  return c;
}

static bool is_composite_checkpoint(const nn::Checkpoint &ck) {
  return ck.meta.contains("scheme") &&
         ck.meta.at("scheme") == "adapt-n-freeze";
}

RunReport train_run(const RunConfig &cfg) {
  const std::string checksum = config_checksum(cfg);
  if (std::optional<RunReport> hit = cached_report(cfg, checksum)) return *hit;

  const PreparedData data = prepare_data(cfg);
  const int64_t num_classes = data.taxonomy.num_classes();
  const PatternSpec ps = parse_pattern(cfg.pattern);

  Trainer t;
  const bool anf = !cfg.scheme.empty() &&
                   adapt::parse_scheme(cfg.scheme) ==
                       adapt::SchemeKind::adapt_n_freeze;
  std::unique_ptr<model::SegModel> m;
  std::unique_ptr<nn::Optimizer> opt;
  AnfComposite comp;
  adapt::AdaptNFreeze plan;

  if (anf) {
    OLAF_CHECK(!cfg.baseline.empty(), ConfigError,
               "adapt-n-freeze needs a baseline checkpoint");
    comp.base = model::model_from_checkpoint(nn::load_checkpoint(cfg.baseline));
    OLAF_CHECK(comp.base->in_channels() == 3, ConfigError,
               "adapt-n-freeze wraps an RGB baseline; checkpoint has %lld "
               "input channels",
               static_cast<long long>(comp.base->in_channels()));
    plan = adapt::build_adapt_n_freeze(*comp.base, ps.channels() - 3,
                                       cfg.n_warm, 0,
                                       SplitMix64::mix(cfg.seed, 0x616e66ull));
    comp.adapter = plan.adapter.get();

    std::vector<Variable> params = comp.adapter->parameters();
    for (const Variable &p : comp.base->parameters()) params.push_back(p);
    opt = make_optimizer(cfg, std::move(params));

    t.on_epoch = [&plan](int64_t e) { plan.set_epoch(e); };
    t.step = [&comp, &opt](const model::Batch &b, double scale) {
      comp.set_training(true);
      const Variable loss = autograd::cross_entropy_logits(
          comp.forward(Variable(b.images)), b.labels);
      model::StepResult r;
      r.loss = loss.value()[0];
      if (!std::isfinite(r.loss)) {
        r.diverged = true;
        return r;
      }
      opt->zero_grad();
      loss.backward();
      opt->step(scale);
      return r;
    };
    t.eval = [&comp, &data, &cfg]() {
      comp.set_training(false);
      return evaluate_forward(
          [&comp](const Variable &x) { return comp.forward(x); }, data.val,
          data.taxonomy, cfg.batch_size);
    };
    t.snapshot = [&comp, &cfg](nlohmann::json) {
      return snapshot_composite(comp, cfg.n_warm);
    };
  } else {
    m = build_run_model(cfg, num_classes);
    opt = make_optimizer(cfg, m->parameters());
    if (!cfg.scheme.empty()) {
      const adapt::WarmupSchedule sched{cfg.n_warm, cfg.lr, false};
      t.lr_scale = [sched](int64_t e) {
        return adapt::warmup_multiplier(e, sched);
      };
    }
    t.step = [&m, &opt](const model::Batch &b, double scale) {
      return model::train_step(*m, b, *opt, scale);
    };
    t.eval = [&m, &data, &cfg]() {
      return evaluate_split(*m, data.val, data.taxonomy, cfg.batch_size);
    };
    t.snapshot = [&m](nlohmann::json prov) {
      return model::snapshot_model(*m, std::move(prov));
    };
  }

  return run_training(cfg, data, t, checksum);
}

// ---------------------------------------------------------------------------
// Evaluation command.

RunReport eval_run(const std::string &checkpoint_path, const RunConfig &cfg,
                   const std::string &out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const nn::Checkpoint ck = nn::load_checkpoint(checkpoint_path);
  const PatternSpec ps = parse_pattern(cfg.pattern);

  int64_t ck_channels = 0;
  if (is_composite_checkpoint(ck)) {
    ck_channels = ck.meta.at("adapter_in").get<int64_t>();
  } else {
    OLAF_CHECK(ck.meta.contains("in_channels"), DataError,
               "checkpoint '%s' lacks an input-channel count",
               checkpoint_path.c_str());
    ck_channels = ck.meta.at("in_channels").get<int64_t>();
  }
  OLAF_CHECK(ck_channels == ps.channels(), ConfigError,
             "checkpoint expects %lld input channels but pattern '%s' "
             "assembles %lld",
             static_cast<long long>(ck_channels), cfg.pattern.c_str(),
             static_cast<long long>(ps.channels()));

  const PreparedData data = prepare_data(cfg);

  RunReport rep;
  rep.checksum = config_checksum(cfg);
  rep.measured_noise = data.measured_noise;
  if (is_composite_checkpoint(ck)) {
    AnfComposite comp = composite_from_checkpoint(ck);
    comp.set_training(false);
    rep.final_metrics = evaluate_forward(
        [&comp](const Variable &x) { return comp.forward(x); }, data.val,
        data.taxonomy, cfg.batch_size);
  } else {
    std::unique_ptr<model::SegModel> m = model::model_from_checkpoint(ck);
    rep.final_metrics =
        evaluate_split(*m, data.val, data.taxonomy, cfg.batch_size);
  }
  rep.final_metrics.variant = cfg.pattern;
  rep.final_metrics.scheme = cfg.scheme;
  rep.completed = true;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  std::ostringstream csv;
  csv << "class,iou\n";
  for (int64_t id = 0; id < data.taxonomy.num_classes(); ++id) {
    const std::string name =
        id == 0 ? "background" : data.taxonomy.part_by_id(static_cast<int32_t>(id))->name;
    const std::optional<double> v =
        static_cast<size_t>(id) < rep.final_metrics.class_iou.size()
            ? rep.final_metrics.class_iou[static_cast<size_t>(id)]
            : std::nullopt;
    csv << name << "," << (v ? strfmt("%.6f", *v) : "undef") << "\n";
  }
  fs::create_directories(out_dir);
  write_text(out_dir + "/report.json", run_report_to_json(rep).dump(2) + "\n");
  write_text(out_dir + "/per_class.csv", csv.str());
  return rep;
}

// ---------------------------------------------------------------------------
// Grid commands.

/// Checksum of everything a grid command holds fixed: the varied axes are
/// reset to sentinels, so two cells agree here iff they differ only in the
/// axes the command sweeps.
static std::string shared_axes_checksum(RunConfig cfg) {
  cfg.pattern = "*";
  cfg.scheme.clear();
  cfg.baseline.clear();
  cfg.provider = "*";
  cfg.noise = 0.0;
  cfg.seed = 0;
  cfg.out_dir.clear();
  return config_checksum(cfg);
}

static void fill_medians(GridRow &row) {
  std::vector<double> miou, mavg, sqiou, sqavg, small;
  for (const RunReport &r : row.reports) {
    miou.push_back(metric_or_nan(r.final_metrics.miou));
    mavg.push_back(metric_or_nan(r.final_metrics.mavg));
    sqiou.push_back(metric_or_nan(r.final_metrics.sqiou));
    sqavg.push_back(metric_or_nan(r.final_metrics.sqavg));
    small.push_back(metric_or_nan(r.final_metrics.miou_small));
  }
  row.median_miou = median(miou);
  row.median_mavg = median(mavg);
  row.median_sqiou = median(sqiou);
  row.median_sqavg = median(sqavg);
  row.median_miou_small = median(small);
}

static nlohmann::json grid_row_json(const GridRow &row,
                                    const std::vector<uint64_t> &seeds) {
  nlohmann::json per_seed = nlohmann::json::array();
  for (size_t i = 0; i < row.reports.size(); ++i) {
    const RunReport &r = row.reports[i];
    per_seed.push_back(
        {{"seed", seeds[i]},
         {"config_checksum", r.checksum},
         {"miou", optional_json(r.final_metrics.miou)},
         {"miou_small", optional_json(r.final_metrics.miou_small)},
         {"divergence_epochs", r.divergence_epochs}});
  }
  return nlohmann::json{{"name", row.name},
                        {"per_seed", per_seed},
                        {"median",
                         {{"miou", row.median_miou},
                          {"mavg", row.median_mavg},
                          {"sqiou", row.median_sqiou},
                          {"sqavg", row.median_sqavg},
                          {"miou_small", row.median_miou_small}}}};
}

AblationTable ablate(const RunConfig &base,
                     const std::vector<uint64_t> &seeds) {
  OLAF_CHECK(!seeds.empty(), ConfigError, "ablate: need at least one seed");
  OLAF_CHECK(base.scheme.empty(), ConfigError,
             "ablate trains every cell from scratch; clear the adaptation "
             "scheme");
  static const char *kPatterns[] = {"none", "ldf", "edge",
                                    "fg",   "edge+fg", "olaf"};
  AblationTable table;
  table.seeds = seeds;
  table.axes_checksum = shared_axes_checksum(base);

  for (const char *pattern : kPatterns) {
    GridRow row;
    row.name = pattern;
    for (uint64_t seed : seeds) {
      RunConfig cell = base;
      cell.pattern = pattern;
      cell.seed = seed;
      cell.out_dir = base.out_dir + "/cells/" + pattern + "_s" +
                     std::to_string(seed);
      OLAF_CHECK(shared_axes_checksum(cell) == table.axes_checksum, Error,
                 "ablate: cell '%s' drifted on a non-varied axis", pattern);
      row.reports.push_back(train_run(cell));
    }
    fill_medians(row);
    table.rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "pattern,miou,mavg,sqiou,sqavg,miou_small\n";
  for (const GridRow &row : table.rows)
    csv << row.name << "," << strfmt("%.6f", row.median_miou) << ","
        << strfmt("%.6f", row.median_mavg) << ","
        << strfmt("%.6f", row.median_sqiou) << ","
        << strfmt("%.6f", row.median_sqavg) << ","
        << strfmt("%.6f", row.median_miou_small) << "\n";
  write_text(base.out_dir + "/ablation.csv", csv.str());

  nlohmann::json rows = nlohmann::json::array();
  for (const GridRow &row : table.rows) rows.push_back(grid_row_json(row, seeds));
  write_text(base.out_dir + "/ablation.json",
             nlohmann::json{{"rows", rows},
                            {"seeds", seeds},
                            {"axes_checksum", table.axes_checksum},
                            {"code_version", kCodeVersion}}
                     .dump(2) +
                 "\n");
  return table;
}

NoiseSweepResult noise_sweep(const RunConfig &base,
                             const std::vector<double> &levels,
                             const std::vector<uint64_t> &seeds) {
  OLAF_CHECK(!levels.empty(), ConfigError, "noise sweep: need levels");
  OLAF_CHECK(!seeds.empty(), ConfigError, "noise sweep: need seeds");
  NoiseSweepResult result;
  result.seeds = seeds;
  result.axes_checksum = shared_axes_checksum(base);

  for (double level : levels) {
    NoisePoint point;
    point.requested = level;
    std::vector<double> mious;
    for (uint64_t seed : seeds) {
      RunConfig cell = base;
      cell.provider = "degraded";
      cell.noise = level;
      cell.seed = seed;
      cell.out_dir =
          base.out_dir + "/cells/" +
          strfmt("l%03d_s%llu", static_cast<int>(std::lround(level * 1000)),
                 static_cast<unsigned long long>(seed));
      OLAF_CHECK(shared_axes_checksum(cell) == result.axes_checksum, Error,
                 "noise sweep: level %g drifted on a non-varied axis", level);
      RunReport rep = train_run(cell);
      point.measured = rep.measured_noise;
      mious.push_back(metric_or_nan(rep.final_metrics.miou));
      point.reports.push_back(std::move(rep));
    }
    point.median_miou = median(mious);
    result.points.push_back(std::move(point));
  }

  std::ostringstream csv;
  csv << "requested,measured,median_miou";
  for (uint64_t seed : seeds) csv << ",miou_s" << seed;
  csv << "\n";
  for (const NoisePoint &p : result.points) {
    csv << strfmt("%.4f,%.6f,%.6f", p.requested, p.measured, p.median_miou);
    for (const RunReport &r : p.reports)
      csv << "," << strfmt("%.6f", metric_or_nan(r.final_metrics.miou));
    csv << "\n";
  }
  write_text(base.out_dir + "/noise_sweep.csv", csv.str());

  std::vector<double> xs, ys;
  std::vector<std::string> notes;
  for (const NoisePoint &p : result.points) {
    xs.push_back(p.measured);
    ys.push_back(p.median_miou);
    notes.push_back(strfmt("%.1f%% measured", 100.0 * p.measured));
  }
  write_line_plot_svg(base.out_dir + "/noise_sweep.svg",
                      "mIoU vs. cue-mask noise", "measured noise fraction",
                      "median mIoU", xs, {ys}, {"median mIoU"}, notes);

  nlohmann::json points = nlohmann::json::array();
  for (const NoisePoint &p : result.points) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (size_t i = 0; i < p.reports.size(); ++i)
      per_seed.push_back(
          {{"seed", seeds[i]},
           {"config_checksum", p.reports[i].checksum},
           {"miou", optional_json(p.reports[i].final_metrics.miou)}});
    points.push_back({{"requested", p.requested},
                      {"measured", p.measured},
                      {"median_miou", p.median_miou},
                      {"per_seed", per_seed}});
  }
  write_text(base.out_dir + "/noise_sweep.json",
             nlohmann::json{{"points", points},
                            {"seeds", seeds},
                            {"axes_checksum", result.axes_checksum},
                            {"code_version", kCodeVersion}}
                     .dump(2) +
                 "\n");
  return result;
}

AdaptCompareResult adapt_compare(const RunConfig &base,
                                 const std::vector<uint64_t> &seeds) {
  OLAF_CHECK(!seeds.empty(), ConfigError, "adapt compare: need seeds");

  RunConfig baseline_cfg = base;
  baseline_cfg.pattern = "none";
  baseline_cfg.scheme.clear();
  baseline_cfg.baseline.clear();
  baseline_cfg.out_dir = base.out_dir + "/baseline";
  train_run(baseline_cfg);

  AdaptCompareResult result;
  result.baseline_checkpoint = baseline_cfg.out_dir + "/model.ckpt";
  result.seeds = seeds;

  RunConfig probe = base;
  probe.pattern = "edge+fg";
  probe.baseline = result.baseline_checkpoint;
  result.axes_checksum = shared_axes_checksum(probe);

  static const char *kSchemes[] = {"olaf-average", "random-5", "random-2",
                                   "average-rgb-5", "adapt-n-freeze"};
  for (const char *scheme : kSchemes) {
    SchemeRow row;
    row.scheme = scheme;
    std::vector<double> mious;
    for (uint64_t seed : seeds) {
      RunConfig cell = probe;
      cell.scheme = scheme;
      cell.seed = seed;
      cell.out_dir =
          base.out_dir + "/cells/" + scheme + "_s" + std::to_string(seed);
      OLAF_CHECK(shared_axes_checksum(cell) == result.axes_checksum, Error,
                 "adapt compare: scheme '%s' drifted on a non-varied axis",
                 scheme);
      RunReport rep = train_run(cell);
      row.divergences += static_cast<int64_t>(rep.divergence_epochs.size());
      mious.push_back(metric_or_nan(rep.final_metrics.miou));
      row.reports.push_back(std::move(rep));
    }
    row.median_miou = median(mious);
    result.rows.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "scheme,divergences,median_miou";
  for (uint64_t seed : seeds) csv << ",miou_s" << seed;
  csv << "\n";
  for (const SchemeRow &row : result.rows) {
    csv << row.scheme << "," << row.divergences << ","
        << strfmt("%.6f", row.median_miou);
    for (const RunReport &r : row.reports)
      csv << "," << strfmt("%.6f", metric_or_nan(r.final_metrics.miou));
    csv << "\n";
  }
  write_text(base.out_dir + "/adapt_compare.csv", csv.str());

  nlohmann::json rows = nlohmann::json::array();
  for (const SchemeRow &row : result.rows) {
    nlohmann::json per_seed = nlohmann::json::array();
    for (size_t i = 0; i < row.reports.size(); ++i) {
      const RunReport &r = row.reports[i];
      per_seed.push_back({{"seed", seeds[i]},
                          {"config_checksum", r.checksum},
                          {"miou", optional_json(r.final_metrics.miou)},
                          {"divergence_epochs", r.divergence_epochs},
                          {"first_epoch_steps", r.first_epoch_steps}});
    }
    rows.push_back({{"scheme", row.scheme},
                    {"divergences", row.divergences},
                    {"median_miou", row.median_miou},
                    {"per_seed", per_seed}});
  }
  write_text(
      base.out_dir + "/adapt_compare.json",
      nlohmann::json{{"rows", rows},
                     {"fairness",
                      {{"seeds", seeds},
                       {"axes_checksum", result.axes_checksum},
                       {"baseline_checkpoint", result.baseline_checkpoint}}},
                     {"code_version", kCodeVersion}}
              .dump(2) +
          "\n");
  return result;
}

// ---------------------------------------------------------------------------
// SVG plotting.

static void axis_range(const std::vector<double> &v, double &lo, double &hi) {
  lo = *std::min_element(v.begin(), v.end());
  hi = *std::max_element(v.begin(), v.end());
  const double pad = (hi - lo) < 1e-12 ? std::max(1.0, std::fabs(hi)) * 0.1
                                       : (hi - lo) * 0.08;
  lo -= pad;
  hi += pad;
}

void write_line_plot_svg(const std::string &path, const std::string &title,
                         const std::string &xlabel, const std::string &ylabel,
                         const std::vector<double> &xs,
                         const std::vector<std::vector<double>> &series,
                         const std::vector<std::string> &labels,
                         const std::vector<std::string> &annotations) {
  OLAF_CHECK(!xs.empty() && !series.empty(), ConfigError,
             "plot: nothing to draw");
  OLAF_CHECK(series.size() == labels.size(), ConfigError,
             "plot: %zu series but %zu labels", series.size(), labels.size());
  for (const auto &s : series)
    OLAF_CHECK(s.size() == xs.size(), ConfigError,
               "plot: series length %zu does not match %zu x values",
               s.size(), xs.size());

  const double W = 640, H = 420, ml = 70, mr = 24, mt = 44, mb = 58;
  double xlo, xhi, ylo, yhi;
  axis_range(xs, xlo, xhi);
  std::vector<double> all_y;
  for (const auto &s : series) all_y.insert(all_y.end(), s.begin(), s.end());
  axis_range(all_y, ylo, yhi);

  const auto sx = [&](double x) {
    return ml + (x - xlo) / (xhi - xlo) * (W - ml - mr);
  };
  const auto sy = [&](double y) {
    return H - mb - (y - ylo) / (yhi - ylo) * (H - mt - mb);
  };

  static const char *kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W
      << " " << H << "\" font-family=\"sans-serif\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  svg << strfmt("<text x=\"%.0f\" y=\"24\" font-size=\"15\" "
                "text-anchor=\"middle\">%s</text>\n",
                W / 2, title.c_str());

  for (int i = 0; i <= 5; ++i) {
    const double fx = xlo + (xhi - xlo) * i / 5.0;
    const double fy = ylo + (yhi - ylo) * i / 5.0;
    svg << strfmt("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#dddddd\"/>\n",
                  sx(fx), H - mb, sx(fx), mt);
    svg << strfmt("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                  "stroke=\"#dddddd\"/>\n",
                  ml, sy(fy), W - mr, sy(fy));
    svg << strfmt("<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" "
                  "text-anchor=\"middle\">%.3g</text>\n",
                  sx(fx), H - mb + 18, fx);
    svg << strfmt("<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" "
                  "text-anchor=\"end\">%.3g</text>\n",
                  ml - 8, sy(fy) + 4, fy);
  }
  svg << strfmt("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                "stroke=\"black\"/>\n",
                ml, H - mb, W - mr, H - mb);
  svg << strfmt("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" "
                "stroke=\"black\"/>\n",
                ml, H - mb, ml, mt);
  svg << strfmt("<text x=\"%.0f\" y=\"%.0f\" font-size=\"13\" "
                "text-anchor=\"middle\">%s</text>\n",
                W / 2, H - 14, xlabel.c_str());
  svg << strfmt("<text x=\"18\" y=\"%.0f\" font-size=\"13\" "
                "text-anchor=\"middle\" transform=\"rotate(-90 18 %.0f)\">"
                "%s</text>\n",
                H / 2, H / 2, ylabel.c_str());

  for (size_t s = 0; s < series.size(); ++s) {
    const char *color = kColors[s % 6];
    std::ostringstream pts;
    for (size_t i = 0; i < xs.size(); ++i)
      pts << strfmt("%.1f,%.1f ", sx(xs[i]), sy(series[s][i]));
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\" points=\"" << pts.str() << "\"/>\n";
    for (size_t i = 0; i < xs.size(); ++i)
      svg << strfmt("<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3.5\" "
                    "fill=\"%s\"/>\n",
                    sx(xs[i]), sy(series[s][i]), color);
    if (series.size() > 1)
      svg << strfmt("<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" "
                    "fill=\"%s\">%s</text>\n",
                    W - mr - 150.0, mt + 16.0 + 16.0 * s, color,
                    labels[s].c_str());
  }
  if (!annotations.empty()) {
    OLAF_CHECK(annotations.size() == xs.size(), ConfigError,
               "plot: %zu annotations for %zu points", annotations.size(),
               xs.size());
    for (size_t i = 0; i < xs.size(); ++i)
      svg << strfmt("<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" "
                    "fill=\"#555555\" text-anchor=\"middle\">%s</text>\n",
                    sx(xs[i]), sy(series[0][i]) - 10.0,
                    annotations[i].c_str());
  }
  svg << "</svg>\n";
  write_text(path, svg.str());
}

} // namespace olaf::harness
