// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include "olaf/model.hpp"

#include <cmath>
#include <cstring>
#include <utility>

#include "olaf/core/error.hpp"

namespace olaf::model {

namespace {

using autograd::avgpool2d;
using autograd::concat_channels;
using autograd::maxpool2d;
using autograd::upsample2d;

void copy_into(Tensor &dst, const Tensor &src) {
  std::memcpy(dst.data(), src.data(), sizeof(double) * src.numel());
}

/// src matches dst except for a smaller input dimension (axis 1).
bool widened_input(const Tensor &dst, const Tensor &src) {
  if (dst.rank() != src.rank() || dst.rank() < 2) return false;
  if (dst.shape()[1] <= src.shape()[1]) return false;
  for (int64_t d = 0; d < dst.rank(); ++d)
    if (d != 1 && dst.shape()[d] != src.shape()[d]) return false;
  return true;
}

/// Copies src into the leading input slices of dst; the new slices are
/// zeroed so they are inert until training moves them.
void copy_zero_fill(Tensor &dst, const Tensor &src) {
  const int64_t rows = dst.shape()[0];
  int64_t rest = 1;
  for (int64_t d = 2; d < dst.rank(); ++d) rest *= dst.shape()[d];
  const int64_t in_dst = dst.shape()[1] * rest;
  const int64_t in_src = src.shape()[1] * rest;
  dst.fill(0.0);
  for (int64_t r = 0; r < rows; ++r)
    std::memcpy(dst.data() + r * in_dst, src.data() + r * in_src,
                sizeof(double) * in_src);
}

std::string mode_name(UpsampleMode mode) {
  return mode == UpsampleMode::bilinear ? "bilinear" : "nearest";
}

UpsampleMode mode_from_name(const std::string &name) {
  if (name == "bilinear") return UpsampleMode::bilinear;
  if (name == "nearest") return UpsampleMode::nearest;
  throw DataError(strfmt("model config: unknown upsample mode '%s'",
                         name.c_str()));
}

} // namespace

nlohmann::json model_config_to_json(const ModelConfig &cfg) {
  return {{"arch", cfg.arch},
          {"in_channels", cfg.in_channels},
          {"num_classes", cfg.num_classes},
          {"with_ldf", cfg.with_ldf},
          {"seed", cfg.seed},
          {"ldf",
           {{"mid_channels", cfg.ldf.mid_channels},
            {"aspp_rates", cfg.ldf.aspp_rates},
            {"aspp_out_channels", cfg.ldf.aspp_out_channels},
            {"out_channels", cfg.ldf.out_channels},
            {"upsample_factor", cfg.ldf.upsample_factor},
            {"mode", mode_name(cfg.ldf.mode)}}}};
}

ModelConfig model_config_from_json(const nlohmann::json &j) {
  ModelConfig cfg;
  try {
    cfg.arch = j.at("arch").get<std::string>();
    cfg.in_channels = j.at("in_channels").get<int64_t>();
    cfg.num_classes = j.at("num_classes").get<int64_t>();
    cfg.with_ldf = j.at("with_ldf").get<bool>();
    cfg.seed = j.at("seed").get<uint64_t>();
    const nlohmann::json &l = j.at("ldf");
    cfg.ldf.mid_channels = l.at("mid_channels").get<int64_t>();
    cfg.ldf.aspp_rates = l.at("aspp_rates").get<std::vector<int64_t>>();
    cfg.ldf.aspp_out_channels = l.at("aspp_out_channels").get<int64_t>();
    cfg.ldf.out_channels = l.at("out_channels").get<int64_t>();
    cfg.ldf.upsample_factor = l.at("upsample_factor").get<double>();
    cfg.ldf.mode = mode_from_name(l.at("mode").get<std::string>());
  } catch (const nlohmann::json::exception &e) {
    throw DataError(strfmt("model config: %s", e.what()));
  }
  return cfg;
}

void SegModel::check_input(const Variable &x) const {
  OLAF_CHECK(x.shape().size() == 4, ShapeError,
             "%s: expected [n, c, h, w] input, got rank %lld",
             config_.arch.c_str(), static_cast<long long>(x.shape().size()));
  OLAF_CHECK(x.shape()[1] == config_.in_channels, ShapeError,
             "%s: expected %lld input channels, got %lld",
             config_.arch.c_str(),
             static_cast<long long>(config_.in_channels),
             static_cast<long long>(x.shape()[1]));
}

ConvBnRelu::ConvBnRelu(int64_t in_ch, int64_t out_ch, SplitMix64 &rng)
    : conv(in_ch, out_ch, 3, 1, 1, 1, false, rng), bn(out_ch) {
  register_module("conv", &conv);
  register_module("bn", &bn);
}

Variable ConvBnRelu::forward(const Variable &x) {
  return autograd::relu(bn.forward(conv.forward(x)));
}

// ---------------------------------------------------------------------------
// MiniSegNet

MiniSegNet::MiniSegNet(ModelConfig cfg)
    : SegModel(std::move(cfg)), rng_(config_.seed),
      enc1a(config_.in_channels, 16, rng_), enc1b(16, 16, rng_),
      enc2a(16, 32, rng_), enc2b(32, 32, rng_), enc3a(32, 64, rng_),
      enc3b(64, 64, rng_), dec1(64, 32, rng_),
      dec2(32 + (config_.with_ldf ? config_.ldf.out_channels : 0), 16, rng_),
      head(16, config_.num_classes, 1, 1, 0, 1, true, rng_) {
  register_module("enc1a", &enc1a);
  register_module("enc1b", &enc1b);
  register_module("enc2a", &enc2a);
  register_module("enc2b", &enc2b);
  register_module("enc3a", &enc3a);
  register_module("enc3b", &enc3b);
  register_module("dec1", &dec1);
  register_module("dec2", &dec2);
  register_module("head", &head);
  if (config_.with_ldf) {
    aux = std::make_unique<ldf::LdfModule>(16, 32, config_.ldf, rng_);
    register_module("ldf", aux.get());
  }
}

Variable MiniSegNet::forward(const Variable &x) {
  check_input(x);
  OLAF_CHECK(x.shape()[2] % 8 == 0 && x.shape()[3] % 8 == 0, ShapeError,
             "minisegnet: input sides must be divisible by 8, got %lldx%lld",
             static_cast<long long>(x.shape()[2]),
             static_cast<long long>(x.shape()[3]));
  const Variable t1 = maxpool2d(enc1b.forward(enc1a.forward(x)), 2);
  const Variable t2 = maxpool2d(enc2b.forward(enc2a.forward(t1)), 2);
  const Variable t3 = maxpool2d(enc3b.forward(enc3a.forward(t2)), 2);
  const Variable d =
      dec1.forward(upsample2d(t3, 2, UpsampleMode::bilinear));
  Variable u = upsample2d(d, 2, UpsampleMode::bilinear);
  if (aux) u = concat_channels({u, aux->forward(t1, t2)});
  return upsample2d(head.forward(dec2.forward(u)), 2, UpsampleMode::bilinear);
}

ldf::WiringDescriptor MiniSegNet::wiring(int64_t h, int64_t w) const {
  if (!config_.with_ldf) return {};
  return ldf::attach_cnn({"enc1", 16, h / 2, w / 2},
                         {"enc2", 32, h / 4, w / 4},
                         {"dec2", 32, h / 2, w / 2}, config_.ldf);
}

std::vector<nn::Conv2d *> MiniSegNet::ldf_heads() {
  return aux ? std::vector<nn::Conv2d *>{&aux->head}
             : std::vector<nn::Conv2d *>{};
}

// ---------------------------------------------------------------------------
// MiniUNet

MiniUNet::MiniUNet(ModelConfig cfg)
    : SegModel(std::move(cfg)), rng_(config_.seed),
      enc1a(config_.in_channels, 16, rng_), enc1b(16, 16, rng_),
      enc2a(16, 32, rng_), enc2b(32, 32, rng_), bota(32, 64, rng_),
      botb(64, 64, rng_),
      dec2(96 + (config_.with_ldf ? config_.ldf.out_channels : 0), 32, rng_),
      dec1(48 + (config_.with_ldf ? config_.ldf.out_channels : 0), 16, rng_),
      head(16, config_.num_classes, 1, 1, 0, 1, true, rng_) {
  register_module("enc1a", &enc1a);
  register_module("enc1b", &enc1b);
  register_module("enc2a", &enc2a);
  register_module("enc2b", &enc2b);
  register_module("bota", &bota);
  register_module("botb", &botb);
  register_module("dec2", &dec2);
  register_module("dec1", &dec1);
  register_module("head", &head);
  if (config_.with_ldf) {
    aux1 = std::make_unique<ldf::LdfModule>(16, 32, config_.ldf, rng_);
    aux2 = std::make_unique<ldf::LdfModule>(32, 64, config_.ldf, rng_);
    register_module("ldf1", aux1.get());
    register_module("ldf2", aux2.get());
  }
}

Variable MiniUNet::forward(const Variable &x) {
  check_input(x);
  OLAF_CHECK(x.shape()[2] % 4 == 0 && x.shape()[3] % 4 == 0, ShapeError,
             "miniunet: input sides must be divisible by 4, got %lldx%lld",
             static_cast<long long>(x.shape()[2]),
             static_cast<long long>(x.shape()[3]));
  const Variable s1 = enc1b.forward(enc1a.forward(x));
  const Variable s2 = enc2b.forward(enc2a.forward(maxpool2d(s1, 2)));
  const Variable b = botb.forward(bota.forward(maxpool2d(s2, 2)));

  std::vector<Variable> cat2 = {upsample2d(b, 2, UpsampleMode::bilinear), s2};
  if (aux2) cat2.push_back(aux2->forward(s2, b));
  const Variable d2 = dec2.forward(concat_channels(cat2));

  std::vector<Variable> cat1 = {upsample2d(d2, 2, UpsampleMode::bilinear), s1};
  if (aux1) cat1.push_back(aux1->forward(s1, s2));
  return head.forward(dec1.forward(concat_channels(cat1)));
}

ldf::WiringDescriptor MiniUNet::wiring(int64_t h, int64_t w) const {
  if (!config_.with_ldf) return {};
  return ldf::attach_unet({{"enc1", 16, h, w}, {"enc2", 32, h / 2, w / 2}},
                          {{"dec1", 48, h, w}, {"dec2", 96, h / 2, w / 2}},
                          config_.ldf);
}

std::vector<nn::Conv2d *> MiniUNet::ldf_heads() {
  if (!aux1) return {};
  return {&aux1->head, &aux2->head};
}

// ---------------------------------------------------------------------------
// MiniTransformer

AttnBlock::AttnBlock(int64_t dim, int64_t heads, SplitMix64 &rng)
    : ln1(dim), ln2(dim), q(dim, dim, rng), k(dim, dim, rng),
      v(dim, dim, rng), proj(dim, dim, rng), fc1(dim, 2 * dim, rng),
      fc2(2 * dim, dim, rng), dim_(dim), heads_(heads) {
  OLAF_CHECK(dim % heads == 0, ConfigError,
             "attention: dim %lld not divisible by %lld heads",
             static_cast<long long>(dim), static_cast<long long>(heads));
  register_module("ln1", &ln1);
  register_module("q", &q);
  register_module("k", &k);
  register_module("v", &v);
  register_module("proj", &proj);
  register_module("ln2", &ln2);
  register_module("fc1", &fc1);
  register_module("fc2", &fc2);
}

Variable AttnBlock::forward(const Variable &x) {
  const int64_t n = x.shape()[0], t = x.shape()[1];
  const int64_t hd = dim_ / heads_;
  const auto rows = [&](const Variable &a) {
    return autograd::reshape(a, {n * t, dim_});
  };
  const auto split = [&](const Variable &a) {
    return autograd::reshape(
        autograd::permute(autograd::reshape(a, {n, t, heads_, hd}),
                          {0, 2, 1, 3}),
        {n * heads_, t, hd});
  };
  const Variable pre = rows(ln1.forward(x));
  const Variable att = autograd::softmax_lastdim(autograd::mul_scalar(
      autograd::bmm(split(q.forward(pre)),
                    autograd::permute(split(k.forward(pre)), {0, 2, 1})),
      1.0 / std::sqrt(static_cast<double>(hd))));
  Variable o = autograd::bmm(att, split(v.forward(pre)));
  o = autograd::reshape(
      autograd::permute(autograd::reshape(o, {n, heads_, t, hd}),
                        {0, 2, 1, 3}),
      {n * t, dim_});
  const Variable y =
      autograd::add(x, autograd::reshape(proj.forward(o), {n, t, dim_}));
  const Variable m =
      fc2.forward(autograd::relu(fc1.forward(rows(ln2.forward(y)))));
  return autograd::add(y, autograd::reshape(m, {n, t, dim_}));
}

MiniTransformer::MiniTransformer(ModelConfig cfg)
    : SegModel(std::move(cfg)), rng_(config_.seed),
      patch(config_.in_channels, 32, 4, 4, 0, 1, true, rng_),
      block1(32, 2, rng_), block2(32, 2, rng_), ln_f(32),
      dec(32 + (config_.with_ldf ? config_.ldf.out_channels : 0),
          config_.num_classes, 1, 1, 0, 1, true, rng_) {
  register_module("patch", &patch);
  register_module("block1", &block1);
  register_module("block2", &block2);
  register_module("ln_f", &ln_f);
  register_module("dec", &dec);
  if (config_.with_ldf) {
    aux = std::make_unique<ldf::LdfModule>(32, 32, config_.ldf, rng_);
    register_module("ldf", aux.get());
  }
}

Variable MiniTransformer::forward(const Variable &x) {
  check_input(x);
  const int64_t n = x.shape()[0], h = x.shape()[2], w = x.shape()[3];
  const int64_t need = aux ? 8 : 4;
  OLAF_CHECK(h % need == 0 && w % need == 0, ShapeError,
             "minitransformer: input sides must be divisible by %lld, "
             "got %lldx%lld",
             static_cast<long long>(need), static_cast<long long>(h),
             static_cast<long long>(w));
  const Variable p = patch.forward(x); // [n, 32, h/4, w/4]
  const int64_t gh = p.shape()[2], gw = p.shape()[3], t = gh * gw;
  const auto to_tokens = [&](const Variable &a) {
    return autograd::permute(autograd::reshape(a, {n, 32, t}), {0, 2, 1});
  };
  const auto to_grid = [&](const Variable &a) {
    return autograd::reshape(autograd::permute(a, {0, 2, 1}),
                             {n, 32, gh, gw});
  };
  const Variable b1 = block1.forward(to_tokens(p));
  const Variable b2 = block2.forward(b1);
  Variable feat = to_grid(ln_f.forward(b2));
  if (aux) {
    const Variable x1 = to_grid(b1);
    feat = concat_channels({feat, aux->forward(x1, avgpool2d(x1, 2))});
  }
  return upsample2d(dec.forward(feat), 4, UpsampleMode::bilinear);
}

ldf::WiringDescriptor MiniTransformer::wiring(int64_t h, int64_t w) const {
  if (!config_.with_ldf) return {};
  const int64_t gh = h / 4, gw = w / 4;
  return ldf::attach_transformer(gh * gw, 32, {"encoder_out", 32, gh, gw},
                                 config_.ldf, gh, gw);
}

std::vector<nn::Conv2d *> MiniTransformer::ldf_heads() {
  return aux ? std::vector<nn::Conv2d *>{&aux->head}
             : std::vector<nn::Conv2d *>{};
}

std::unique_ptr<SegModel> make_model(const ModelConfig &cfg) {
  OLAF_CHECK(cfg.in_channels >= 1 && cfg.num_classes >= 2, ConfigError,
             "model: need >= 1 input channel and >= 2 classes, got %lld/%lld",
             static_cast<long long>(cfg.in_channels),
             static_cast<long long>(cfg.num_classes));
  if (cfg.arch == "minisegnet") return std::make_unique<MiniSegNet>(cfg);
  if (cfg.arch == "miniunet") return std::make_unique<MiniUNet>(cfg);
  if (cfg.arch == "minitransformer")
    return std::make_unique<MiniTransformer>(cfg);
  throw ConfigError(strfmt("model: unknown arch '%s'", cfg.arch.c_str()));
}

// ---------------------------------------------------------------------------
// Training step.

StepResult train_step(SegModel &m, const Batch &batch, nn::Optimizer &opt,
                      double lr_scale) {
  m.set_training(true);
  const Variable loss = autograd::cross_entropy_logits(
      m.forward(Variable(batch.images)), batch.labels);
  StepResult r;
  r.loss = loss.value()[0];
  if (!std::isfinite(r.loss)) {
    r.diverged = true;
    return r;
  }
  opt.zero_grad();
  loss.backward();
  opt.step(lr_scale);
  return r;
}

// ---------------------------------------------------------------------------
// Checkpointing and warm starts.

nn::Checkpoint snapshot_model(SegModel &m, nlohmann::json provenance) {
  nlohmann::json meta;
  meta["arch"] = m.config().arch;
  meta["widths"] = m.config().arch == "minitransformer"
                       ? std::vector<int64_t>{32}
                       : std::vector<int64_t>{16, 32, 64};
  meta["num_classes"] = m.num_classes();
  meta["in_channels"] = m.in_channels();
  meta["config"] = model_config_to_json(m.config());
  meta["provenance"] =
      provenance.is_null() ? nlohmann::json::object() : provenance;
  return nn::snapshot(m, std::move(meta));
}

std::unique_ptr<SegModel> model_from_checkpoint(const nn::Checkpoint &ck) {
  OLAF_CHECK(ck.meta.contains("config"), DataError,
             "checkpoint: manifest lacks a model config");
  std::unique_ptr<SegModel> m =
      make_model(model_config_from_json(ck.meta.at("config")));
  nn::restore(*m, ck);
  return m;
}

void warm_start(SegModel &target, const nn::Checkpoint &baseline,
                adapt::SchemeKind scheme, uint64_t seed) {
  const Tensor *input_kernel = &target.input_conv().weight.value();
  std::string input_name;
  for (const auto &[name, v] : target.named_parameters())
    if (&v.value() == input_kernel) input_name = name;
  OLAF_CHECK(!input_name.empty(), Error,
             "warm_start: input conv is not a registered parameter");

  auto params = target.named_parameters();
  for (auto &[name, v] : params) {
    Tensor &dst = v.value();
    const Tensor *src = baseline.find(name);
    if (name == input_name) {
      OLAF_CHECK(src != nullptr, DataError,
                 "warm_start: baseline lacks '%s'", name.c_str());
      const int64_t k_new = dst.shape()[1] - src->shape()[1];
      if (k_new == 0) {
        copy_into(dst, *src);
        continue;
      }
      adapt::WeightTensor w;
      w.kernel = *src;
      const adapt::WeightTensor a = adapt::apply_scheme(scheme, w, k_new, seed);
      OLAF_CHECK(a.kernel.same_shape(dst), ShapeError,
                 "warm_start: adapted input kernel is %s, target wants %s",
                 shape_str(a.kernel.shape()).c_str(),
                 shape_str(dst.shape()).c_str());
      copy_into(dst, a.kernel);
    } else if (src && src->same_shape(dst)) {
      copy_into(dst, *src);
    } else if (src && widened_input(dst, *src)) {
      copy_zero_fill(dst, *src);
    } else if (src) {
      throw ShapeError(strfmt("warm_start: '%s' is %s in the baseline but "
                              "%s in the target",
                              name.c_str(), shape_str(src->shape()).c_str(),
                              shape_str(dst.shape()).c_str()));
    }
    // Parameters absent from the baseline (the LDF subtree) keep their
    // fresh initialization.
  }

  for (auto &[name, t] : target.named_buffers()) {
    const Tensor *src = baseline.find(name);
    if (!src) continue;
    OLAF_CHECK(src->same_shape(*t), ShapeError,
               "warm_start: buffer '%s' is %s in the baseline but %s in "
               "the target",
               name.c_str(), shape_str(src->shape()).c_str(),
               shape_str(t->shape()).c_str());
    copy_into(*t, *src);
  }

  for (nn::Conv2d *c : target.ldf_heads()) {
    c->weight.value().fill(0.0);
    if (c->bias.defined()) c->bias.value().fill(0.0);
  }
}

} // namespace olaf::model
