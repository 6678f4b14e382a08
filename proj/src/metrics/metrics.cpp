// Copyright 2026 The olaf authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <sstream>

#include "olaf/core/error.hpp"
#include "olaf/metrics.hpp"

namespace olaf::metrics {

void ConfusionMatrix::merge(const ConfusionMatrix &other) {
  OLAF_CHECK(k == other.k, ShapeError,
             "confusion matrix merge: %lld classes vs %lld",
             static_cast<long long>(k), static_cast<long long>(other.k));
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate(ConfusionMatrix &cm, const data::LabelMap &pred,
                const data::LabelMap &gt) {
  OLAF_CHECK(pred.h == gt.h && pred.w == gt.w, ShapeError,
             "accumulate: pred %lldx%lld vs gt %lldx%lld",
             static_cast<long long>(pred.h), static_cast<long long>(pred.w),
             static_cast<long long>(gt.h), static_cast<long long>(gt.w));
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const int32_t g = gt.v[static_cast<size_t>(i)];
    const int32_t p = pred.v[static_cast<size_t>(i)];
    OLAF_CHECK(g >= 0 && g < cm.k, DataError,
               "accumulate: ground-truth label %d outside [0, %lld)", g,
               static_cast<long long>(cm.k));
    OLAF_CHECK(p >= 0 && p < cm.k, DataError,
               "accumulate: predicted label %d outside [0, %lld)", p,
               static_cast<long long>(cm.k));
    ++cm.at(g, p);
  }
}

std::vector<std::optional<double>> per_class_iou(const ConfusionMatrix &cm) {
  std::vector<std::optional<double>> out(static_cast<size_t>(cm.k));
  for (int64_t c = 0; c < cm.k; ++c) {
    int64_t row = 0, col = 0;
    for (int64_t j = 0; j < cm.k; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const int64_t uni = row + col - cm.at(c, c);
    if (uni > 0)
      out[static_cast<size_t>(c)] =
          static_cast<double>(cm.at(c, c)) / static_cast<double>(uni);
  }
  return out;
}

std::optional<double> mean_defined(
    const std::vector<std::optional<double>> &xs) {
  double sum = 0.0;
  int64_t n = 0;
  for (const auto &x : xs)
    if (x) {
      sum += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<double> miou(const ConfusionMatrix &cm) {
  return mean_defined(per_class_iou(cm));
}

ObjectMeans mavg(const std::vector<std::optional<double>> &per_class,
                 const data::Taxonomy &tax) {
  ObjectMeans out;
  out.per_object.resize(tax.objects.size());
  std::vector<std::optional<double>> object_values;
  for (size_t o = 0; o < tax.objects.size(); ++o) {
    std::vector<std::optional<double>> part_scores;
    for (const auto &p : tax.parts) {
      if (p.object_name != tax.objects[o].name) continue;
      if (p.id >= 0 && static_cast<size_t>(p.id) < per_class.size())
        part_scores.push_back(per_class[static_cast<size_t>(p.id)]);
    }
    out.per_object[o] = mean_defined(part_scores);
  }
  out.overall = mean_defined(out.per_object);
  return out;
}

void SqIouAccumulator::add(const data::LabelMap &pred,
                           const data::LabelMap &gt) {
  ConfusionMatrix cm(k);
  accumulate(cm, pred, gt);
  const auto iou = per_class_iou(cm);
  for (int64_t c = 0; c < k; ++c) {
    int64_t area = 0;
    for (int64_t j = 0; j < k; ++j) area += cm.at(c, j);
    if (area == 0) continue;
    const double wgt = std::sqrt(static_cast<double>(area));
    weight[static_cast<size_t>(c)] += wgt;
    weighted[static_cast<size_t>(c)] += wgt * iou[static_cast<size_t>(c)].value();
  }
}

void SqIouAccumulator::merge(const SqIouAccumulator &other) {
  OLAF_CHECK(k == other.k, ShapeError,
             "sqiou merge: %lld classes vs %lld", static_cast<long long>(k),
             static_cast<long long>(other.k));
  for (size_t c = 0; c < weight.size(); ++c) {
    weight[c] += other.weight[c];
    weighted[c] += other.weighted[c];
  }
}

std::vector<std::optional<double>> sqiou_per_class(
    const SqIouAccumulator &acc) {
  std::vector<std::optional<double>> out(static_cast<size_t>(acc.k));
  for (size_t c = 0; c < out.size(); ++c)
    if (acc.weight[c] > 0.0) out[c] = acc.weighted[c] / acc.weight[c];
  return out;
}

std::vector<Component> connected_components(const data::LabelMap &m,
                                            int32_t cls) {
  std::vector<Component> out;
  std::vector<uint8_t> seen(static_cast<size_t>(m.numel()), 0);
  std::vector<int64_t> stack;
  for (int64_t start = 0; start < m.numel(); ++start) {
    if (seen[static_cast<size_t>(start)] ||
        m.v[static_cast<size_t>(start)] != cls)
      continue;
    Component comp;
    comp.i0 = comp.i1 = start / m.w;
    comp.j0 = comp.j1 = start % m.w;
    stack.assign(1, start);
    seen[static_cast<size_t>(start)] = 1;
    while (!stack.empty()) {
      const int64_t p = stack.back();
      stack.pop_back();
      const int64_t i = p / m.w, j = p % m.w;
      ++comp.area;
      comp.i0 = std::min(comp.i0, i);
      comp.i1 = std::max(comp.i1, i);
      comp.j0 = std::min(comp.j0, j);
      comp.j1 = std::max(comp.j1, j);
      const int64_t nbr[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto &nn : nbr) {
        if (nn[0] < 0 || nn[0] >= m.h || nn[1] < 0 || nn[1] >= m.w) continue;
        const int64_t q = nn[0] * m.w + nn[1];
        if (!seen[static_cast<size_t>(q)] &&
            m.v[static_cast<size_t>(q)] == cls) {
          seen[static_cast<size_t>(q)] = 1;
          stack.push_back(q);
        }
      }
    }
    out.push_back(comp);
  }
  return out;
}

SmallPartResult miou_small(const std::vector<data::LabelMap> &preds,
                           const std::vector<data::LabelMap> &gts,
                           const data::Taxonomy &tax,
                           int64_t threshold_area) {
  OLAF_CHECK(preds.size() == gts.size(), ShapeError,
             "miou_small: %zu predictions vs %zu ground truths", preds.size(),
             gts.size());
  const int64_t K = tax.num_classes();
  std::vector<int64_t> inter(static_cast<size_t>(K), 0);
  std::vector<int64_t> uni(static_cast<size_t>(K), 0);
  std::vector<uint8_t> seen_small(static_cast<size_t>(K), 0);

  for (size_t img = 0; img < gts.size(); ++img) {
    const data::LabelMap &gt = gts[img];
    const data::LabelMap &pred = preds[img];
    OLAF_CHECK(pred.h == gt.h && pred.w == gt.w, ShapeError,
               "miou_small: raster sizes disagree in image %zu", img);
    std::vector<uint8_t> region(static_cast<size_t>(gt.numel()));
    for (int64_t c = 1; c < K; ++c) {
      std::fill(region.begin(), region.end(), 0);
      bool any = false;
      for (const Component &comp :
           connected_components(gt, static_cast<int32_t>(c))) {
        if (comp.area >= threshold_area) continue;
        any = true;
        const int64_t i0 = std::max<int64_t>(0, comp.i0 - 2);
        const int64_t i1 = std::min(gt.h - 1, comp.i1 + 2);
        const int64_t j0 = std::max<int64_t>(0, comp.j0 - 2);
        const int64_t j1 = std::min(gt.w - 1, comp.j1 + 2);
        for (int64_t i = i0; i <= i1; ++i)
          for (int64_t j = j0; j <= j1; ++j)
            region[static_cast<size_t>(i * gt.w + j)] = 1;
      }
      if (!any) continue;
      seen_small[static_cast<size_t>(c)] = 1;
      for (int64_t p = 0; p < gt.numel(); ++p) {
        if (!region[static_cast<size_t>(p)]) continue;
        const bool in_gt = gt.v[static_cast<size_t>(p)] == c;
        const bool in_pred = pred.v[static_cast<size_t>(p)] == c;
        inter[static_cast<size_t>(c)] += in_gt && in_pred;
        uni[static_cast<size_t>(c)] += in_gt || in_pred;
      }
    }
  }

  SmallPartResult out;
  out.per_class.resize(static_cast<size_t>(K));
  for (int64_t c = 1; c < K; ++c) {
    if (!seen_small[static_cast<size_t>(c)]) continue;
    // A kept component contributes its own pixels, so the union is nonzero.
    out.per_class[static_cast<size_t>(c)] =
        static_cast<double>(inter[static_cast<size_t>(c)]) /
        static_cast<double>(uni[static_cast<size_t>(c)]);
  }
  const ObjectMeans om = mavg(out.per_class, tax);
  out.per_object = om.per_object;
  out.overall = om.overall;
  return out;
}

MetricReport evaluate(const std::vector<data::LabelMap> &preds,
                      const std::vector<data::LabelMap> &gts,
                      const data::Taxonomy &tax) {
  OLAF_CHECK(preds.size() == gts.size() && !gts.empty(), ShapeError,
             "evaluate: %zu predictions vs %zu ground truths", preds.size(),
             gts.size());
  const int64_t K = tax.num_classes();
  ConfusionMatrix cm(K);
  SqIouAccumulator sq(K);
  for (size_t i = 0; i < gts.size(); ++i) {
    accumulate(cm, preds[i], gts[i]);
    sq.add(preds[i], gts[i]);
  }
  MetricReport r;
  r.variant = tax.name;
  r.class_iou = per_class_iou(cm);
  r.miou = mean_defined(r.class_iou);
  r.mavg = mavg(r.class_iou, tax).overall;
  const auto sqc = sqiou_per_class(sq);
  r.sqiou = mean_defined(sqc);
  r.sqavg = mavg(sqc, tax).overall;
  r.miou_small = miou_small(preds, gts, tax).overall;
  return r;
}

namespace {

std::string cell(const std::optional<double> &x) {
  if (!x) return "undef";
  return strfmt("%.6f", *x);
}

} // namespace

std::string report_csv(const MetricReport &r, const data::Taxonomy &tax) {
  std::ostringstream out;
  out << "# sqIoU definition: per-image IoU weighted by sqrt of class area\n";
  const std::string col = r.scheme.empty() ? "iou" : r.scheme;
  out << "class," << col << "\n";
  for (const auto &p : tax.parts) {
    std::optional<double> v;
    if (p.id >= 0 && static_cast<size_t>(p.id) < r.class_iou.size())
      v = r.class_iou[static_cast<size_t>(p.id)];
    out << p.name << "," << cell(v) << "\n";
  }
  out << "mIoU," << cell(r.miou) << "\n";
  out << "mAvg," << cell(r.mavg) << "\n";
  out << "sqIoU," << cell(r.sqiou) << "\n";
  out << "sqAvg," << cell(r.sqavg) << "\n";
  out << "mIoU_small," << cell(r.miou_small) << "\n";
  return out.str();
}

nlohmann::json report_json(const MetricReport &r) {
  auto val = [](const std::optional<double> &x) {
    return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
  };
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto &x : r.class_iou) per_class.push_back(val(x));
  return nlohmann::json{
      {"variant", r.variant},
      {"scheme", r.scheme},
      {"metrics",
       {{"miou", val(r.miou)},
        {"mavg", val(r.mavg)},
        {"sqiou", val(r.sqiou)},
        {"sqavg", val(r.sqavg)},
        {"miou_small", val(r.miou_small)},
        {"class_iou", per_class}}}};
}

} // namespace olaf::metrics
