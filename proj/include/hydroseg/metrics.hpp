#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "hydroseg/common.hpp"
#include "hydroseg/raster.hpp"

namespace hydroseg {

/// Pixel-level confusion counters. A mergeable value: accumulation over any
/// partition of the data gives the same totals.
struct ConfusionMatrix {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t tn = 0;
  int64_t fn = 0;

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  int64_t total() const { return tp + fp + tn + fn; }

  /// Swapping the positive class turns tp<->tn and fp<->fn.
  ConfusionMatrix inverted() const { return {tn, fn, tp, fp}; }
};

inline void accumulate(ConfusionMatrix& cm, const LabelMask& pred, const LabelMask& gt) {
  require(pred.width == gt.width && pred.height == gt.height, errkind::shape_mismatch,
          "pred/gt mask shapes differ");
  for (size_t i = 0; i < gt.data.size(); ++i) {
    const bool p = pred.data[i] != 0;
    const bool g = gt.data[i] != 0;
    if (p && g)
      ++cm.tp;
    else if (p && !g)
      ++cm.fp;
    else if (!p && !g)
      ++cm.tn;
    else
      ++cm.fn;
  }
}

/// Metric values in [0,1]; nullopt when the defining denominator is zero.
struct MetricRow {
  std::string class_name;
  std::optional<double> iou;
  std::optional<double> f1;
  std::optional<double> precision;
  std::optional<double> recall;
};

inline MetricRow compute_metrics(const ConfusionMatrix& cm, const std::string& class_name = "") {
  MetricRow row;
  row.class_name = class_name;
  const double tp = double(cm.tp), fp = double(cm.fp), fn = double(cm.fn);
  if (cm.tp + cm.fp + cm.fn > 0) row.iou = tp / (tp + fp + fn);
  if (cm.tp + cm.fp > 0) row.precision = tp / (tp + fp);
  if (cm.tp + cm.fn > 0) row.recall = tp / (tp + fn);
  if (row.precision && row.recall && (*row.precision + *row.recall) > 0.0)
    row.f1 = 2.0 * *row.precision * *row.recall / (*row.precision + *row.recall);
  else if (row.precision && row.recall)
    row.f1 = std::nullopt;
  return row;
}

struct ClassReport {
  MetricRow water;
  MetricRow background;
  ConfusionMatrix cm;  // water-as-positive counts
};

inline ClassReport per_class_report(const ConfusionMatrix& cm) {
  ClassReport rep;
  rep.cm = cm;
  rep.water = compute_metrics(cm, "water");
  rep.background = compute_metrics(cm.inverted(), "background");
  return rep;
}

/// Formats a fraction as a 2-decimal percent, "-" when undefined.
inline std::string percent_str(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v * 100.0);
  return buf;
}

}  // namespace hydroseg
