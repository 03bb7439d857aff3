#include "adprog/metrics.hpp"

#include <cstdio>

#include "adprog/error.hpp"

namespace adprog {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  tp += other.tp;
  tn += other.tn;
  fp += other.fp;
  fn += other.fn;
  return *this;
}

ClassificationMetrics metrics_from_confusion(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw InputError("metrics: no evaluated samples");
  ClassificationMetrics m;
  m.confusion = cm;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  if (cm.tp + cm.fp > 0) m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
  if (cm.tp + cm.fn > 0) m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * (*m.precision * *m.recall) / (*m.precision + *m.recall);
  }
  return m;
}

ClassificationMetrics confusion_and_metrics(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw InputError("metrics: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw InputError("metrics: no evaluated samples");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int p = predictions[i], y = labels[i];
    if ((p != 0 && p != 1) || (y != 0 && y != 1)) throw InputError("metrics: classes must be 0 or 1");
    if (p == 1 && y == 1) ++cm.tp;
    if (p == 0 && y == 0) ++cm.tn;
    if (p == 1 && y == 0) ++cm.fp;
    if (p == 0 && y == 1) ++cm.fn;
  }
  return metrics_from_confusion(cm);
}

std::string format_metric(const std::optional<double>& value, int digits) {
  if (!value) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *value);
  return buf;
}

}  // namespace adprog
