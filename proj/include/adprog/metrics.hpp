#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace adprog {

// Positive class is 1 (pMCI).
struct ConfusionMatrix {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
};

/// Accuracy, precision, recall and F1. A ratio whose denominator is zero is
/// left empty ("undefined") instead of being forced to 0 or 1.
struct ClassificationMetrics {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

ClassificationMetrics metrics_from_confusion(const ConfusionMatrix& cm);

// Throws InputError on length mismatch, empty input, or labels outside {0, 1}.
ClassificationMetrics confusion_and_metrics(std::span<const int> predictions, std::span<const int> labels);

// "undefined" for an empty value, otherwise fixed with `digits` decimals.
std::string format_metric(const std::optional<double>& value, int digits = 6);

}  // namespace adprog
