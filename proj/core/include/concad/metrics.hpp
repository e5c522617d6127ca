#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace concad {

inline constexpr std::size_t kNumClasses = 2;

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricsReport {
  /// confusion[true][predicted]
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
  std::array<ClassMetrics, kNumClasses> per_class{};
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::size_t n_eval = 0;
};

/// Precision, recall and F1 are 0 where their denominators are 0, so a class
/// that is never predicted or never present contributes F1 = 0 to the macro mean.
MetricsReport metrics_from_confusion(const std::array<std::array<std::size_t, kNumClasses>, kNumClasses>& confusion);
MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted);

}  // namespace concad
