#include "concad/metrics.hpp"

#include <stdexcept>

namespace concad {

namespace {
double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

MetricsReport metrics_from_confusion(const std::array<std::array<std::size_t, kNumClasses>, kNumClasses>& confusion) {
  MetricsReport r;
  r.confusion = confusion;
  std::size_t trace = 0;
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    trace += confusion[t][t];
    for (std::size_t p = 0; p < kNumClasses; ++p) r.n_eval += confusion[t][p];
  }
  if (r.n_eval == 0) throw std::invalid_argument("metrics: empty evaluation set");
  r.accuracy = ratio(trace, r.n_eval);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < kNumClasses; ++o) {
      predicted += confusion[o][c];
      actual += confusion[c][o];
    }
    auto& m = r.per_class[c];
    m.support = actual;
    m.precision = ratio(confusion[c][c], predicted);
    m.recall = ratio(confusion[c][c], actual);
    m.f1 = ratio(2 * confusion[c][c], predicted + actual);
    f1_sum += m.f1;
  }
  r.macro_f1 = f1_sum / static_cast<double>(kNumClasses);
  return r;
}

MetricsReport compute_metrics(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("metrics: truth and predictions differ in length");
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= static_cast<int>(kNumClasses) || predicted[i] < 0 ||
        predicted[i] >= static_cast<int>(kNumClasses)) {
      throw std::invalid_argument("metrics: class index out of range");
    }
    ++confusion[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return metrics_from_confusion(confusion);
}

}  // namespace concad
