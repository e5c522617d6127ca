#include "concad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "concad/ops.hpp"

namespace concad {

namespace {

constexpr double kProbFloor = 1e-12;

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes, const char* what) {
  if (rows == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
  if (labels.size() != rows) throw std::invalid_argument(std::string(what) + ": label count does not match batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::invalid_argument(std::string(what) + ": label " + std::to_string(y) + " out of range");
    }
  }
}

std::vector<double> row_weights(std::span<const int> labels, const std::optional<std::vector<double>>& class_weights,
                                 std::size_t classes) {
  std::vector<double> w(labels.size(), 1.0);
  if (class_weights) {
    if (class_weights->size() != classes) throw std::invalid_argument("cross_entropy: class weight count mismatch");
    for (std::size_t i = 0; i < labels.size(); ++i) w[i] = (*class_weights)[static_cast<std::size_t>(labels[i])];
  }
  return w;
}

double log_sum_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("loss config: lambda must lie in [0, 1]");
  if (!(tau > 0.0)) throw std::invalid_argument("loss config: tau must be > 0");
  if (class_weights && class_weights->size() != 2) throw std::invalid_argument("loss config: need 2 class weights");
}

LossValue cross_entropy(const Tensor& probs, std::span<const int> labels,
                        const std::optional<std::vector<double>>& class_weights) {
  require_rank(probs, 2, "cross_entropy probs");
  const std::size_t n = probs.dim(0), classes = probs.dim(1);
  check_labels(labels, n, classes, "cross_entropy");
  const auto w = row_weights(labels, class_weights, classes);
  double wsum = 0.0;
  for (double x : w) wsum += x;
  if (!(wsum > 0.0)) throw std::invalid_argument("cross_entropy: class weights sum to zero");

  LossValue out{0.0, Tensor::like(probs)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const double p = probs.at(i, y);
    const double clamped = std::max(p, kProbFloor);
    out.value -= w[i] * std::log(clamped);
    if (p > kProbFloor) out.grad.at(i, y) = -w[i] / (p * wsum);
  }
  out.value /= wsum;
  return out;
}

LossValue cross_entropy_with_logits(const Tensor& logits, std::span<const int> labels,
                                    const std::optional<std::vector<double>>& class_weights) {
  require_rank(logits, 2, "cross_entropy logits");
  const std::size_t n = logits.dim(0), classes = logits.dim(1);
  check_labels(labels, n, classes, "cross_entropy");
  const auto w = row_weights(labels, class_weights, classes);
  double wsum = 0.0;
  for (double x : w) wsum += x;
  if (!(wsum > 0.0)) throw std::invalid_argument("cross_entropy: class weights sum to zero");

  const Tensor probs = softmax(logits, 1);
  LossValue out{0.0, Tensor::like(logits)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    out.value -= w[i] * std::log(std::max(probs.at(i, y), kProbFloor));
    for (std::size_t c = 0; c < classes; ++c) {
      out.grad.at(i, c) = w[i] * (probs.at(i, c) - (c == y ? 1.0 : 0.0)) / wsum;
    }
  }
  out.value /= wsum;
  return out;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (!(uu > 0.0) || !(vv > 0.0)) throw NumericError("cosine_similarity: zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

ContrastiveValue supervised_contrastive(const Tensor& z, std::span<const int> labels, double tau,
                                        bool include_anchor) {
  require_rank(z, 2, "supervised_contrastive z");
  const std::size_t n = z.dim(0), d = z.dim(1);
  if (n < 2) throw std::invalid_argument("supervised_contrastive: need at least 2 rows");
  if (labels.size() != n) throw std::invalid_argument("supervised_contrastive: label count does not match batch");
  if (!(tau > 0.0)) throw std::invalid_argument("supervised_contrastive: tau must be > 0");

  // Unit rows and pairwise cosines.
  std::vector<double> norm(n);
  Tensor unit = Tensor::like(z);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += z.at(i, c) * z.at(i, c);
    norm[i] = std::sqrt(sq);
    if (!(norm[i] > 0.0)) throw NumericError("supervised_contrastive: zero embedding row");
    for (std::size_t c = 0; c < d; ++c) unit.at(i, c) = z.at(i, c) / norm[i];
  }
  Tensor cos({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    cos.at(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += unit.at(i, c) * unit.at(j, c);
      cos.at(i, j) = cos.at(j, i) = dot;
    }
  }

  ContrastiveValue out;
  out.grad = Tensor::like(z);
  Tensor coef({n, n});  // dL / ds_ij for i != j

  bool any_positive = false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && labels[j] == labels[i]) any_positive = true;
  out.degenerate = !any_positive;

  std::vector<double> others, positives;
  std::vector<std::size_t> other_idx, pos_idx;
  for (std::size_t i = 0; i < n; ++i) {
    others.clear();
    other_idx.clear();
    positives.clear();
    pos_idx.clear();
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      others.push_back(cos.at(i, k) / tau);
      other_idx.push_back(k);
      if (labels[k] == labels[i]) {
        positives.push_back(cos.at(i, k) / tau);
        pos_idx.push_back(k);
      }
    }
    const double denom_lse = log_sum_exp(others);

    if (!include_anchor) {
      if (positives.empty()) continue;
      ++out.anchors;
      const double inv_p = 1.0 / static_cast<double>(positives.size());
      double term = denom_lse;
      for (double s : positives) term -= inv_p * s;
      out.value += term;
      for (std::size_t a = 0; a < others.size(); ++a) coef.at(i, other_idx[a]) += std::exp(others[a] - denom_lse);
      for (std::size_t k : pos_idx) coef.at(i, k) -= inv_p;
    } else {
      // Literal form: positives (including the anchor's own similarity 1/tau)
      // summed inside the log, weighted by 1 / N_{y_i}, summed over anchors.
      ++out.anchors;
      positives.push_back(1.0 / tau);
      const double inv_n = 1.0 / static_cast<double>(positives.size());
      const double num_lse = log_sum_exp(positives);
      out.value += -inv_n * (num_lse - denom_lse);
      for (std::size_t a = 0; a < pos_idx.size(); ++a) {
        coef.at(i, pos_idx[a]) -= inv_n * std::exp(positives[a] - num_lse);
      }
      for (std::size_t a = 0; a < others.size(); ++a) {
        coef.at(i, other_idx[a]) += inv_n * std::exp(others[a] - denom_lse);
      }
    }
  }

  if (!include_anchor) {
    if (out.anchors == 0) {
      out.value = 0.0;
      return out;
    }
    const double inv_m = 1.0 / static_cast<double>(out.anchors);
    out.value *= inv_m;
    coef *= inv_m;
  }

  // s_ij = cos_ij / tau, d cos_ij / d z_i = (u_j - cos_ij u_i) / |z_i|.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double g = (coef.at(i, j) + coef.at(j, i)) / tau;
      if (g == 0.0) continue;
      const double scale = g / norm[i];
      for (std::size_t c = 0; c < d; ++c) {
        out.grad.at(i, c) += scale * (unit.at(j, c) - cos.at(i, j) * unit.at(i, c));
      }
    }
  }
  return out;
}

HybridValue hybrid(const LossValue& ce, const ContrastiveValue& sc, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("hybrid: lambda must lie in [0, 1]");
  HybridValue h;
  h.ce = ce.value;
  h.sc = sc.value;
  h.value = lambda * ce.value + (1.0 - lambda) * sc.value;
  h.grad_ce_input = ce.grad;
  h.grad_ce_input *= lambda;
  h.grad_sc_input = sc.grad;
  h.grad_sc_input *= (1.0 - lambda);
  return h;
}

}  // namespace concad
