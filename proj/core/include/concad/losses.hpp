#pragma once

#include <optional>
#include <span>
#include <vector>

#include "concad/tensor.hpp"

namespace concad {

/// Scalar loss with its gradient w.r.t. the loss input.
struct LossValue {
  double value = 0.0;
  Tensor grad;
};

struct LossConfig {
  double lambda = 0.5;
  double tau = 0.1;
  /// Optional per-class weights for cross-entropy (index = class).
  std::optional<std::vector<double>> class_weights;
  /// Evaluate the contrastive term exactly as the printed formula (anchor
  /// counted among its own positives, positives summed inside the log,
  /// normalized by the class count and summed over anchors).
  bool sc_include_anchor = false;

  void validate() const;
};

/// Mean (optionally class-weighted) negative log-likelihood of the true class.
/// Probabilities are clamped at 1e-12 before the log. Gradient is w.r.t. probs.
LossValue cross_entropy(const Tensor& probs, std::span<const int> labels,
                        const std::optional<std::vector<double>>& class_weights = std::nullopt);

/// Same value as cross_entropy(softmax(logits)), with the fused gradient
/// (p - onehot) * w / sum(w) w.r.t. the logits.
LossValue cross_entropy_with_logits(const Tensor& logits, std::span<const int> labels,
                                    const std::optional<std::vector<double>>& class_weights = std::nullopt);

/// u . v / (|u| |v|); zero vectors are an error.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct ContrastiveValue {
  double value = 0.0;
  Tensor grad;               // w.r.t. the embedding rows
  bool degenerate = false;   // no anchor had a positive
  std::size_t anchors = 0;   // anchors that contributed
};

/// Supervised contrastive loss over the rows of z (shape [N, d]).
///
/// Default convention: for anchor i with positives P(i) = {j != i : y_j = y_i},
///   term_i = -1/|P(i)| * sum_{p in P(i)} log( exp(s_ip) / sum_{k != i} exp(s_ik) ),
/// s_ij = cos(z_i, z_j) / tau; anchors without positives are skipped and the
/// loss is the mean over contributing anchors. Rows need not be unit length;
/// the similarity is the full cosine.
ContrastiveValue supervised_contrastive(const Tensor& z, std::span<const int> labels, double tau,
                                        bool include_anchor = false);

struct HybridValue {
  double value = 0.0;
  double ce = 0.0;
  double sc = 0.0;
  Tensor grad_ce_input;  // lambda * dCE
  Tensor grad_sc_input;  // (1 - lambda) * dSC
};

/// lambda * CE + (1 - lambda) * SC, with both gradients scaled accordingly.
HybridValue hybrid(const LossValue& ce, const ContrastiveValue& sc, double lambda);

}  // namespace concad
