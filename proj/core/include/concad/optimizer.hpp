#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "concad/tensor.hpp"

namespace concad {

/// Trainable tensor with its gradient and AMSGrad state.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;      // first moment
  Tensor v;      // second moment
  Tensor v_hat;  // running elementwise max of v
  std::int64_t step = 0;
  /// Receives the extractor L2 penalty in amsgrad_step.
  bool l2_regularized = false;

  Parameter() = default;
  Parameter(std::string name, Tensor value, bool l2_regularized = false);

  void zero_grad();
  void reset_optimizer_state();
};

struct AmsGradOptions {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  /// Coefficient of the L2 penalty wd * |theta|^2, applied to l2_regularized parameters.
  double l2_coeff = 0.0;
};

/// One bias-corrected AMSGrad update:
///   g    <- g + 2 * l2_coeff * theta          (l2_regularized parameters only)
///   m    <- beta1 * m + (1 - beta1) * g
///   v    <- beta2 * v + (1 - beta2) * g^2
///   vhat <- max(vhat, v)
///   theta <- theta - lr * (m / (1 - beta1^t)) / (sqrt(vhat / (1 - beta2^t)) + eps)
void amsgrad_step(std::span<Parameter* const> params, const AmsGradOptions& options);

}  // namespace concad
