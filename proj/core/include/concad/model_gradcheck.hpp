#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "concad/arch_config.hpp"
#include "concad/gradcheck.hpp"

namespace concad {

/// Small architecture whose full parameter set can be checked coordinate by coordinate.
ArchConfig toy_gradcheck_arch();
InputDims toy_gradcheck_dims();

struct ModelGradCheckOptions {
  std::uint64_t seed = 7;
  std::size_t batch = 4;
  double lambda = 0.5;
  double tau = 0.5;
  bool sc_include_anchor = false;
  double step = 1e-6;
};

struct ModelGradCheckPass {
  GradCheckReport report;
  std::size_t coordinates = 0;
  std::string worst_parameter;
};

/// Finite-difference check of the hybrid loss against backprop for every
/// trainable coordinate of a freshly initialized model on a random batch.
///
/// `train` runs in training mode with a fixed dropout stream; conv biases are
/// left out there because batch statistics cancel them (their gradient is
/// exactly zero). `infer` uses randomized running statistics and covers
/// every parameter, conv biases included.
struct ModelGradCheckResult {
  ModelGradCheckPass train;
  ModelGradCheckPass infer;

  double max_rel_error() const noexcept;
};

ModelGradCheckResult run_model_gradcheck(const ArchConfig& arch, const InputDims& dims,
                                         const ModelGradCheckOptions& options = {});
inline ModelGradCheckResult run_model_gradcheck(const ModelGradCheckOptions& options = {}) {
  return run_model_gradcheck(toy_gradcheck_arch(), toy_gradcheck_dims(), options);
}

}  // namespace concad
