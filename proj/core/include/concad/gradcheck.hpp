#pragma once

#include <cstddef>
#include <functional>

#include "concad/tensor.hpp"

namespace concad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double analytic, double numeric);

/// Compares `analytic` against central finite differences of `fn` around
/// `point`, coordinate by coordinate. `fn` must be deterministic.
GradCheckReport grad_check(const std::function<double(const Tensor&)>& fn, const Tensor& point,
                           const Tensor& analytic, double step = 1e-6);

/// In-place variant for large parameter sets: `perturb(i, delta)` shifts
/// coordinate i and `evaluate()` recomputes the scalar.
GradCheckReport grad_check_inplace(std::size_t count, const std::function<void(std::size_t, double)>& perturb,
                                   const std::function<double()>& evaluate,
                                   const std::function<double(std::size_t)>& analytic, double step = 1e-6);

}  // namespace concad
