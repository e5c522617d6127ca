#include "concad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace concad {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check_inplace(std::size_t count, const std::function<void(std::size_t, double)>& perturb,
                                   const std::function<double()>& evaluate,
                                   const std::function<double(std::size_t)>& analytic, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("grad_check: step must be > 0");
  GradCheckReport report;
  for (std::size_t i = 0; i < count; ++i) {
    perturb(i, step);
    const double plus = evaluate();
    perturb(i, -2.0 * step);
    const double minus = evaluate();
    perturb(i, step);
    const double a = analytic(i);
    if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(a)) {
      throw NumericError("grad_check: non-finite value at coordinate " + std::to_string(i));
    }
    const double numeric = (plus - minus) / (2.0 * step);
    const double err = relative_error(a, numeric);
    if (i == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

GradCheckReport grad_check(const std::function<double(const Tensor&)>& fn, const Tensor& point,
                           const Tensor& analytic, double step) {
  require_same_shape(point, analytic, "grad_check");
  Tensor x = point;
  // Offsets are applied to the original coordinate so the point is restored exactly.
  std::size_t current = 0;
  double offset = 0.0;
  return grad_check_inplace(
      x.size(),
      [&](std::size_t i, double d) {
        if (i != current) offset = 0.0;
        current = i;
        offset += d;
        x[i] = offset == 0.0 ? point[i] : point[i] + offset;
      },
      [&] { return fn(x); },
      [&](std::size_t i) { return analytic[i]; }, step);
}

}  // namespace concad
