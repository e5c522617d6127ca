#include "concad/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace concad {

Parameter::Parameter(std::string name_, Tensor value_, bool l2)
    : name(std::move(name_)), value(std::move(value_)), l2_regularized(l2) {
  grad = Tensor::like(value);
  reset_optimizer_state();
}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor::like(value);
  grad.fill(0.0);
}

void Parameter::reset_optimizer_state() {
  m = Tensor::like(value);
  v = Tensor::like(value);
  v_hat = Tensor::like(value);
  step = 0;
}

void amsgrad_step(std::span<Parameter* const> params, const AmsGradOptions& o) {
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0)) {
    throw std::invalid_argument("amsgrad_step: betas must lie in [0, 1)");
  }
  for (Parameter* p : params) {
    if (p->grad.empty() || p->grad.shape() != p->value.shape()) {
      throw std::invalid_argument("amsgrad_step: parameter '" + p->name + "' has no gradient");
    }
    if (p->m.shape() != p->value.shape()) p->reset_optimizer_state();
    p->grad.require_finite(("gradient of " + p->name).c_str());

    ++p->step;
    const double t = static_cast<double>(p->step);
    const double bc1 = 1.0 - std::pow(o.beta1, t);
    const double bc2 = 1.0 - std::pow(o.beta2, t);
    const double wd = p->l2_regularized ? o.l2_coeff : 0.0;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i] + 2.0 * wd * p->value[i];
      p->m[i] = o.beta1 * p->m[i] + (1.0 - o.beta1) * g;
      p->v[i] = o.beta2 * p->v[i] + (1.0 - o.beta2) * g * g;
      p->v_hat[i] = std::max(p->v_hat[i], p->v[i]);
      const double m_hat = p->m[i] / bc1;
      const double v_hat = p->v_hat[i] / bc2;
      p->value[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

}  // namespace concad
