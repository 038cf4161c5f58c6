#include "cmil/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cmil {

void Adam::step(const std::vector<NamedParam>& params, const Tape& tape) {
  for (const NamedParam& p : params) {
    const Tensor* g = tape.grad_of(*p.tensor);
    if (g) step_one(p, *g);
  }
}

void Adam::step_one(const NamedParam& p, const Tensor& grad) {
  Tensor& w = *p.tensor;
  if (!w.same_shape(grad))
    throw std::invalid_argument("Adam: gradient shape mismatch for " + p.name);
  for (double g : grad.data)
    if (!std::isfinite(g))
      throw std::runtime_error("Adam: non-finite gradient in parameter '" + p.name + "'");

  Slot& s = slots_[&w];
  if (s.t == 0) {
    s.m = Tensor::zeros(w.shape);
    s.v = Tensor::zeros(w.shape);
  }
  ++s.t;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double g = grad.data[i];
    s.m.data[i] = beta1_ * s.m.data[i] + (1.0 - beta1_) * g;
    s.v.data[i] = beta2_ * s.v.data[i] + (1.0 - beta2_) * g * g;
    const double mhat = s.m.data[i] / bc1;
    const double vhat = s.v.data[i] / bc2;
    w.data[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

}  // namespace cmil
