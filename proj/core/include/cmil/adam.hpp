#pragma once

#include <unordered_map>

#include "cmil/nn.hpp"

namespace cmil {

// Standard adaptive-moment optimizer. State is keyed by parameter address,
// so one instance can own several modules' parameters as long as the
// tensors stay put. Throws on non-finite gradients, naming the parameter.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // Applies one update using gradients recorded on the tape. Parameters not
  // bound to the tape are skipped.
  void step(const std::vector<NamedParam>& params, const Tape& tape);
  // Same, with explicit gradients (tests and hand-driven updates).
  void step_one(const NamedParam& p, const Tensor& grad);

  double lr() const { return lr_; }

 private:
  struct Slot {
    Tensor m, v;
    long long t = 0;
  };

  double lr_, beta1_, beta2_, eps_;
  std::unordered_map<const Tensor*, Slot> slots_;
};

}  // namespace cmil
