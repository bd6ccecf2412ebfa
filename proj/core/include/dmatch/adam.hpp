#pragma once

#include <vector>

#include "dmatch/tensor.hpp"

namespace dmatch {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam over a fixed parameter group. Moment buffers are keyed by position in
// the parameter list, which must not change between steps.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor*> params, double lr, AdamConfig cfg = {});

  // grads aligned with the parameter list; throws NonFiniteError on
  // non-finite gradients or updates.
  void step(const std::vector<Tensor>& grads);
  int steps_taken() const { return t_; }
  double lr() const { return lr_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  double lr_ = 1e-3;
  AdamConfig cfg_;
  int t_ = 0;
};

}  // namespace dmatch
