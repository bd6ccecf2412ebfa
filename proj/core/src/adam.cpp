#include "dmatch/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "dmatch/autodiff.hpp"

namespace dmatch {

Adam::Adam(std::vector<Tensor*> params, double lr, AdamConfig cfg)
    : params_(std::move(params)), lr_(lr), cfg_(cfg) {
  if (!(lr >= 0)) throw std::invalid_argument("Adam: lr must be >= 0");
  for (Tensor* p : params_) {
    if (p == nullptr) throw std::invalid_argument("Adam: null parameter");
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

void Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("Adam::step: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = *params_[k];
    const Tensor& g = grads[k];
    if (!g.same_shape(p))
      throw std::invalid_argument("Adam::step: gradient shape mismatch at parameter " +
                                  std::to_string(k));
    for (int i = 0; i < p.size(); ++i) {
      const double gi = g.data()[i];
      if (!std::isfinite(gi)) throw NonFiniteError("Adam::step: non-finite gradient");
      double& m = m_[k].data()[i];
      double& v = v_[k].data()[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
      const double update = lr_ * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      const double next = p.data()[i] - update;
      if (!std::isfinite(next)) throw NonFiniteError("Adam::step: non-finite parameter update");
      p.data()[i] = next;
    }
  }
}

}  // namespace dmatch
