#include "dmatch/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace dmatch {

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_gradient: h must be positive");
  Tensor grad(x.rows(), x.cols());
  Tensor probe = x;
  for (int i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const double fp = f(probe);
    probe.data()[i] = orig - h;
    const double fm = f(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error("finite_difference_gradient: non-finite function value");
    grad.data()[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const Tensor& a, const Tensor& b, double floor) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_rel_error: shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  double worst = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    const double denom = std::max(floor, std::max(std::fabs(x), std::fabs(y)));
    worst = std::max(worst, std::fabs(x - y) / denom);
  }
  return worst;
}

double rel_l2_error(const Tensor& a, const Tensor& b, double floor) {
  if (!a.same_shape(b))
    throw std::invalid_argument("rel_l2_error: shape mismatch " + a.shape_string() + " vs " +
                                b.shape_string());
  double diff2 = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    diff2 += d * d;
    na += a.data()[i] * a.data()[i];
    nb += b.data()[i] * b.data()[i];
  }
  const double denom = std::max(floor, std::max(std::sqrt(na), std::sqrt(nb)));
  return std::sqrt(diff2) / denom;
}

}  // namespace dmatch
