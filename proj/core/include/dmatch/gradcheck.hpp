#pragma once

#include <functional>

#include "dmatch/tensor.hpp"

namespace dmatch {

// Central-difference gradient of a scalar function, (f(x+h*e_i) - f(x-h*e_i)) / 2h
// per coordinate. Errors if f returns a non-finite value. This is the
// independent oracle the autodiff checks compare against; it never touches the
// tape machinery.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h = 1e-5);

// max_i |a_i - b_i| / max(floor, |a_i|, |b_i|)
double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-6);

// ||a - b||_2 / max(floor, ||a||_2, ||b||_2)
double rel_l2_error(const Tensor& a, const Tensor& b, double floor = 1e-12);

}  // namespace dmatch
