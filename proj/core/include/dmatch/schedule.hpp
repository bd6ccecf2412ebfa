#pragma once

#include <vector>

namespace dmatch {

// Geometric noise levels sigma_min .. sigma_max. level(0) == sigma_min,
// level(L-1) == sigma_max; sigma_at(t) interpolates the same grid for
// continuous t in [0, 1].
struct NoiseSchedule {
  double sigma_min = 0.01;
  double sigma_max = 1.0;
  int levels = 10;

  void validate() const;
  double level(int i) const;
  double sigma_at(double t) const;
  std::vector<double> all_levels() const;
  // d(sigma_t^2)/dt for the geometric interpolation: 2 log(smax/smin) sigma_t^2.
  double g_squared(double t) const;
};

}  // namespace dmatch
