#include "dmatch/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace dmatch {

void NoiseSchedule::validate() const {
  if (!(sigma_min > 0)) throw std::invalid_argument("NoiseSchedule: sigma_min must be positive");
  if (!(sigma_max >= sigma_min))
    throw std::invalid_argument("NoiseSchedule: sigma_max must be >= sigma_min");
  if (levels < 1) throw std::invalid_argument("NoiseSchedule: levels must be >= 1");
  if (levels == 1 && sigma_max != sigma_min)
    throw std::invalid_argument("NoiseSchedule: one level requires sigma_min == sigma_max");
}

double NoiseSchedule::level(int i) const {
  if (i < 0 || i >= levels)
    throw std::invalid_argument("NoiseSchedule::level: index " + std::to_string(i) + " of " +
                                std::to_string(levels));
  if (levels == 1) return sigma_min;
  const double t = static_cast<double>(i) / (levels - 1);
  return sigma_at(t);
}

double NoiseSchedule::sigma_at(double t) const {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("NoiseSchedule::sigma_at: t outside [0, 1]");
  return sigma_min * std::pow(sigma_max / sigma_min, t);
}

std::vector<double> NoiseSchedule::all_levels() const {
  std::vector<double> out(levels);
  for (int i = 0; i < levels; ++i) out[i] = level(i);
  return out;
}

double NoiseSchedule::g_squared(double t) const {
  const double s = sigma_at(t);
  return 2.0 * std::log(sigma_max / sigma_min) * s * s;
}

}  // namespace dmatch
