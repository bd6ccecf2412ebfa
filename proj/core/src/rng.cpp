#include "dmatch/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dmatch {

uint64_t hash_mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(uint64_t seed) : engine_(hash_mix(seed, 0x6d2b79f5ULL)), seed_(seed) {}

double Rng::uniform() {
  // 53 high bits -> double in [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("Rng::uniform: lo > hi");
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  if (have_cached_normal_) {
    have_cached_normal_ = false;
    return cached_normal_;
  }
  // Box-Muller; u1 nudged away from 0 so the log stays finite.
  double u1 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  have_cached_normal_ = true;
  return r * std::cos(theta);
}

int Rng::randint(int n) {
  if (n <= 0) throw std::invalid_argument("Rng::randint: n must be positive");
  // Modulo bias is ~n/2^64; irrelevant at these population sizes.
  return static_cast<int>(engine_() % static_cast<uint64_t>(n));
}

Tensor Rng::normal_tensor(int rows, int cols) {
  Tensor t(rows, cols);
  for (int i = 0; i < t.size(); ++i) t.data()[i] = normal();
  return t;
}

Tensor Rng::uniform_tensor(int rows, int cols, double lo, double hi) {
  Tensor t(rows, cols);
  for (int i = 0; i < t.size(); ++i) t.data()[i] = uniform(lo, hi);
  return t;
}

std::vector<int> Rng::sample_indices(int population, int count) {
  if (population <= 0) throw std::invalid_argument("Rng::sample_indices: empty population");
  std::vector<int> out(count);
  for (int i = 0; i < count; ++i) out[i] = randint(population);
  return out;
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> out(n);
  for (int i = 0; i < n; ++i) out[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = randint(i + 1);
    std::swap(out[i], out[j]);
  }
  return out;
}

Rng Rng::fork(uint64_t stream_id) const { return Rng(hash_mix(seed_, stream_id)); }

}  // namespace dmatch
