#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dmatch/tensor.hpp"

namespace dmatch {

// splitmix64 step; used to derive independent substream seeds.
uint64_t hash_mix(uint64_t a, uint64_t b);

// Deterministic RNG. Uniform and normal draws are generated from raw engine
// bits (Box-Muller) instead of std distributions, so the exact byte stream
// does not depend on the standard library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);
  double normal();                        // standard normal
  int randint(int n);                     // [0, n)

  Tensor normal_tensor(int rows, int cols);
  Tensor uniform_tensor(int rows, int cols, double lo, double hi);
  std::vector<int> sample_indices(int population, int count);  // with replacement
  std::vector<int> permutation(int n);

  Rng fork(uint64_t stream_id) const;

 private:
  std::mt19937_64 engine_;
  uint64_t seed_;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace dmatch
