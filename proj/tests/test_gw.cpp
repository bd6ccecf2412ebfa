#include <doctest.h>

#include <cmath>
#include <utility>
#include <vector>

#include "dmatch/gradcheck.hpp"
#include "dmatch/objectives.hpp"

using namespace dmatch;

namespace {

// independent O(B^2 D) transcription of the distortion cost
double brute_force_gw(const Tensor& z, const Tensor& dist_x) {
  const int b = z.rows();
  double acc = 0.0;
  int count = 0;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (int k = 0; k < z.cols(); ++k) {
        const double d = z.at(i, k) - z.at(j, k);
        s += d * d;
      }
      const double dz = std::sqrt(s + kPairDistanceRidge);
      const double e = dist_x.at(i, j) - dz;
      acc += e * e;
      ++count;
    }
  return acc / count;
}

Tensor random_dist(int b, Rng& rng) {
  Tensor d(b, b);
  for (int i = 0; i < b; ++i)
    for (int j = i + 1; j < b; ++j) {
      const double v = std::fabs(rng.normal()) + 0.1;
      d.at(i, j) = v;
      d.at(j, i) = v;
    }
  return d;
}

}  // namespace

TEST_CASE("pairwise distances match hand values and are symmetric") {
  Tensor p(3, 2);
  p.at(0, 0) = 0;
  p.at(0, 1) = 0;
  p.at(1, 0) = 3;
  p.at(1, 1) = 4;
  p.at(2, 0) = -1;
  p.at(2, 1) = 0;
  Tensor d = pairwise_distances(p);
  CHECK(d.at(0, 0) == 0.0);
  CHECK(d.at(1, 1) == 0.0);
  CHECK(d.at(0, 1) == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(d.at(0, 2) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(d.at(1, 2) == doctest::Approx(std::sqrt(32.0)).epsilon(1e-9));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(d.at(i, j) == d.at(j, i));
}

TEST_CASE("two-point cost has the closed form") {
  Tensor z(2, 2);
  z.at(1, 0) = 3;
  z.at(1, 1) = 4;
  Tensor dx(2, 2);
  dx.at(0, 1) = 2;
  dx.at(1, 0) = 2;
  Tape tape;
  Var cost = gw_cost(tape.leaf(z, true), dx);
  CHECK(cost.value().scalar_value() == doctest::Approx(9.0).epsilon(1e-9));
}

TEST_CASE("cost equals the brute-force double loop across batch sizes") {
  Rng rng(404);
  for (int b : {2, 3, 7, 16, 33, 64}) {
    Tensor z = rng.normal_tensor(b, 3);
    Tensor dx = random_dist(b, rng);
    Tape tape;
    Var cost = gw_cost(tape.leaf(z, true), dx);
    CHECK(cost.value().scalar_value() ==
          doctest::Approx(brute_force_gw(z, dx)).epsilon(1e-12));
  }
}

TEST_CASE("isometric embeddings cost nothing") {
  Rng rng(405);
  Tensor x = rng.normal_tensor(16, 2);
  Tensor dx = pairwise_distances(x);
  const double theta = 0.83;
  Tensor z(16, 2);
  for (int i = 0; i < 16; ++i) {
    z.at(i, 0) = std::cos(theta) * x.at(i, 0) - std::sin(theta) * x.at(i, 1) + 2.5;
    z.at(i, 1) = std::sin(theta) * x.at(i, 0) + std::cos(theta) * x.at(i, 1) - 1.0;
  }
  Tape tape;
  Var cost = gw_cost(tape.leaf(z, true), dx);
  CHECK(cost.value().scalar_value() <= 1e-12);
}

TEST_CASE("hand adjoint agrees with finite differences") {
  Rng rng(406);
  Tensor z0 = rng.normal_tensor(6, 2);
  Tensor dx = random_dist(6, rng);

  Tape tape;
  Var z = tape.leaf(z0, true);
  tape.backward(gw_cost(z, dx));

  auto f = [&](const Tensor& t) {
    Tape tt;
    return gw_cost(tt.leaf(t, false), dx).value().scalar_value();
  };
  Tensor fd = finite_difference_gradient(f, z0, 1e-6);
  CHECK(max_rel_error(z.grad(), fd, 1e-6) <= 1e-4);
}

TEST_CASE("sampled variant restricts the sum to the given pairs") {
  Rng rng(407);
  Tensor z = rng.normal_tensor(8, 2);
  Tensor dx = random_dist(8, rng);
  std::vector<std::pair<int, int>> pairs = {{0, 3}, {5, 1}, {7, 2}};

  double hand = 0.0;
  for (auto [i, j] : pairs) {
    double s = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double d = z.at(i, k) - z.at(j, k);
      s += d * d;
    }
    const double e = dx.at(i, j) - std::sqrt(s + kPairDistanceRidge);
    hand += e * e;
  }
  hand /= pairs.size();

  Tape tape;
  Var cost = gw_cost_sampled(tape.leaf(z, true), dx, pairs);
  CHECK(cost.value().scalar_value() == doctest::Approx(hand).epsilon(1e-12));

  // full ordered pair list reproduces gw_cost
  std::vector<std::pair<int, int>> all;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j)
      if (i != j) all.emplace_back(i, j);
  Tape t2;
  Var full = gw_cost_sampled(t2.leaf(z, true), dx, all);
  Tape t3;
  Var direct = gw_cost(t3.leaf(z, true), dx);
  CHECK(full.value().scalar_value() ==
        doctest::Approx(direct.value().scalar_value()).epsilon(1e-14));
}

TEST_CASE("sampled adjoint also passes FD") {
  Rng rng(408);
  Tensor z0 = rng.normal_tensor(7, 3);
  Tensor dx = random_dist(7, rng);
  std::vector<std::pair<int, int>> pairs = {{0, 1}, {2, 6}, {4, 3}, {5, 0}};

  Tape tape;
  Var z = tape.leaf(z0, true);
  tape.backward(gw_cost_sampled(z, dx, pairs));
  auto f = [&](const Tensor& t) {
    Tape tt;
    return gw_cost_sampled(tt.leaf(t, false), dx, pairs).value().scalar_value();
  };
  Tensor fd = finite_difference_gradient(f, z0, 1e-6);
  CHECK(max_rel_error(z.grad(), fd, 1e-6) <= 1e-4);
}

TEST_CASE("shape and pair validation") {
  Tape tape;
  Rng rng(409);
  Var z = tape.leaf(rng.normal_tensor(4, 2), true);
  CHECK_THROWS_AS(gw_cost(z, Tensor(3, 3)), std::invalid_argument);
  Var one = tape.leaf(rng.normal_tensor(1, 2), true);
  CHECK_THROWS_AS(gw_cost(one, Tensor(1, 1)), std::invalid_argument);
  std::vector<std::pair<int, int>> bad = {{0, 4}};
  CHECK_THROWS_AS(gw_cost_sampled(z, Tensor(4, 4), bad), std::invalid_argument);
  std::vector<std::pair<int, int>> none;
  CHECK_THROWS_AS(gw_cost_sampled(z, Tensor(4, 4), none), std::invalid_argument);
}

TEST_CASE("composed total loss routes gradient into both terms") {
  Rng rng(410);
  Tensor z0 = rng.normal_tensor(5, 2);
  Tensor dx = random_dist(5, rng);
  LossConfig cfg;
  cfg.lambda_gw = 0.7;

  Tape tape;
  Var z = tape.leaf(z0, true);
  Var dm = mean(square(z));
  Var gw = gw_cost(z, dx);
  Var tot = total_loss(dm, gw, cfg);
  tape.backward(tot);

  auto f = [&](const Tensor& t) {
    Tape tt;
    Var zz = tt.leaf(t, false);
    const double dm_v = mean(square(zz)).value().scalar_value();
    const double gw_v = gw_cost(zz, dx).value().scalar_value();
    return dm_v + cfg.lambda_gw * gw_v;
  };
  Tensor fd = finite_difference_gradient(f, z0, 1e-6);
  CHECK(max_rel_error(z.grad(), fd, 1e-6) <= 1e-4);
}
