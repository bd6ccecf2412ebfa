#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "dmatch/adam.hpp"
#include "dmatch/autodiff.hpp"
#include "dmatch/rng.hpp"

using namespace dmatch;

TEST_CASE("first step follows the bias-corrected update exactly") {
  Tensor p = Tensor::row({1.0, -2.0});
  Adam opt({&p}, 0.1);
  Tensor g = Tensor::row({0.5, -0.25});
  opt.step({g});

  // with t = 1 the bias-corrected moments reduce to g and g^2
  for (int j = 0; j < 2; ++j) {
    const double expect =
        (j == 0 ? 1.0 : -2.0) - 0.1 * g.at(0, j) / (std::sqrt(g.at(0, j) * g.at(0, j)) + 1e-8);
    CHECK(p.at(0, j) == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("two steps match a scalar transcription of the recurrence") {
  Tensor p = Tensor::row({0.7});
  AdamConfig cfg;
  Adam opt({&p}, 0.05, cfg);
  const double g1 = 0.3, g2 = -0.8;
  opt.step({Tensor::row({g1})});
  opt.step({Tensor::row({g2})});

  double m = 0, v = 0, x = 0.7;
  int t = 0;
  for (double g : {g1, g2}) {
    ++t;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t));
    const double vh = v / (1 - std::pow(cfg.beta2, t));
    x -= 0.05 * mh / (std::sqrt(vh) + cfg.eps);
  }
  CHECK(p.at(0, 0) == doctest::Approx(x).epsilon(1e-12));
}

TEST_CASE("non-finite gradients are rejected") {
  Tensor p = Tensor::row({1.0});
  Adam opt({&p}, 0.1);
  Tensor g = Tensor::unchecked(1, 1, {std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(opt.step({g}), NonFiniteError);
}

TEST_CASE("drives a quadratic bowl to its minimum") {
  Rng rng(2024);
  Tensor p = rng.normal_tensor(1, 4);
  Adam opt({&p}, 1e-2);
  // f(p) = sum (p - c)^2 with distinct targets
  const double c[4] = {1.5, -0.6, 0.0, 3.2};
  for (int it = 0; it < 2000; ++it) {
    Tensor g(1, 4);
    for (int j = 0; j < 4; ++j) g.at(0, j) = 2.0 * (p.at(0, j) - c[j]);
    opt.step({g});
  }
  for (int j = 0; j < 4; ++j) CHECK(std::fabs(p.at(0, j) - c[j]) <= 1e-4);
}

TEST_CASE("optimizes through the tape on a two-parameter regression") {
  Rng rng(7);
  Tensor w = rng.normal_tensor(2, 1);
  Tensor x = rng.normal_tensor(32, 2);
  Tensor w_true(2, 1);
  w_true.at(0, 0) = 0.8;
  w_true.at(1, 0) = -1.3;
  Tensor y = matmul_value(x, w_true);

  Adam opt({&w}, 5e-2);
  double last = 1e30;
  for (int it = 0; it < 800; ++it) {
    Tape tape;
    Var wv = tape.leaf(w, true);
    Var pred = matmul(tape.constant(x), wv);
    Var loss = mean(square(sub(pred, tape.constant(y))));
    tape.backward(loss);
    last = loss.value().scalar_value();
    opt.step({wv.grad()});
  }
  CHECK(last <= 1e-6);
  CHECK(std::fabs(w.at(0, 0) - 0.8) <= 1e-3);
  CHECK(std::fabs(w.at(1, 0) + 1.3) <= 1e-3);
}
