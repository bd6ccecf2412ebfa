#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "dmatch/autodiff.hpp"
#include "dmatch/gradcheck.hpp"
#include "dmatch/rng.hpp"
#include "fd_battery.hpp"

using namespace dmatch;

TEST_CASE("every primitive op passes finite-difference checks") {
  // the acceptance runner re-runs this battery with 50 cases per op; a
  // lighter pass here keeps the unit suite fast
  for (const auto& r : fdtest::run_battery(8, 2024)) {
    INFO("op ", r.op, " max rel err ", r.max_err);
    CHECK(r.max_err <= 1e-4);
  }
}

TEST_CASE("detach blocks gradient flow but passes values through") {
  Rng rng(7);
  Tensor x0 = rng.normal_tensor(2, 3);
  Tape tape;
  Var x = tape.leaf(x0, true);
  Var d = detach(x);
  CHECK(max_abs_diff(d.value(), x0) == 0.0);
  Var loss = sum(mul(square(d), x));
  tape.backward(loss);
  // d(loss)/dx only via the direct x factor: grad = x0^2, no 2*x*x term
  Tensor expect(2, 3);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) expect.at(i, j) = x0.at(i, j) * x0.at(i, j);
  CHECK(max_abs_diff(x.grad(), expect) <= 1e-12);
}

TEST_CASE("detached-only paths report zero gradients") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({1.0, 2.0}), true);
  Var loss = sum(square(detach(x)));
  tape.backward(loss);
  CHECK(max_abs_diff(x.grad(), Tensor(1, 2)) == 0.0);
}

TEST_CASE("clamp saturates with zero gradient outside the range") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({-2.0, 0.0, 2.0}), true);
  Var y = clamp(x, -1.0, 1.0);
  CHECK(y.value().at(0, 0) == -1.0);
  CHECK(y.value().at(0, 1) == 0.0);
  CHECK(y.value().at(0, 2) == 1.0);
  tape.backward(sum(y));
  CHECK(x.grad().at(0, 0) == 0.0);
  CHECK(x.grad().at(0, 1) == 1.0);
  CHECK(x.grad().at(0, 2) == 0.0);
}

TEST_CASE("backward is rejected on reuse, non-scalar roots and foreign tapes") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({1.0, 2.0}), true);
  Var s = sum(x);
  tape.backward(s);
  CHECK_THROWS_AS(tape.backward(s), std::logic_error);

  Tape t3;
  Var z = t3.leaf(Tensor::row({1.0, 2.0}), true);
  CHECK_THROWS_AS(t3.backward(square(z)), std::invalid_argument);

  Tape t4, t5;
  Var a = t4.leaf(Tensor::scalar(1.0), true);
  Var b = t5.leaf(Tensor::scalar(2.0), true);
  CHECK_THROWS_AS(add(a, b), std::logic_error);
}

TEST_CASE("domain and finiteness violations throw") {
  Tape tape;
  Var neg_in = tape.leaf(Tensor::row({-1.0}), true);
  CHECK_THROWS_AS(log(neg_in), std::domain_error);
  CHECK_THROWS_AS(sqrt(neg_in), std::domain_error);
  Var big = tape.leaf(Tensor::row({1000.0}), true);
  CHECK_THROWS_AS(exp(big), NonFiniteError);
}

TEST_CASE("identical graphs give bitwise identical values and gradients") {
  Rng rng(31);
  Tensor x0 = rng.normal_tensor(4, 3);
  Tensor w0 = rng.normal_tensor(3, 2);
  auto run = [&](Tensor* grad_out) {
    Tape tape;
    Var x = tape.leaf(x0, true);
    Var w = tape.constant(w0);
    Var loss = mean(square(tanh(matmul(x, w)) + 0.25));
    tape.backward(loss);
    *grad_out = x.grad();
    return loss.value().scalar_value();
  };
  Tensor g1, g2;
  const double v1 = run(&g1);
  const double v2 = run(&g2);
  CHECK(v1 == v2);
  CHECK(max_abs_diff(g1, g2) == 0.0);
}

TEST_CASE("gradients accumulate across fan-out") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0), true);
  Var y = add(mul(x, x), scale(x, 5.0));  // x^2 + 5x
  tape.backward(y);
  CHECK(x.grad().scalar_value() == doctest::Approx(2.0 * 3.0 + 5.0));
}

TEST_CASE("broadcast adjoints reduce over the broadcast dimension") {
  Tape tape;
  Var m = tape.leaf(Tensor::from_rows({{1, 2}, {3, 4}}), true);
  Var r = tape.leaf(Tensor::row({10, 20}), true);
  tape.backward(sum(mul(m, r)));
  // d/dr sums the matrix column; d/dm is the broadcast row
  CHECK(max_abs_diff(r.grad(), Tensor::row({4, 6})) <= 1e-12);
  CHECK(max_abs_diff(m.grad(), Tensor::from_rows({{10, 20}, {10, 20}})) <= 1e-12);
}

TEST_CASE("finite_difference_gradient matches an analytic quadratic") {
  Tensor x0 = Tensor::row({1.0, -2.0});
  auto f = [](const Tensor& x) {
    return x.at(0, 0) * x.at(0, 0) + 3.0 * x.at(0, 1);
  };
  Tensor fd = finite_difference_gradient(f, x0, 1e-5);
  CHECK(fd.at(0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(fd.at(0, 1) == doctest::Approx(3.0).epsilon(1e-6));
}
