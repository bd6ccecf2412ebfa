#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dmatch/tensor.hpp"

using namespace dmatch;

TEST_CASE("tensor construction and accessors") {
  Tensor t(2, 3);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(t.at(i, j) == 0.0);

  t.at(1, 2) = 4.5;
  CHECK(t.at(1, 2) == 4.5);

  Tensor f = Tensor::full(2, 2, 7.0);
  CHECK(f.at(0, 0) == 7.0);
  CHECK(f.at(1, 1) == 7.0);

  Tensor s = Tensor::scalar(3.0);
  CHECK(s.is_scalar());
  CHECK(s.scalar_value() == 3.0);

  Tensor r = Tensor::row({1.0, 2.0, 3.0});
  CHECK(r.rows() == 1);
  CHECK(r.cols() == 3);
  CHECK(r.at(0, 1) == 2.0);

  Tensor c = Tensor::column({1.0, 2.0});
  CHECK(c.rows() == 2);
  CHECK(c.cols() == 1);

  Tensor fr = Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}});
  CHECK(fr.at(1, 0) == 3.0);
}

TEST_CASE("tensor rejects non-finite values at construction") {
  CHECK_THROWS_AS(Tensor(1, 2, {1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor::scalar(std::numeric_limits<double>::infinity()),
                  std::invalid_argument);
  // the escape hatch for diagnostics does not throw
  Tensor u = Tensor::unchecked(1, 2, {1.0, std::nan("")});
  CHECK(!all_finite(u));
}

TEST_CASE("tensor shape and size mismatches throw") {
  CHECK_THROWS(Tensor(2, 2, {1.0, 2.0, 3.0}));
  Tensor a(2, 2);
  CHECK_THROWS(a.scalar_value());
}

TEST_CASE("max_abs_diff") {
  Tensor a = Tensor::row({1.0, 2.0});
  Tensor b = Tensor::row({1.5, 1.0});
  CHECK(max_abs_diff(a, b) == doctest::Approx(1.0));
}

TEST_CASE("gather_rows") {
  Tensor a = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  Tensor g = gather_rows(a, {2, 0});
  CHECK(g.rows() == 2);
  CHECK(g.at(0, 0) == 5);
  CHECK(g.at(1, 1) == 2);
  CHECK_THROWS(gather_rows(a, {3}));
  CHECK_THROWS(gather_rows(a, {-1}));
}
