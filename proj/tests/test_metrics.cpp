#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dmatch/metrics.hpp"
#include "dmatch/rng.hpp"

using namespace dmatch;

namespace {

// well-separated two-class blobs in 2-D
std::pair<Tensor, std::vector<int>> blobs(int n_per_class, double gap, uint64_t seed) {
  Rng rng(seed);
  Tensor x(2 * n_per_class, 2);
  std::vector<int> y;
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const int c = i < n_per_class ? 0 : 1;
    x.at(i, 0) = (c == 0 ? -gap / 2 : gap / 2) + 0.4 * rng.normal();
    x.at(i, 1) = 0.4 * rng.normal();
    y.push_back(c);
  }
  return {x, y};
}

// label 1 on an annulus around label 0: not linearly separable
std::pair<Tensor, std::vector<int>> circles(int n_per_class, uint64_t seed) {
  Rng rng(seed);
  Tensor x(2 * n_per_class, 2);
  std::vector<int> y;
  for (int i = 0; i < 2 * n_per_class; ++i) {
    const int c = i < n_per_class ? 0 : 1;
    const double r = (c == 0 ? 0.5 : 2.0) + 0.1 * rng.normal();
    const double th = rng.uniform(0.0, 2.0 * M_PI);
    x.at(i, 0) = r * std::cos(th);
    x.at(i, 1) = r * std::sin(th);
    y.push_back(c);
  }
  return {x, y};
}

}  // namespace

TEST_CASE("rank auroc on hand cases") {
  CHECK(rank_auroc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}) == 1.0);
  CHECK(rank_auroc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == 0.0);
  // one tie across classes contributes half a concordant pair
  CHECK(rank_auroc({0.1, 0.5, 0.5, 0.9}, {0, 0, 1, 1}) == doctest::Approx(0.875));
  // all scores equal: exactly chance
  CHECK(rank_auroc({0.3, 0.3, 0.3, 0.3}, {0, 1, 0, 1}) == doctest::Approx(0.5));
  CHECK_THROWS(rank_auroc({0.1, 0.2}, {1, 1}));
  CHECK_THROWS(rank_auroc({0.1}, {0}));
}

TEST_CASE("rank auroc is invariant under monotone score transforms") {
  Rng rng(33);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    s.push_back(rng.normal());
    y.push_back(rng.randint(2));
  }
  if (std::count(y.begin(), y.end(), 1) == 0) y[0] = 1;
  if (std::count(y.begin(), y.end(), 0) == 0) y[1] = 0;
  std::vector<double> t;
  for (double v : s) t.push_back(std::exp(3.0 * v) + 7.0);
  CHECK(rank_auroc(s, y) == doctest::Approx(rank_auroc(t, y)).epsilon(1e-12));
}

TEST_CASE("random scores sit near chance") {
  Rng rng(34);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 2000; ++i) {
    s.push_back(rng.normal());
    y.push_back(i % 2);
  }
  CHECK(std::fabs(rank_auroc(s, y) - 0.5) < 0.05);
}

TEST_CASE("spearman rho endpoints and ties") {
  CHECK(spearman_rho({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman_rho({1, 2, 3, 4}, {5, 4, 3, 2}) == doctest::Approx(-1.0));
  // monotone but nonlinear still rank-perfect
  CHECK(spearman_rho({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0));
  const double tied = spearman_rho({1, 2, 3, 4}, {1, 2, 2, 3});
  CHECK(tied > 0.9);
  CHECK(tied < 1.0);
  CHECK(std::fabs(spearman_rho({1, 2, 3, 4, 5, 6}, {3, 1, 4, 1, 5, 2})) < 0.6);
}

TEST_CASE("demographic parity gap hand cases") {
  // group 0 rate 1.0, group 1 rate 0.0
  CHECK(dp_gap({1, 1, 0, 0}, {0, 0, 1, 1}) == 1.0);
  CHECK(dp_gap({1, 0, 1, 0}, {0, 0, 1, 1}) == 0.0);
  // rates 0.75 vs 0.25
  CHECK(dp_gap({1, 1, 1, 0, 1, 0, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1}) == doctest::Approx(0.5));
  CHECK_THROWS(dp_gap({1, 0}, {0, 0}));
}

TEST_CASE("accuracy") {
  CHECK(accuracy({1, 0, 1, 0}, {1, 0, 1, 0}) == 1.0);
  CHECK(accuracy({1, 0, 1, 0}, {0, 1, 0, 1}) == 0.0);
  CHECK(accuracy({1, 0, 1, 0}, {1, 0, 0, 1}) == 0.5);
}

TEST_CASE("nll under prior matches the density by hand") {
  AnalyticPrior p = AnalyticPrior::standard_normal(2);
  Tensor z(2, 2);
  z.at(1, 0) = 1.0;
  z.at(1, 1) = -1.0;
  const double log2pi = std::log(2.0 * M_PI);
  const double expect = 0.5 * ((log2pi) + (log2pi + 1.0));
  CHECK(nll_under_prior(z, p) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("kernel separation scores separable blobs high") {
  auto [x, y] = blobs(60, 4.0, 41);
  AurocOptions opts;
  opts.seed = 1;
  AurocReport r = auroc_separation(x, y, opts);
  CHECK(r.auroc >= 0.99);
  CHECK(r.fold_scores.size() == 5);
}

TEST_CASE("kernel separation handles non-linear class structure") {
  auto [x, y] = circles(60, 42);
  AurocReport r = auroc_separation(x, y);
  CHECK(r.auroc >= 0.99);
}

TEST_CASE("kernel separation collapses to chance on permuted labels") {
  auto [x, y] = blobs(60, 4.0, 43);
  Rng rng(44);
  std::vector<int> perm_idx = rng.permutation(static_cast<int>(y.size()));
  std::vector<int> yp;
  for (int i : perm_idx) yp.push_back(y[i]);
  AurocReport r = auroc_separation(x, yp);
  CHECK(r.auroc < 0.65);
  CHECK(r.auroc > 0.35);
}

TEST_CASE("subsample cap keeps the grid search bounded") {
  auto [x, y] = blobs(400, 4.0, 45);
  AurocOptions opts;
  opts.max_samples = 100;
  opts.c_grid = {1.0};
  opts.gamma_grid = {0.1};
  AurocReport r = auroc_separation(x, y, opts);
  CHECK(r.auroc >= 0.95);
}

TEST_CASE("knn oracle agrees with the kernel score on easy data") {
  auto [x, y] = blobs(50, 4.0, 46);
  CHECK(knn_auroc(x, y) >= 0.99);
  auto [cx, cy] = circles(50, 47);
  CHECK(knn_auroc(cx, cy) >= 0.99);
}

TEST_CASE("classifier probe learns separable blobs") {
  auto [x, y] = blobs(80, 4.0, 48);
  ClassifierConfig cfg;
  cfg.steps = 600;
  cfg.hidden = 16;
  cfg.seed = 5;
  TrainedClassifier clf = train_mlp_classifier(x, y, cfg);
  CHECK(accuracy(clf.predict(x), y) >= 0.95);
  std::vector<double> dec = clf.decision_values(x);
  CHECK(rank_auroc(dec, y) >= 0.99);
  // predictions are the sign of the decision values
  std::vector<int> pred = clf.predict(x);
  for (size_t i = 0; i < pred.size(); ++i) CHECK(pred[i] == (dec[i] > 0 ? 1 : 0));
}
