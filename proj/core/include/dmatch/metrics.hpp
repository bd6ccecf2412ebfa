#pragma once

#include <string>
#include <vector>

#include "dmatch/mlp.hpp"
#include "dmatch/priors.hpp"
#include "dmatch/tensor.hpp"

namespace dmatch {

// P(score_pos > score_neg) + 0.5 P(score_pos = score_neg), via tie-averaged
// ranks. Throws on single-class input.
double rank_auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct AurocOptions {
  std::vector<double> c_grid = {0.1, 1.0, 10.0, 100.0};
  std::vector<double> gamma_grid = {1.0, 0.1, 0.01, 0.001};
  int folds = 5;
  int max_samples = 600;  // stratified subsample cap before the CV grid search
  uint64_t seed = 0;
};

struct AurocReport {
  double auroc = 0.0;  // mean held-out AUROC of the best grid cell
  double best_c = 0.0;
  double best_gamma = 0.0;
  std::vector<double> fold_scores;  // per-fold AUROC of the best cell
};

// RBF-kernel ridge regression on +-1 targets over a (C, gamma) grid with
// stratified k-fold CV; decision values feed the rank AUROC. Regularization
// is 1/C so larger C means a looser fit, matching the usual C convention.
AurocReport auroc_separation(const Tensor& latents, const std::vector<int>& labels,
                             const AurocOptions& opts = {});

// Brute-force oracle: each point scored by the positive fraction among its k
// nearest other points, then rank AUROC. Independent of the kernel machinery.
double knn_auroc(const Tensor& latents, const std::vector<int>& labels, int k = 15);

// mean of -log_density over rows.
double nll_under_prior(const Tensor& latents, const AnalyticPrior& prior);

// |P(pred=1 | a=0) - P(pred=1 | a=1)|; throws when a group is empty.
double dp_gap(const std::vector<int>& predictions, const std::vector<int>& protected_attr);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

// Spearman rank correlation with tie-averaged ranks.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

struct ClassifierConfig {
  int hidden = 64;
  int layers = 3;
  int steps = 2000;
  int batch_size = 64;
  double lr = 1e-3;
  uint64_t seed = 0;
};

struct TrainedClassifier {
  Mlp net;
  std::vector<double> decision_values(const Tensor& x) const;
  std::vector<int> predict(const Tensor& x) const;  // 1 iff decision value > 0
};

// Downstream probe on frozen inputs: logistic loss softplus(-y_pm * f(x))
// with y_pm in {-1, +1}, Adam, seeded minibatches.
TrainedClassifier train_mlp_classifier(const Tensor& x, const std::vector<int>& y,
                                       const ClassifierConfig& cfg);

}  // namespace dmatch
