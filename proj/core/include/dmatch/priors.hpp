#pragma once

#include <functional>
#include <vector>

#include "dmatch/autodiff.hpp"
#include "dmatch/rng.hpp"

namespace dmatch {

// Tape-free score provider: rows of z -> rows of grad_z log density.
using ScoreFn = std::function<Tensor(const Tensor& z, double sigma)>;

// Diagonal Gaussian or mixture of diagonal Gaussians over the latent space.
// Provides both a plain-tensor path (metrics, score providers) and a tape
// path (direct cross-entropy terms that need gradients through z).
class AnalyticPrior {
 public:
  static AnalyticPrior gaussian(Tensor mean, Tensor var);
  static AnalyticPrior standard_normal(int dim);
  static AnalyticPrior mixture(std::vector<double> weights, std::vector<Tensor> means,
                               std::vector<Tensor> vars);

  int dim() const { return dim_; }
  int components() const { return static_cast<int>(weights_.size()); }
  bool is_mixture() const { return components() > 1; }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Tensor>& means() const { return means_; }
  const std::vector<Tensor>& vars() const { return vars_; }

  // log p(z) per row: B x 1.
  Tensor log_density(const Tensor& z) const;
  // grad_z log p(z) per row: B x D. Mixtures use responsibility-weighted
  // component scores computed with a log-sum-exp shift.
  Tensor score(const Tensor& z) const;
  // Same log density as a differentiable graph over z.
  Var log_density_on(Tape& tape, Var z) const;

  Tensor sample(int n, Rng& rng) const;

  // Overall first/second moments (mixtures: component-weighted).
  Tensor moment_mean() const;
  Tensor moment_var() const;

  ScoreFn score_provider() const;  // ignores sigma; exact clean score

 private:
  AnalyticPrior() = default;
  int dim_ = 0;
  std::vector<double> weights_;
  std::vector<Tensor> means_;
  std::vector<Tensor> vars_;
};

class BoundLearnablePrior;

// Gaussian or mixture prior whose parameters train jointly with the
// encoder/decoder (variances through log, mixture weights through logits).
class LearnableAnalyticPrior {
 public:
  LearnableAnalyticPrior() = default;
  static LearnableAnalyticPrior gaussian(int dim);
  static LearnableAnalyticPrior mixture(int k, int dim, double mean_spread, Rng& rng);

  int dim() const { return dim_; }
  int components() const { return k_; }
  std::vector<Tensor*> parameters();
  std::vector<std::string> parameter_names() const;

  // Binds each parameter as one tape leaf so repeated log_density calls on the
  // same tape accumulate into the same gradients.
  BoundLearnablePrior bind(Tape& tape, bool trainable) const;
  Var log_density_on(Tape& tape, Var z, bool trainable) const;
  AnalyticPrior snapshot() const;

 private:
  friend class BoundLearnablePrior;
  int dim_ = 0;
  int k_ = 0;
  std::vector<Tensor> means_;     // per component, 1 x dim
  std::vector<Tensor> log_vars_;  // per component, 1 x dim
  Tensor weight_logits_;          // 1 x k
};

class BoundLearnablePrior {
 public:
  BoundLearnablePrior(Tape& tape, const LearnableAnalyticPrior& prior, bool trainable);

  // log p(z) per row: B x 1.
  Var log_density(Var z) const;
  // Leaves in parameters() order: mean0, logvar0, ..., logits.
  const std::vector<Var>& param_vars() const { return param_vars_; }

 private:
  Tape* tape_ = nullptr;
  int dim_ = 0;
  int k_ = 0;
  std::vector<Var> means_;
  std::vector<Var> log_vars_;
  Var logits_;
  std::vector<Var> param_vars_;
};

// Exponential moving first/second moments of encoder outputs; the fallback
// Gaussian for out-of-range blending.
struct RunningMoments {
  Tensor mean;  // 1 x d
  Tensor var;   // 1 x d
  bool initialized = false;

  void reset(Tensor mean_init, Tensor var_init);
  void update(const Tensor& batch, double momentum);
};

// Score provider backed by a trained network, made safe away from the train
// distribution: sigma is clamped into the trained range and the network score
// is mixed with a Gaussian score built from running moments,
//   (1 - alpha) * S_psi(z, clamped sigma) + alpha * (-(z - mean) / (var + sigma^2)).
class BlendedScorePrior {
 public:
  BlendedScorePrior() = default;
  BlendedScorePrior(ScoreFn network, int dim, double alpha, double sigma_min, double sigma_max);

  double alpha() const { return alpha_; }
  const RunningMoments& fallback() const { return moments_; }
  void set_fallback(Tensor mean, Tensor var);
  void update_fallback(const Tensor& z_batch, double momentum = 0.1);

  Tensor blended_score(const Tensor& z, double sigma) const;
  ScoreFn provider() const;

 private:
  ScoreFn network_;
  RunningMoments moments_;
  double alpha_ = 0.05;
  double sigma_min_ = 0.0, sigma_max_ = 0.0;
};

}  // namespace dmatch
