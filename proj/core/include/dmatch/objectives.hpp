#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "dmatch/networks.hpp"
#include "dmatch/priors.hpp"
#include "dmatch/rng.hpp"
#include "dmatch/schedule.hpp"

namespace dmatch {

struct LossConfig {
  // Composition weight: total = (1/beta) * reconstruction - entropy + cross-entropy.
  double beta = 1.0;  // (0, 1]
  double lambda_gw = 0.0;
  double sigma_dec2 = 0.1;  // fixed decoder observation variance
  bool sfs_noise = true;    // evaluate the score at z + sigma0 * eps0 instead of z
  int lsgm_draws = 1;

  void validate() const;
};

// Scalar values of the bound terms for one domain batch. reconstruction,
// entropy and cross_entropy are E[-log p(x|z,d)], E[-log q(z|x,d)] and
// E[-log Q(z)] respectively; total composes them with the beta weighting.
struct VaubTerms {
  double reconstruction = 0.0;
  double entropy = 0.0;
  double cross_entropy = 0.0;
  double total = 0.0;
};

struct DomainLoss {
  Var total;  // scalar
  VaubTerms terms;
  Var z;       // B x L reparameterized latents
  Var mu;      // posterior mean (post batch-norm)
  Var logvar;  // clamped log variance
  Var raw_mu;  // pre-batch-norm mean, for running-stat updates
};

// Differentiable log prior density per row (B x 1) over latents.
using LogPriorFn = std::function<Var(Var z)>;

// Score of the score model for a perturbed input, differentiable w.r.t. its
// parameters and/or its input depending on how the model was bound.
using ScoreVarFn = std::function<Var(Var z_tilde, const std::vector<double>& sigma_per_row)>;

// One domain term of the variational alignment bound:
//   (1/beta) E[-log p(x|z,d)] - E[-log q(z|x,d)] + E[-log Q(z)].
DomainLoss vaub_loss(Tape& tape, const BoundEncoder& enc, const BoundDecoder& dec,
                     const LogPriorFn& log_prior, const Tensor& x, int domain, const Tensor& eps,
                     const LossConfig& cfg, BnMode mode);

// Score-function substitution surrogate for the cross-entropy term:
//   mean_b -< stop_grad(score(z* )), z_b >,  z* = stop_grad(z) + sigma0 * eps0.
// The score is evaluated outside the tape, so no score-model ancestor can
// receive adjoints; gradients w.r.t. encoder parameters match the direct
// cross-entropy term exactly (pathwise, at matched draws).
Var sfs_cross_entropy_surrogate(Tape& tape, Var z, const ScoreFn& score, double sigma0,
                                const Tensor* eps0);

// Same bound with the cross-entropy term replaced by the surrogate. No
// gradient reaches the score model by construction.
DomainLoss saub_loss(Tape& tape, const BoundEncoder& enc, const BoundDecoder& dec,
                     const ScoreFn& score, double sigma0, const Tensor* eps0, const Tensor& x,
                     int domain, const Tensor& eps, const LossConfig& cfg, BnMode mode);

// Noise draw for one denoising-score-matching batch: one level and one eps row
// per batch element.
struct DsmNoise {
  std::vector<double> sigma;
  Tensor eps;  // B x L
};
DsmNoise sample_dsm_noise(const NoiseSchedule& schedule, int batch, int latent_dim, Rng& rng);

// mean_b 1/2 || S(z + sigma_b eps_b, sigma_b) - (-eps_b / sigma_b) ||^2.
// z enters detached; only the score path carries gradient.
Var dsm_loss(Tape& tape, const ScoreVarFn& score, const Tensor& z, const DsmNoise& noise);

// Monte-Carlo draws for the diffusion-weighted cross-entropy: per draw one
// continuous t (shared across the batch) and a fresh eps matrix.
struct LsgmNoise {
  std::vector<double> t;
  std::vector<Tensor> eps;
};
LsgmNoise sample_lsgm_noise(const NoiseSchedule& schedule, int batch, int latent_dim, int draws,
                            Rng& rng);

// mean over draws of g(t)^2/2 * mean_b || eps/sigma_t - S(z + sigma_t eps, sigma_t) ||^2.
// Differentiable through the score input path; this is the gradient route whose
// small-sigma Jacobian amplification the stability experiments probe.
Var lsgm_cross_entropy(Tape& tape, const ScoreVarFn& score, Var z, const NoiseSchedule& schedule,
                       const LsgmNoise& noise);

// The bound with the cross-entropy term replaced by the diffusion-weighted
// estimate above; encoder gradients flow through the score input path.
DomainLoss lsgm_domain_loss(Tape& tape, const BoundEncoder& enc, const BoundDecoder& dec,
                            const ScoreVarFn& score, const NoiseSchedule& schedule,
                            const LsgmNoise& noise, const Tensor& x, int domain, const Tensor& eps,
                            const LossConfig& cfg, BnMode mode);

// Pairwise Euclidean distances with a tiny ridge inside the sqrt; diagonal 0.
Tensor pairwise_distances(const Tensor& rows);

// Distance-distortion cost over all distinct ordered pairs:
//   mean_{i != j} (dist_x(i,j) - ||z_i - z_j||)^2.
// Implemented as one custom node with an explicit adjoint so the forward value
// is exactly the double-loop sum.
Var gw_cost(Var z, const Tensor& dist_x);
Var gw_cost_sampled(Var z, const Tensor& dist_x, const std::vector<std::pair<int, int>>& pairs);

// dm_total + lambda_gw * gw
Var total_loss(Var dm_total, Var gw, const LossConfig& cfg);

inline constexpr double kPairDistanceRidge = 1e-12;

}  // namespace dmatch
