#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dmatch/adam.hpp"
#include "dmatch/checkpoint.hpp"
#include "dmatch/datasets.hpp"
#include "dmatch/networks.hpp"
#include "dmatch/objectives.hpp"
#include "dmatch/priors.hpp"
#include "dmatch/rng.hpp"
#include "dmatch/schedule.hpp"

namespace dmatch {

// Route for the encoder's cross-entropy gradient: score substitution outside
// the tape (sfs), diffusion-weighted score matching through the score input
// (lsgm), or the exact analytic prior density (analytic_vaub).
enum class EncoderGradMode { sfs, lsgm, analytic_vaub };
std::string to_string(EncoderGradMode mode);
EncoderGradMode encoder_grad_mode_from_string(const std::string& s);

struct TrainConfig {
  int steps = 1000;
  int batch_size = 128;
  double vae_lr = 1e-3;
  double score_lr = 1e-3;
  int score_loops = 5;  // score-model updates per VAE step
  AdamConfig adam;
  uint64_t seed = 0;
  LossConfig loss;
  NoiseSchedule schedule;
  EncoderGradMode mode = EncoderGradMode::sfs;
  double sfs_sigma0 = -1.0;    // score evaluation noise level; < 0 means schedule.sigma_min
  double blend_alpha = 0.05;   // network/Gaussian score mix for the sfs route
  double stat_momentum = 0.1;  // batch-norm and fallback-moment EMA momentum

  double sigma0() const { return sfs_sigma0 >= 0 ? sfs_sigma0 : schedule.sigma_min; }
  void validate() const;
};

struct TraceRow {
  int step = 0;
  double recon = std::numeric_limits<double>::quiet_NaN();
  double entropy = std::numeric_limits<double>::quiet_NaN();
  double xent = std::numeric_limits<double>::quiet_NaN();
  double dsm = std::numeric_limits<double>::quiet_NaN();
  double gw = std::numeric_limits<double>::quiet_NaN();
  double nll = std::numeric_limits<double>::quiet_NaN();
  double wall_ms = std::numeric_limits<double>::quiet_NaN();
};

// Append-only per-step record. A divergence (non-finite value anywhere in a
// step) truncates the trace at the offending step instead of propagating NaNs.
struct RunTrace {
  std::vector<TraceRow> rows;
  std::optional<int> diverged_step;
  std::string note;

  bool diverged() const { return diverged_step.has_value(); }
  // Max/final NLL with divergence folded in as +infinity, so diverged runs
  // compare as worse than any finite run.
  double max_nll() const;
  double final_nll() const;
};

// Networks plus whichever prior parameterization the run trains.
struct Model {
  GaussianEncoder encoder;
  GaussianDecoder decoder;
  std::optional<ScoreNet> score;               // sfs / lsgm runs
  std::optional<LearnableAnalyticPrior> prior; // analytic_vaub runs

  // Trainable parameters and persistent state (batch-norm running stats)
  // under stable names; feeds save/load_checkpoint.
  NamedTensorList named_entries();
  void restore(const NamedTensorList& entries);
};

struct ModelSpec {
  int domains = 1;
  int x_dim = 2;
  int latent_dim = 2;
  int hidden = 64;
  int enc_layers = 3;
  int dec_layers = 3;
  int score_layers = 3;
  Activation activation = Activation::softplus;
  bool batchnorm = false;
  double init_scale = 1.0;
  bool with_score = true;
  int prior_components = 0;  // 0 none, 1 learnable Gaussian, k>1 learnable mixture
  double prior_spread = 1.0;
};

Model build_model(const ModelSpec& spec, const NoiseSchedule& schedule, uint64_t seed);

struct TrainHooks {
  // Reference prior for the per-step NLL column; NaN when absent.
  const AnalyticPrior* nll_reference = nullptr;
  // Per-domain metric features for the distance-distortion term, row-aligned
  // with data.domains[d].x; defaults to the raw inputs.
  const std::vector<Tensor>* gw_features = nullptr;
};

// Alternating optimization: one joint encoder/decoder(/prior) step, then
// score_loops denoising-score-matching steps on the score model (sfs and lsgm
// runs only). Deterministic given config+seed; model updated in place.
RunTrace alternate_train(Model& model, const LabeledDomainDataset& data, const TrainConfig& cfg,
                         const TrainHooks& hooks = {});

struct StabilityOptions {
  EncoderGradMode mode = EncoderGradMode::sfs;  // sfs, lsgm, or analytic_vaub reference
  // Replaces the frozen network score for the sfs route (analytic ablation).
  ScoreFn score_override;
};

// Encoder/decoder training against a frozen score model and a fixed reference
// prior; the score model receives no updates in either mode. Records NLL of
// the sampled latents under the fixed prior every step.
RunTrace stability_run(Model& model, const ScoreNet& frozen_score, const AnalyticPrior& fixed_prior,
                       const LabeledDomainDataset& data, const TrainConfig& cfg,
                       const StabilityOptions& opts);

// Thrown when a loss exceeds the pretraining guard or an update goes
// non-finite in a context where divergence is fatal rather than data.
struct DivergenceError : std::runtime_error {
  int step;
  DivergenceError(int step_, const std::string& what) : std::runtime_error(what), step(step_) {}
};

inline constexpr double kPretrainLossGuard = 1e6;

struct PretrainResult {
  int steps = 0;
  double final_dsm = std::numeric_limits<double>::quiet_NaN();
};

// Denoising-score-matching pretraining against clean draws from `sampler`.
// Levels are sampled uniformly over the schedule per batch element.
PretrainResult pretrain_score(ScoreNet& net, const std::function<Tensor(int, Rng&)>& sampler,
                              const NoiseSchedule& schedule, int steps, int batch_size, double lr,
                              uint64_t seed);

// Eval-mode posterior means per domain, row-aligned with data.domains[d].
std::vector<Tensor> encode_dataset(const GaussianEncoder& encoder,
                                   const LabeledDomainDataset& data);

}  // namespace dmatch
