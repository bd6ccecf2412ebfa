#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dmatch/mlp.hpp"

namespace dmatch {

enum class BnMode { train, eval };

struct BatchNormState {
  Tensor running_mean;  // 1 x dim
  Tensor running_var;   // 1 x dim, starts at 1
};

BatchNormState make_batchnorm_state(int dim);

// Affine-free batch norm: (x - mean) / sqrt(var + 1e-5). Train mode uses the
// batch statistics (and needs batch >= 2); eval mode uses the running stats.
// Built from primitives, so its adjoint needs no special casing. Running-stat
// updates are a separate explicit call because the op itself must stay pure
// for gradient checking.
Var batchnorm_no_affine(Var x, BnMode mode, const BatchNormState* state);
void batchnorm_update_running(const Tensor& batch, BatchNormState& state, double momentum = 0.1);

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kLogvarClamp = 10.0;

class BoundEncoder;
class BoundDecoder;
class BoundScoreNet;

// Per-domain Gaussian posterior q(z|x,d): each domain owns an MLP whose output
// splits into (mu, logvar); logvar is clamped to [-10, 10]. Optional batch
// norm acts on the mu half only.
class GaussianEncoder {
 public:
  GaussianEncoder() = default;
  GaussianEncoder(int domains, MlpSpec per_domain_spec, int latent_dim, bool use_batchnorm,
                  Rng& rng);

  int domains() const { return static_cast<int>(mlps_.size()); }
  int latent_dim() const { return latent_dim_; }
  int input_dim() const { return mlps_.at(0).input_dim(); }
  bool batchnorm_enabled() const { return use_batchnorm_; }

  std::vector<Tensor*> parameters();
  std::vector<std::string> parameter_names() const;
  // Batch-norm running stats: model state that is saved but never trained.
  std::vector<std::pair<std::string, Tensor*>> state_tensors();

  BoundEncoder bind(Tape& tape, bool trainable = true) const;
  void update_batchnorm(int domain, const Tensor& raw_mu_batch, double momentum = 0.1);

  // Eval-mode posterior parameters without a surrounding tape.
  std::pair<Tensor, Tensor> encode_value(const Tensor& x, int domain) const;

 private:
  friend class BoundEncoder;
  std::vector<Mlp> mlps_;
  std::vector<BatchNormState> bn_;
  int latent_dim_ = 0;
  bool use_batchnorm_ = false;
};

struct EncoderOutput {
  Var mu;      // after batch norm when enabled
  Var logvar;  // clamped
  Var raw_mu;  // pre-batch-norm; feeds the running-stat update
};

class BoundEncoder {
 public:
  EncoderOutput encode(Var x, int domain, BnMode mode) const;
  const std::vector<Var>& param_vars() const { return all_params_; }

 private:
  friend class GaussianEncoder;
  const GaussianEncoder* owner_ = nullptr;
  std::vector<BoundMlp> bound_;
  std::vector<Var> all_params_;
};

// Per-domain decoder p(x|z,d) = N(x; net_d(z), sigma_dec^2 I) with a fixed
// observation variance supplied by the loss config.
class GaussianDecoder {
 public:
  GaussianDecoder() = default;
  GaussianDecoder(int domains, MlpSpec per_domain_spec, Rng& rng);

  int domains() const { return static_cast<int>(mlps_.size()); }
  int latent_dim() const { return mlps_.at(0).input_dim(); }
  int output_dim() const { return mlps_.at(0).output_dim(); }

  std::vector<Tensor*> parameters();
  std::vector<std::string> parameter_names() const;

  BoundDecoder bind(Tape& tape, bool trainable = true) const;
  Tensor decode_value(const Tensor& z, int domain) const;

 private:
  friend class BoundDecoder;
  std::vector<Mlp> mlps_;
};

class BoundDecoder {
 public:
  Var decode(Var z, int domain) const;
  const std::vector<Var>& param_vars() const { return all_params_; }

 private:
  friend class GaussianDecoder;
  std::vector<BoundMlp> bound_;
  std::vector<Var> all_params_;
};

// Noise-conditional score model S_psi(z, sigma): an MLP over (z, log sigma).
// Valid for sigma inside the schedule range it was built for; callers that
// need scores outside the range clamp first (see BlendedScorePrior).
class ScoreNet {
 public:
  ScoreNet() = default;
  ScoreNet(int latent_dim, MlpSpec spec /* input latent+1, output latent */, double sigma_min,
           double sigma_max, Rng& rng);

  int latent_dim() const { return latent_dim_; }
  double sigma_min() const { return sigma_min_; }
  double sigma_max() const { return sigma_max_; }

  std::vector<Tensor*> parameters();
  std::vector<std::string> parameter_names() const;

  BoundScoreNet bind(Tape& tape, bool trainable = true) const;
  Tensor score_value(const Tensor& z, double sigma) const;

  void check_sigma(double sigma) const;

 private:
  friend class BoundScoreNet;
  Mlp mlp_;
  int latent_dim_ = 0;
  double sigma_min_ = 0.0, sigma_max_ = 0.0;
};

class BoundScoreNet {
 public:
  // z_tilde differentiable; gradient flows through the input path (and into
  // the parameters when bound trainable).
  Var score(Var z_tilde, const std::vector<double>& sigma_per_row) const;
  Var score(Var z_tilde, double sigma) const;
  const std::vector<Var>& param_vars() const { return bound_.param_vars(); }

 private:
  friend class ScoreNet;
  const ScoreNet* owner_ = nullptr;
  BoundMlp bound_;
};

}  // namespace dmatch
