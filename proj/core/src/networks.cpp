#include "dmatch/networks.hpp"

#include <cmath>
#include <stdexcept>

namespace dmatch {

BatchNormState make_batchnorm_state(int dim) {
  BatchNormState s;
  s.running_mean = Tensor(1, dim);
  s.running_var = Tensor::full(1, dim, 1.0);
  return s;
}

Var batchnorm_no_affine(Var x, BnMode mode, const BatchNormState* state) {
  Tape& t = *x.tape();
  if (mode == BnMode::train) {
    if (x.value().rows() < 2)
      throw std::invalid_argument("batchnorm_no_affine: train mode needs batch >= 2");
    Var mu = mean(x, 0);                       // 1 x d
    Var centered = sub(x, mu);
    Var var = mean(square(centered), 0);       // biased batch variance
    Var denom = sqrt(add(var, t.constant(Tensor::scalar(kBatchNormEps))));
    return div(centered, denom);
  }
  if (state == nullptr) throw std::invalid_argument("batchnorm_no_affine: eval mode needs state");
  Var rm = t.constant(state->running_mean);
  Var rv = t.constant(state->running_var);
  Var denom = sqrt(add(rv, t.constant(Tensor::scalar(kBatchNormEps))));
  return div(sub(x, rm), denom);
}

void batchnorm_update_running(const Tensor& batch, BatchNormState& state, double momentum) {
  if (batch.rows() < 2) throw std::invalid_argument("batchnorm_update_running: batch < 2");
  if (batch.cols() != state.running_mean.cols())
    throw std::invalid_argument("batchnorm_update_running: dim mismatch");
  const int n = batch.rows(), d = batch.cols();
  for (int j = 0; j < d; ++j) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += batch.at(i, j);
    m /= n;
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      const double c = batch.at(i, j) - m;
      v += c * c;
    }
    v /= n;
    state.running_mean.at(0, j) = (1.0 - momentum) * state.running_mean.at(0, j) + momentum * m;
    state.running_var.at(0, j) = (1.0 - momentum) * state.running_var.at(0, j) + momentum * v;
  }
}

// ---- encoder ----

GaussianEncoder::GaussianEncoder(int domains, MlpSpec per_domain_spec, int latent_dim,
                                 bool use_batchnorm, Rng& rng)
    : latent_dim_(latent_dim), use_batchnorm_(use_batchnorm) {
  if (domains < 1) throw std::invalid_argument("GaussianEncoder: domains must be >= 1");
  if (per_domain_spec.widths.back() != 2 * latent_dim)
    throw std::invalid_argument("GaussianEncoder: output width must be 2 * latent_dim");
  for (int d = 0; d < domains; ++d) {
    Rng sub = rng.fork(hash_mix(0x656e63, d));
    mlps_.emplace_back(per_domain_spec, sub);
    bn_.push_back(make_batchnorm_state(latent_dim));
  }
}

std::vector<Tensor*> GaussianEncoder::parameters() {
  std::vector<Tensor*> out;
  for (auto& m : mlps_)
    for (Tensor* p : m.parameters()) out.push_back(p);
  return out;
}

std::vector<std::string> GaussianEncoder::parameter_names() const {
  std::vector<std::string> out;
  for (int d = 0; d < domains(); ++d)
    for (const auto& n : mlps_[d].parameter_names("enc" + std::to_string(d))) out.push_back(n);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> GaussianEncoder::state_tensors() {
  std::vector<std::pair<std::string, Tensor*>> out;
  if (!use_batchnorm_) return out;
  for (int d = 0; d < domains(); ++d) {
    out.emplace_back("enc" + std::to_string(d) + ".bn_mean", &bn_[d].running_mean);
    out.emplace_back("enc" + std::to_string(d) + ".bn_var", &bn_[d].running_var);
  }
  return out;
}

BoundEncoder GaussianEncoder::bind(Tape& tape, bool trainable) const {
  BoundEncoder b;
  b.owner_ = this;
  for (const auto& m : mlps_) {
    b.bound_.push_back(m.bind(tape, trainable));
    for (const Var& v : b.bound_.back().param_vars()) b.all_params_.push_back(v);
  }
  return b;
}

EncoderOutput BoundEncoder::encode(Var x, int domain, BnMode mode) const {
  if (owner_ == nullptr) throw std::logic_error("BoundEncoder: unbound");
  if (domain < 0 || domain >= owner_->domains())
    throw std::invalid_argument("BoundEncoder::encode: bad domain " + std::to_string(domain));
  const int L = owner_->latent_dim_;
  Var out = bound_[domain].forward(x);
  EncoderOutput eo;
  eo.raw_mu = slice_cols(out, 0, L);
  eo.logvar = clamp(slice_cols(out, L, L), -kLogvarClamp, kLogvarClamp);
  if (owner_->use_batchnorm_)
    eo.mu = batchnorm_no_affine(eo.raw_mu, mode, &owner_->bn_[domain]);
  else
    eo.mu = eo.raw_mu;
  return eo;
}

void GaussianEncoder::update_batchnorm(int domain, const Tensor& raw_mu_batch, double momentum) {
  if (!use_batchnorm_) return;
  batchnorm_update_running(raw_mu_batch, bn_.at(domain), momentum);
}

std::pair<Tensor, Tensor> GaussianEncoder::encode_value(const Tensor& x, int domain) const {
  Tape scratch;
  BoundEncoder b = bind(scratch, false);
  EncoderOutput eo = b.encode(scratch.constant(x), domain, BnMode::eval);
  return {eo.mu.value(), eo.logvar.value()};
}

// ---- decoder ----

GaussianDecoder::GaussianDecoder(int domains, MlpSpec per_domain_spec, Rng& rng) {
  if (domains < 1) throw std::invalid_argument("GaussianDecoder: domains must be >= 1");
  for (int d = 0; d < domains; ++d) {
    Rng sub = rng.fork(hash_mix(0x646563, d));
    mlps_.emplace_back(per_domain_spec, sub);
  }
}

std::vector<Tensor*> GaussianDecoder::parameters() {
  std::vector<Tensor*> out;
  for (auto& m : mlps_)
    for (Tensor* p : m.parameters()) out.push_back(p);
  return out;
}

std::vector<std::string> GaussianDecoder::parameter_names() const {
  std::vector<std::string> out;
  for (int d = 0; d < domains(); ++d)
    for (const auto& n : mlps_[d].parameter_names("dec" + std::to_string(d))) out.push_back(n);
  return out;
}

BoundDecoder GaussianDecoder::bind(Tape& tape, bool trainable) const {
  BoundDecoder b;
  for (const auto& m : mlps_) {
    b.bound_.push_back(m.bind(tape, trainable));
    for (const Var& v : b.bound_.back().param_vars()) b.all_params_.push_back(v);
  }
  return b;
}

Var BoundDecoder::decode(Var z, int domain) const {
  if (domain < 0 || domain >= static_cast<int>(bound_.size()))
    throw std::invalid_argument("BoundDecoder::decode: bad domain " + std::to_string(domain));
  return bound_[domain].forward(z);
}

Tensor GaussianDecoder::decode_value(const Tensor& z, int domain) const {
  return mlps_.at(domain).forward_value(z);
}

// ---- score network ----

ScoreNet::ScoreNet(int latent_dim, MlpSpec spec, double sigma_min, double sigma_max, Rng& rng)
    : latent_dim_(latent_dim), sigma_min_(sigma_min), sigma_max_(sigma_max) {
  if (spec.widths.front() != latent_dim + 1)
    throw std::invalid_argument("ScoreNet: input width must be latent_dim + 1 (log sigma feature)");
  if (spec.widths.back() != latent_dim)
    throw std::invalid_argument("ScoreNet: output width must be latent_dim");
  if (!(sigma_min > 0) || !(sigma_max >= sigma_min))
    throw std::invalid_argument("ScoreNet: need 0 < sigma_min <= sigma_max");
  Rng sub = rng.fork(0x73636f7265);
  mlp_ = Mlp(spec, sub);
}

void ScoreNet::check_sigma(double sigma) const {
  if (sigma < sigma_min_ * (1.0 - 1e-9) || sigma > sigma_max_ * (1.0 + 1e-9))
    throw std::invalid_argument("ScoreNet: sigma " + std::to_string(sigma) +
                                " outside trained range [" + std::to_string(sigma_min_) + ", " +
                                std::to_string(sigma_max_) + "]");
}

std::vector<Tensor*> ScoreNet::parameters() { return mlp_.parameters(); }

std::vector<std::string> ScoreNet::parameter_names() const {
  return mlp_.parameter_names("score");
}

BoundScoreNet ScoreNet::bind(Tape& tape, bool trainable) const {
  BoundScoreNet b;
  b.owner_ = this;
  b.bound_ = mlp_.bind(tape, trainable);
  return b;
}

Var BoundScoreNet::score(Var z_tilde, const std::vector<double>& sigma_per_row) const {
  if (owner_ == nullptr) throw std::logic_error("BoundScoreNet: unbound");
  const Tensor& zv = z_tilde.value();
  if (static_cast<int>(sigma_per_row.size()) != zv.rows())
    throw std::invalid_argument("BoundScoreNet::score: sigma count != batch rows");
  Tensor logsig(zv.rows(), 1);
  for (int i = 0; i < zv.rows(); ++i) {
    owner_->check_sigma(sigma_per_row[i]);
    logsig.at(i, 0) = std::log(sigma_per_row[i]);
  }
  Tape& t = *z_tilde.tape();
  Var input = concat_cols(z_tilde, t.constant(logsig));
  return bound_.forward(input);
}

Var BoundScoreNet::score(Var z_tilde, double sigma) const {
  return score(z_tilde, std::vector<double>(z_tilde.value().rows(), sigma));
}

Tensor ScoreNet::score_value(const Tensor& z, double sigma) const {
  Tape scratch;
  BoundScoreNet b = bind(scratch, false);
  return b.score(scratch.constant(z), sigma).value();
}

}  // namespace dmatch
