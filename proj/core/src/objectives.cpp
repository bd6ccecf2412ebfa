#include "dmatch/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace dmatch {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct EncodedBatch {
  Var recon;    // scalar E[-log p(x|z,d)]
  Var entropy;  // scalar E[-log q(z|x,d)]
  Var z, mu, logvar, raw_mu;
};

// Shared encode/reparameterize/decode plumbing for both bound variants.
EncodedBatch encode_decode(Tape& tape, const BoundEncoder& enc, const BoundDecoder& dec,
                           const Tensor& x, int domain, const Tensor& eps, const LossConfig& cfg,
                           BnMode mode) {
  EncodedBatch out;
  Var xin = tape.constant(x);
  EncoderOutput eo = enc.encode(xin, domain, mode);
  out.mu = eo.mu;
  out.logvar = eo.logvar;
  out.raw_mu = eo.raw_mu;
  out.z = reparameterized_sample(eo.mu, eo.logvar, eps);

  Var xhat = dec.decode(out.z, domain);
  Var resid = sub(xin, xhat);
  Var quad = scale(sum(square(resid), 1), 1.0 / cfg.sigma_dec2);  // B x 1
  const double log_norm = x.cols() * (kLog2Pi + std::log(cfg.sigma_dec2));
  out.recon = scale(mean(quad + log_norm), 0.5);

  // -log q(z|x) at the sampled z: 0.5 sum_j [logvar + (z - mu)^2 / var + log 2 pi]
  Var diff = sub(out.z, eo.mu);
  Var q_quad = div(square(diff), exp(eo.logvar));
  Var q_terms = add(add(q_quad, eo.logvar), tape.constant(Tensor::scalar(kLog2Pi)));
  out.entropy = scale(mean(sum(q_terms, 1)), 0.5);
  return out;
}

DomainLoss compose(Tape& tape, EncodedBatch&& eb, Var cross_entropy, const LossConfig& cfg) {
  DomainLoss out;
  out.z = eb.z;
  out.mu = eb.mu;
  out.logvar = eb.logvar;
  out.raw_mu = eb.raw_mu;
  out.total = add(sub(scale(eb.recon, 1.0 / cfg.beta), eb.entropy), cross_entropy);
  out.terms.reconstruction = eb.recon.value().scalar_value();
  out.terms.entropy = eb.entropy.value().scalar_value();
  out.terms.cross_entropy = cross_entropy.value().scalar_value();
  out.terms.total = out.total.value().scalar_value();
  (void)tape;
  return out;
}

}  // namespace

void LossConfig::validate() const {
  if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("LossConfig: beta must be in (0, 1]");
  if (!(lambda_gw >= 0.0)) throw std::invalid_argument("LossConfig: lambda_gw must be >= 0");
  if (!(sigma_dec2 > 0.0)) throw std::invalid_argument("LossConfig: sigma_dec2 must be positive");
  if (lsgm_draws < 1) throw std::invalid_argument("LossConfig: lsgm_draws must be >= 1");
}

DomainLoss vaub_loss(Tape& tape, const BoundEncoder& enc, const BoundDecoder& dec,
                     const LogPriorFn& log_prior, const Tensor& x, int domain, const Tensor& eps,
                     const LossConfig& cfg, BnMode mode) {
  cfg.validate();
  EncodedBatch eb = encode_decode(tape, enc, dec, x, domain, eps, cfg, mode);
  Var xent = neg(mean(log_prior(eb.z)));
  return compose(tape, std::move(eb), xent, cfg);
}

Var sfs_cross_entropy_surrogate(Tape& tape, Var z, const ScoreFn& score, double sigma0,
                                const Tensor* eps0) {
  if (sigma0 < 0.0) throw std::invalid_argument("sfs_cross_entropy_surrogate: sigma0 must be >= 0");
  Tensor z_star = z.value();
  if (sigma0 > 0.0 && eps0 != nullptr) {
    if (!eps0->same_shape(z_star))
      throw std::invalid_argument("sfs_cross_entropy_surrogate: eps0 shape mismatch");
    for (int i = 0; i < z_star.size(); ++i) z_star.data()[i] += sigma0 * eps0->data()[i];
  }
  Tensor s = score(z_star, sigma0);
  if (!s.same_shape(z.value()))
    throw std::invalid_argument("sfs_cross_entropy_surrogate: score shape mismatch");
  Var s_const = tape.constant(std::move(s));
  return neg(mean(sum(mul(s_const, z), 1)));
}

DomainLoss saub_loss(Tape& tape, const BoundEncoder& enc, const BoundDecoder& dec,
                     const ScoreFn& score, double sigma0, const Tensor* eps0, const Tensor& x,
                     int domain, const Tensor& eps, const LossConfig& cfg, BnMode mode) {
  cfg.validate();
  EncodedBatch eb = encode_decode(tape, enc, dec, x, domain, eps, cfg, mode);
  Var surrogate = sfs_cross_entropy_surrogate(tape, eb.z, score, sigma0, eps0);
  return compose(tape, std::move(eb), surrogate, cfg);
}

DomainLoss lsgm_domain_loss(Tape& tape, const BoundEncoder& enc, const BoundDecoder& dec,
                            const ScoreVarFn& score, const NoiseSchedule& schedule,
                            const LsgmNoise& noise, const Tensor& x, int domain, const Tensor& eps,
                            const LossConfig& cfg, BnMode mode) {
  cfg.validate();
  EncodedBatch eb = encode_decode(tape, enc, dec, x, domain, eps, cfg, mode);
  Var xent = lsgm_cross_entropy(tape, score, eb.z, schedule, noise);
  return compose(tape, std::move(eb), xent, cfg);
}

DsmNoise sample_dsm_noise(const NoiseSchedule& schedule, int batch, int latent_dim, Rng& rng) {
  schedule.validate();
  DsmNoise noise;
  noise.sigma.resize(batch);
  for (int i = 0; i < batch; ++i) noise.sigma[i] = schedule.level(rng.randint(schedule.levels));
  noise.eps = rng.normal_tensor(batch, latent_dim);
  return noise;
}

Var dsm_loss(Tape& tape, const ScoreVarFn& score, const Tensor& z, const DsmNoise& noise) {
  const int b = z.rows(), d = z.cols();
  if (static_cast<int>(noise.sigma.size()) != b || noise.eps.rows() != b || noise.eps.cols() != d)
    throw std::invalid_argument("dsm_loss: noise draw shape mismatch");
  Tensor z_tilde(b, d), target(b, d);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < d; ++j) {
      z_tilde.at(i, j) = z.at(i, j) + noise.sigma[i] * noise.eps.at(i, j);
      target.at(i, j) = -noise.eps.at(i, j) / noise.sigma[i];
    }
  Var s = score(tape.constant(z_tilde), noise.sigma);
  Var diff = sub(s, tape.constant(target));
  return scale(mean(sum(square(diff), 1)), 0.5);
}

LsgmNoise sample_lsgm_noise(const NoiseSchedule& schedule, int batch, int latent_dim, int draws,
                            Rng& rng) {
  schedule.validate();
  LsgmNoise noise;
  for (int k = 0; k < draws; ++k) {
    noise.t.push_back(rng.uniform());
    noise.eps.push_back(rng.normal_tensor(batch, latent_dim));
  }
  return noise;
}

Var lsgm_cross_entropy(Tape& tape, const ScoreVarFn& score, Var z, const NoiseSchedule& schedule,
                       const LsgmNoise& noise) {
  if (noise.t.empty()) throw std::invalid_argument("lsgm_cross_entropy: no draws");
  const int b = z.value().rows();
  Var acc;
  for (size_t k = 0; k < noise.t.size(); ++k) {
    const double sigma = schedule.sigma_at(noise.t[k]);
    const Tensor& eps = noise.eps[k];
    if (eps.rows() != b || eps.cols() != z.value().cols())
      throw std::invalid_argument("lsgm_cross_entropy: eps shape mismatch");
    Tensor shift(b, z.value().cols());
    Tensor target(b, z.value().cols());
    for (int i = 0; i < shift.size(); ++i) {
      shift.data()[i] = sigma * eps.data()[i];
      target.data()[i] = eps.data()[i] / sigma;
    }
    Var z_tilde = add(z, tape.constant(shift));
    Var s = score(z_tilde, std::vector<double>(b, sigma));
    Var diff = sub(tape.constant(target), s);
    Var per_batch = mean(sum(square(diff), 1));
    Var weighted = scale(per_batch, 0.5 * schedule.g_squared(noise.t[k]));
    acc = acc.valid() ? add(acc, weighted) : weighted;
  }
  return scale(acc, 1.0 / static_cast<double>(noise.t.size()));
}

Tensor pairwise_distances(const Tensor& rows) {
  const int b = rows.rows(), d = rows.cols();
  Tensor out(b, b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      if (i == j) continue;
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = rows.at(i, k) - rows.at(j, k);
        s += diff * diff;
      }
      out.at(i, j) = std::sqrt(s + kPairDistanceRidge);
    }
  return out;
}

namespace {

Var gw_cost_impl(Var z, const Tensor& dist_x, std::vector<std::pair<int, int>> pairs) {
  const Tensor& zv = z.value();
  const int b = zv.rows(), d = zv.cols();
  if (dist_x.rows() != b || dist_x.cols() != b)
    throw std::invalid_argument("gw_cost: dist_x must be " + std::to_string(b) + " square");
  if (pairs.empty()) throw std::invalid_argument("gw_cost: batch too small for distinct pairs");

  double cost = 0.0;
  for (const auto& [i, j] : pairs) {
    if (i == j || i < 0 || j < 0 || i >= b || j >= b)
      throw std::invalid_argument("gw_cost: bad pair index");
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
      const double diff = zv.at(i, k) - zv.at(j, k);
      s += diff * diff;
    }
    const double dz = std::sqrt(s + kPairDistanceRidge);
    const double e = dist_x.at(i, j) - dz;
    cost += e * e;
  }
  cost /= static_cast<double>(pairs.size());
  if (!std::isfinite(cost)) throw NonFiniteError("gw_cost: non-finite result");

  Tape& tape = *z.tape();
  const int iz = z.node();
  Tensor dx_copy = dist_x;
  return tape.make_node(
      Tensor::scalar(cost), {iz},
      [iz, dx_copy = std::move(dx_copy), pairs = std::move(pairs)](Tape& tp, int self) {
        const double g = tp.grad_of(self).scalar_value();
        const Tensor& zcur = tp.value_of(iz);
        const int dim = zcur.cols();
        Tensor grad(zcur.rows(), dim);
        const double scale_term = 2.0 * g / static_cast<double>(pairs.size());
        for (const auto& [i, j] : pairs) {
          double s = 0.0;
          for (int k = 0; k < dim; ++k) {
            const double diff = zcur.at(i, k) - zcur.at(j, k);
            s += diff * diff;
          }
          const double dz = std::sqrt(s + kPairDistanceRidge);
          const double e = dx_copy.at(i, j) - dz;
          // d/dz_i of (dx - dz)^2 = -2 (dx - dz) (z_i - z_j) / dz, mirrored for z_j
          const double coef = -scale_term * e / dz;
          for (int k = 0; k < dim; ++k) {
            const double diff = zcur.at(i, k) - zcur.at(j, k);
            grad.at(i, k) += coef * diff;
            grad.at(j, k) -= coef * diff;
          }
        }
        tp.accum_grad(iz, grad);
      });
}

}  // namespace

Var gw_cost(Var z, const Tensor& dist_x) {
  const int b = z.value().rows();
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<size_t>(b) * (b - 1));
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      if (i != j) pairs.emplace_back(i, j);
  return gw_cost_impl(z, dist_x, std::move(pairs));
}

Var gw_cost_sampled(Var z, const Tensor& dist_x, const std::vector<std::pair<int, int>>& pairs) {
  return gw_cost_impl(z, dist_x, pairs);
}

Var total_loss(Var dm_total, Var gw, const LossConfig& cfg) {
  if (!gw.valid()) return dm_total;
  return add(dm_total, scale(gw, cfg.lambda_gw));
}

}  // namespace dmatch
