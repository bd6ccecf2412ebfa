#include "dmatch/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace dmatch {

std::string to_string(EncoderGradMode mode) {
  switch (mode) {
    case EncoderGradMode::sfs: return "sfs";
    case EncoderGradMode::lsgm: return "lsgm";
    case EncoderGradMode::analytic_vaub: return "analytic-vaub";
  }
  throw std::logic_error("to_string(EncoderGradMode): bad enum");
}

EncoderGradMode encoder_grad_mode_from_string(const std::string& s) {
  if (s == "sfs") return EncoderGradMode::sfs;
  if (s == "lsgm") return EncoderGradMode::lsgm;
  if (s == "analytic-vaub" || s == "analytic_vaub") return EncoderGradMode::analytic_vaub;
  throw std::invalid_argument("unknown encoder gradient mode '" + s + "'");
}

void TrainConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("TrainConfig: steps must be >= 0");
  if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
  // zero freezes that branch of the alternation; only negative is malformed
  if (vae_lr < 0 || score_lr < 0)
    throw std::invalid_argument("TrainConfig: learning rates must be >= 0");
  if (score_loops < 1) throw std::invalid_argument("TrainConfig: score_loops must be >= 1");
  if (blend_alpha < 0 || blend_alpha > 1)
    throw std::invalid_argument("TrainConfig: blend_alpha must lie in [0, 1]");
  if (!(stat_momentum > 0) || stat_momentum > 1)
    throw std::invalid_argument("TrainConfig: stat_momentum must lie in (0, 1]");
  loss.validate();
  schedule.validate();
}

namespace {

double max_or_inf(const std::vector<TraceRow>& rows, bool diverged) {
  if (diverged) return std::numeric_limits<double>::infinity();
  double m = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& r : rows) {
    if (!std::isfinite(r.nll)) return std::numeric_limits<double>::infinity();
    m = std::max(m, r.nll);
    any = true;
  }
  return any ? m : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double RunTrace::max_nll() const { return max_or_inf(rows, diverged()); }

double RunTrace::final_nll() const {
  if (diverged()) return std::numeric_limits<double>::infinity();
  if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
  return rows.back().nll;
}

NamedTensorList Model::named_entries() {
  NamedTensorList out;
  auto add = [&out](const std::vector<std::string>& names, const std::vector<Tensor*>& params) {
    for (size_t i = 0; i < names.size(); ++i) out.emplace_back(names[i], *params[i]);
  };
  add(encoder.parameter_names(), encoder.parameters());
  for (auto& [name, t] : encoder.state_tensors()) out.emplace_back(name, *t);
  add(decoder.parameter_names(), decoder.parameters());
  if (score) add(score->parameter_names(), score->parameters());
  if (prior) add(prior->parameter_names(), prior->parameters());
  return out;
}

void Model::restore(const NamedTensorList& entries) {
  std::vector<std::string> names;
  std::vector<Tensor*> dests;
  auto add = [&](const std::vector<std::string>& n, const std::vector<Tensor*>& p) {
    names.insert(names.end(), n.begin(), n.end());
    dests.insert(dests.end(), p.begin(), p.end());
  };
  add(encoder.parameter_names(), encoder.parameters());
  for (auto& [name, t] : encoder.state_tensors()) {
    names.push_back(name);
    dests.push_back(t);
  }
  add(decoder.parameter_names(), decoder.parameters());
  if (score) add(score->parameter_names(), score->parameters());
  if (prior) add(prior->parameter_names(), prior->parameters());
  assign_from_checkpoint(entries, names, dests);
}

Model build_model(const ModelSpec& spec, const NoiseSchedule& schedule, uint64_t seed) {
  if (spec.domains < 1 || spec.x_dim < 1 || spec.latent_dim < 1 || spec.hidden < 1)
    throw std::invalid_argument("build_model: dimensions must be positive");
  Rng root(seed);
  Model m;
  Rng enc_rng = root.fork(hash_mix(0x656e63, 0));
  m.encoder = GaussianEncoder(
      spec.domains,
      make_mlp_spec(spec.x_dim, spec.hidden, 2 * spec.latent_dim, spec.enc_layers,
                    spec.activation, spec.init_scale),
      spec.latent_dim, spec.batchnorm, enc_rng);
  Rng dec_rng = root.fork(hash_mix(0x646563, 0));
  m.decoder = GaussianDecoder(spec.domains,
                              make_mlp_spec(spec.latent_dim, spec.hidden, spec.x_dim,
                                            spec.dec_layers, spec.activation, spec.init_scale),
                              dec_rng);
  if (spec.with_score) {
    Rng score_rng = root.fork(hash_mix(0x736372, 0));
    m.score = ScoreNet(spec.latent_dim,
                       make_mlp_spec(spec.latent_dim + 1, spec.hidden, spec.latent_dim,
                                     spec.score_layers, spec.activation, spec.init_scale),
                       schedule.sigma_min, schedule.sigma_max, score_rng);
  }
  if (spec.prior_components == 1) {
    m.prior = LearnableAnalyticPrior::gaussian(spec.latent_dim);
  } else if (spec.prior_components > 1) {
    Rng prior_rng = root.fork(hash_mix(0x707269, 0));
    m.prior = LearnableAnalyticPrior::mixture(spec.prior_components, spec.latent_dim,
                                              spec.prior_spread, prior_rng);
  }
  return m;
}

namespace {

struct DomainDraws {
  std::vector<int> idx;
  Tensor x;     // gathered batch
  Tensor eps;   // reparameterization noise
  Tensor eps0;  // sfs score-evaluation noise; empty when unused
  LsgmNoise lsgm;
};

struct LoopControls {
  const ScoreNet* frozen_score = nullptr;  // overrides model.score as the sfs/lsgm source
  ScoreFn sfs_override;                    // overrides the network score for the sfs route
  const AnalyticPrior* fixed_xent_prior = nullptr;  // analytic_vaub without a learnable prior
  bool train_score = false;
};

double mean_neg_log_density(const AnalyticPrior& prior, const Tensor& z) {
  Tensor ld = prior.log_density(z);
  double acc = 0.0;
  for (int i = 0; i < ld.rows(); ++i) acc += ld.at(i, 0);
  return -acc / ld.rows();
}

Tensor concat_rows_value(const std::vector<Tensor>& parts) {
  int rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Tensor out(rows, parts.at(0).cols());
  int r = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < p.rows(); ++i, ++r)
      for (int j = 0; j < p.cols(); ++j) out.at(r, j) = p.at(i, j);
  }
  return out;
}

RunTrace run_loop(Model& model, const LabeledDomainDataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks, const LoopControls& ctl) {
  cfg.validate();
  if (data.num_domains() < 1) throw std::invalid_argument("train: dataset has no domains");
  if (data.num_domains() != model.encoder.domains() ||
      data.num_domains() != model.decoder.domains())
    throw std::invalid_argument("train: domain count mismatch between data and networks");
  for (const auto& dom : data.domains)
    if (dom.x.rows() < 1) throw std::invalid_argument("train: empty domain");
  if (hooks.gw_features) {
    if (static_cast<int>(hooks.gw_features->size()) != data.num_domains())
      throw std::invalid_argument("train: gw_features must cover every domain");
    for (int d = 0; d < data.num_domains(); ++d)
      if ((*hooks.gw_features)[d].rows() != data.domains[d].x.rows())
        throw std::invalid_argument("train: gw_features rows must align with the domain data");
  }

  const ScoreNet* score_net = ctl.frozen_score
                                  ? ctl.frozen_score
                                  : (model.score ? &*model.score : nullptr);
  const bool uses_score_route =
      cfg.mode == EncoderGradMode::sfs || cfg.mode == EncoderGradMode::lsgm;
  if (uses_score_route && !score_net && !(cfg.mode == EncoderGradMode::sfs && ctl.sfs_override))
    throw std::invalid_argument("train: mode '" + to_string(cfg.mode) +
                                "' needs a score model");
  if (cfg.mode == EncoderGradMode::analytic_vaub && !model.prior && !ctl.fixed_xent_prior)
    throw std::invalid_argument("train: analytic-vaub mode needs a prior");

  const int latent = model.encoder.latent_dim();
  const bool train_score = ctl.train_score && uses_score_route;
  if (train_score && !model.score)
    throw std::invalid_argument("train: score updates requested without model.score");

  // VAE-side optimizer covers encoder, decoder and (analytic mode) the prior.
  std::vector<Tensor*> vae_params = model.encoder.parameters();
  {
    auto dec = model.decoder.parameters();
    vae_params.insert(vae_params.end(), dec.begin(), dec.end());
  }
  const bool learn_prior = cfg.mode == EncoderGradMode::analytic_vaub && model.prior.has_value();
  if (learn_prior) {
    auto pp = model.prior->parameters();
    vae_params.insert(vae_params.end(), pp.begin(), pp.end());
  }
  Adam vae_opt(vae_params, cfg.vae_lr, cfg.adam);
  Adam score_opt;
  if (train_score) score_opt = Adam(model.score->parameters(), cfg.score_lr, cfg.adam);

  // Score provider for the sfs route. Outside a frozen-score run the network
  // score is blended with a running-moment Gaussian and sigma-clamped.
  BlendedScorePrior blended;
  ScoreFn sfs_score;
  if (cfg.mode == EncoderGradMode::sfs) {
    if (ctl.sfs_override) {
      sfs_score = ctl.sfs_override;
    } else if (ctl.frozen_score) {
      sfs_score = [score_net](const Tensor& z, double sigma) {
        return score_net->score_value(z, sigma);
      };
    } else {
      blended = BlendedScorePrior(
          [score_net](const Tensor& z, double sigma) { return score_net->score_value(z, sigma); },
          latent, cfg.blend_alpha, cfg.schedule.sigma_min, cfg.schedule.sigma_max);
      blended.set_fallback(Tensor(1, latent), Tensor::full(1, latent, 1.0));
      sfs_score = [&blended](const Tensor& z, double sigma) {
        return blended.blended_score(z, sigma);
      };
    }
  }

  const double sigma0 = cfg.sigma0();
  const bool draw_eps0 =
      cfg.mode == EncoderGradMode::sfs && cfg.loss.sfs_noise && sigma0 > 0;
  const bool use_gw = cfg.loss.lambda_gw > 0;

  Rng master(cfg.seed);
  RunTrace trace;

  for (int step = 0; step < cfg.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    TraceRow row;
    row.step = step;
    try {
      // Fixed draw order: per-domain batch draws first, then mode-specific
      // draws, then (after the VAE update) the score-loop draws.
      std::vector<DomainDraws> draws(data.num_domains());
      for (int d = 0; d < data.num_domains(); ++d) {
        draws[d].idx = master.sample_indices(data.domains[d].x.rows(), cfg.batch_size);
        draws[d].x = gather_rows(data.domains[d].x, draws[d].idx);
        draws[d].eps = master.normal_tensor(cfg.batch_size, latent);
      }
      if (draw_eps0)
        for (int d = 0; d < data.num_domains(); ++d)
          draws[d].eps0 = master.normal_tensor(cfg.batch_size, latent);
      if (cfg.mode == EncoderGradMode::lsgm)
        for (int d = 0; d < data.num_domains(); ++d)
          draws[d].lsgm = sample_lsgm_noise(cfg.schedule, cfg.batch_size, latent,
                                            cfg.loss.lsgm_draws, master);

      // ---- joint encoder/decoder(/prior) step ----
      Tape tape;
      BoundEncoder benc = model.encoder.bind(tape, true);
      BoundDecoder bdec = model.decoder.bind(tape, true);
      std::optional<BoundLearnablePrior> bprior;
      if (learn_prior) bprior = model.prior->bind(tape, true);
      std::optional<BoundScoreNet> blsgm;
      if (cfg.mode == EncoderGradMode::lsgm) blsgm = score_net->bind(tape, false);

      Var total;
      double gw_sum = 0.0;
      std::vector<Tensor> z_parts, raw_mu_parts;
      bool first = true;
      row.recon = row.entropy = row.xent = 0.0;
      for (int d = 0; d < data.num_domains(); ++d) {
        DomainLoss dl;
        if (cfg.mode == EncoderGradMode::sfs) {
          dl = saub_loss(tape, benc, bdec, sfs_score, sigma0,
                         draws[d].eps0.rows() > 0 ? &draws[d].eps0 : nullptr, draws[d].x, d,
                         draws[d].eps, cfg.loss, BnMode::train);
        } else if (cfg.mode == EncoderGradMode::lsgm) {
          ScoreVarFn fn = [&blsgm](Var zt, const std::vector<double>& s) {
            return blsgm->score(zt, s);
          };
          dl = lsgm_domain_loss(tape, benc, bdec, fn, cfg.schedule, draws[d].lsgm, draws[d].x, d,
                                draws[d].eps, cfg.loss, BnMode::train);
        } else {
          LogPriorFn log_prior;
          if (bprior)
            log_prior = [&bprior](Var z) { return bprior->log_density(z); };
          else
            log_prior = [&tape, &ctl](Var z) {
              return ctl.fixed_xent_prior->log_density_on(tape, z);
            };
          dl = vaub_loss(tape, benc, bdec, log_prior, draws[d].x, d, draws[d].eps, cfg.loss,
                         BnMode::train);
        }
        row.recon += dl.terms.reconstruction;
        row.entropy += dl.terms.entropy;
        row.xent += dl.terms.cross_entropy;
        Var domain_total = dl.total;
        if (use_gw) {
          const Tensor& feats =
              hooks.gw_features ? (*hooks.gw_features)[d] : data.domains[d].x;
          Tensor dist_x = pairwise_distances(gather_rows(feats, draws[d].idx));
          Var gw = gw_cost(dl.z, dist_x);
          gw_sum += gw.value().scalar_value();
          domain_total = total_loss(domain_total, gw, cfg.loss);
        }
        total = first ? domain_total : add(total, domain_total);
        first = false;
        z_parts.push_back(dl.z.value());
        raw_mu_parts.push_back(dl.raw_mu.value());
      }
      row.gw = use_gw ? gw_sum : std::numeric_limits<double>::quiet_NaN();

      tape.backward(total);
      std::vector<Tensor> grads;
      for (const Var& v : benc.param_vars()) grads.push_back(v.grad());
      for (const Var& v : bdec.param_vars()) grads.push_back(v.grad());
      if (bprior)
        for (const Var& v : bprior->param_vars()) grads.push_back(v.grad());
      vae_opt.step(grads);

      // state updates from this step's batches
      if (model.encoder.batchnorm_enabled())
        for (int d = 0; d < data.num_domains(); ++d)
          model.encoder.update_batchnorm(d, raw_mu_parts[d], cfg.stat_momentum);
      Tensor z_all = concat_rows_value(z_parts);
      if (cfg.mode == EncoderGradMode::sfs && !ctl.sfs_override && !ctl.frozen_score)
        blended.update_fallback(z_all, cfg.stat_momentum);
      if (hooks.nll_reference) row.nll = mean_neg_log_density(*hooks.nll_reference, z_all);

      // ---- score-model loops ----
      if (train_score) {
        double dsm_acc = 0.0;
        for (int loop = 0; loop < cfg.score_loops; ++loop) {
          std::vector<Tensor> clean_parts;
          for (int d = 0; d < data.num_domains(); ++d) {
            std::vector<int> idx = master.sample_indices(data.domains[d].x.rows(), cfg.batch_size);
            Tensor eps = master.normal_tensor(cfg.batch_size, latent);
            Tape enc_tape;
            BoundEncoder e = model.encoder.bind(enc_tape, false);
            EncoderOutput out = e.encode(enc_tape.constant(gather_rows(data.domains[d].x, idx)),
                                         d, BnMode::train);
            Var z = reparameterized_sample(out.mu, out.logvar, eps);
            clean_parts.push_back(z.value());
          }
          Tensor clean = concat_rows_value(clean_parts);
          DsmNoise noise = sample_dsm_noise(cfg.schedule, clean.rows(), latent, master);
          Tape stape;
          BoundScoreNet bs = model.score->bind(stape, true);
          ScoreVarFn fn = [&bs](Var zt, const std::vector<double>& s) { return bs.score(zt, s); };
          Var loss = dsm_loss(stape, fn, clean, noise);
          dsm_acc += loss.value().scalar_value();
          stape.backward(loss);
          std::vector<Tensor> sgrads;
          for (const Var& v : bs.param_vars()) sgrads.push_back(v.grad());
          score_opt.step(sgrads);
        }
        row.dsm = dsm_acc / cfg.score_loops;
      }
    } catch (const NonFiniteError& e) {
      trace.diverged_step = step;
      trace.note = e.what();
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
      trace.rows.push_back(row);
      break;
    } catch (const std::domain_error& e) {
      trace.diverged_step = step;
      trace.note = e.what();
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                        .count();
      trace.rows.push_back(row);
      break;
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    trace.rows.push_back(row);
  }
  return trace;
}

}  // namespace

RunTrace alternate_train(Model& model, const LabeledDomainDataset& data, const TrainConfig& cfg,
                         const TrainHooks& hooks) {
  LoopControls ctl;
  ctl.train_score = true;
  return run_loop(model, data, cfg, hooks, ctl);
}

RunTrace stability_run(Model& model, const ScoreNet& frozen_score, const AnalyticPrior& fixed_prior,
                       const LabeledDomainDataset& data, const TrainConfig& cfg,
                       const StabilityOptions& opts) {
  TrainConfig local = cfg;
  local.mode = opts.mode;
  LoopControls ctl;
  ctl.frozen_score = &frozen_score;
  ctl.sfs_override = opts.score_override;
  ctl.fixed_xent_prior = &fixed_prior;
  ctl.train_score = false;
  TrainHooks hooks;
  hooks.nll_reference = &fixed_prior;
  return run_loop(model, data, local, hooks, ctl);
}

PretrainResult pretrain_score(ScoreNet& net, const std::function<Tensor(int, Rng&)>& sampler,
                              const NoiseSchedule& schedule, int steps, int batch_size, double lr,
                              uint64_t seed) {
  if (steps < 0) throw std::invalid_argument("pretrain_score: steps must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("pretrain_score: batch_size must be >= 1");
  schedule.validate();
  PretrainResult result;
  if (steps == 0) return result;
  Rng rng(seed);
  Adam opt(net.parameters(), lr);
  for (int step = 0; step < steps; ++step) {
    Tensor clean = sampler(batch_size, rng);
    if (clean.cols() != net.latent_dim())
      throw std::invalid_argument("pretrain_score: sampler dimension mismatch");
    DsmNoise noise = sample_dsm_noise(schedule, clean.rows(), net.latent_dim(), rng);
    try {
      Tape tape;
      BoundScoreNet bs = net.bind(tape, true);
      ScoreVarFn fn = [&bs](Var zt, const std::vector<double>& s) { return bs.score(zt, s); };
      Var loss = dsm_loss(tape, fn, clean, noise);
      const double value = loss.value().scalar_value();
      if (!std::isfinite(value) || value > kPretrainLossGuard)
        throw DivergenceError(step, "pretrain_score: dsm loss " + std::to_string(value) +
                                        " exceeded the divergence guard");
      tape.backward(loss);
      std::vector<Tensor> grads;
      for (const Var& v : bs.param_vars()) grads.push_back(v.grad());
      opt.step(grads);
      result.final_dsm = value;
      result.steps = step + 1;
    } catch (const NonFiniteError& e) {
      throw DivergenceError(step, std::string("pretrain_score: ") + e.what());
    }
  }
  return result;
}

std::vector<Tensor> encode_dataset(const GaussianEncoder& encoder,
                                   const LabeledDomainDataset& data) {
  if (data.num_domains() != encoder.domains())
    throw std::invalid_argument("encode_dataset: domain count mismatch");
  std::vector<Tensor> out;
  for (int d = 0; d < data.num_domains(); ++d)
    out.push_back(encoder.encode_value(data.domains[d].x, d).first);
  return out;
}

}  // namespace dmatch
