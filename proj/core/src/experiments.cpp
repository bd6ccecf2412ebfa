#include "dmatch/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include "dmatch/csv.hpp"
#include "dmatch/datasets.hpp"
#include "dmatch/gradcheck.hpp"
#include "dmatch/metrics.hpp"
#include "dmatch/objectives.hpp"
#include "dmatch/trainer.hpp"

namespace dmatch {

namespace fs = std::filesystem;

namespace {

// pinned check tolerances
constexpr double kSfsRelL2Tol = 1e-5;
constexpr double kFdRelTol = 1e-4;

void consume_run_keys(const Config& cfg) {
  cfg.get_string_or("run", "experiment", "");
  cfg.get_string_or("run", "out_dir", "");
  cfg.get_string_or("run", "seeds", "");
}

std::vector<int> run_seeds(const Config& cfg, const std::vector<int>& fallback) {
  std::vector<int> seeds = cfg.get_int_list_or("run", "seeds", fallback);
  if (seeds.empty()) throw std::invalid_argument("config: [run] seeds must not be empty");
  for (int s : seeds)
    if (s < 0) throw std::invalid_argument("config: [run] seeds must be non-negative");
  return seeds;
}

LossConfig parse_loss(const Config& cfg, double beta_default, double lambda_gw_default) {
  LossConfig loss;
  loss.beta = cfg.get_double_or("loss", "beta", beta_default);
  loss.lambda_gw = cfg.get_double_or("loss", "lambda_gw", lambda_gw_default);
  loss.sigma_dec2 = cfg.get_double_or("loss", "sigma_dec2", 0.1);
  loss.sfs_noise = cfg.get_bool_or("loss", "sfs_noise", true);
  loss.lsgm_draws = cfg.get_int_or("loss", "lsgm_draws", 1);
  loss.validate();
  return loss;
}

NoiseSchedule parse_schedule(const Config& cfg) {
  NoiseSchedule s;
  s.sigma_min = cfg.get_double_or("schedule", "sigma_min", 0.01);
  s.sigma_max = cfg.get_double_or("schedule", "sigma_max", 1.0);
  s.levels = cfg.get_int_or("schedule", "levels", 10);
  s.validate();
  return s;
}

struct TrainDefaults {
  int steps = 1000;
  int batch_size = 128;
  double vae_lr = 1e-3;
  double score_lr = 1e-3;
  int score_loops = 5;
  std::string mode = "sfs";
};

TrainConfig parse_train(const Config& cfg, const TrainDefaults& def, const LossConfig& loss,
                        const NoiseSchedule& schedule, uint64_t seed) {
  TrainConfig t;
  t.steps = cfg.get_int_or("train", "steps", def.steps);
  t.batch_size = cfg.get_int_or("train", "batch_size", def.batch_size);
  t.vae_lr = cfg.get_double_or("train", "vae_lr", def.vae_lr);
  t.score_lr = cfg.get_double_or("train", "score_lr", def.score_lr);
  t.score_loops = cfg.get_int_or("train", "score_loops", def.score_loops);
  t.mode = encoder_grad_mode_from_string(cfg.get_string_or("train", "mode", def.mode));
  t.sfs_sigma0 = cfg.get_double_or("train", "sfs_sigma0", -1.0);
  t.blend_alpha = cfg.get_double_or("train", "blend_alpha", 0.05);
  t.stat_momentum = cfg.get_double_or("train", "stat_momentum", 0.1);
  t.loss = loss;
  t.schedule = schedule;
  t.seed = seed;
  t.validate();
  return t;
}

struct ArchDefaults {
  int latent = 2;
  bool batchnorm = false;
};

ModelSpec parse_arch(const Config& cfg, const ArchDefaults& def) {
  ModelSpec spec;
  spec.latent_dim = cfg.get_int_or("model", "latent_dim", def.latent);
  spec.hidden = cfg.get_int_or("model", "hidden", 64);
  spec.enc_layers = cfg.get_int_or("model", "enc_layers", 3);
  spec.dec_layers = cfg.get_int_or("model", "dec_layers", 3);
  spec.score_layers = cfg.get_int_or("model", "score_layers", 3);
  spec.activation = activation_from_string(cfg.get_string_or("model", "activation", "softplus"));
  spec.batchnorm = cfg.get_bool_or("model", "batchnorm", def.batchnorm);
  spec.init_scale = cfg.get_double_or("model", "init_scale", 1.0);
  return spec;
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string format_compact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : acc / v.size();
}

double pop_std(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / v.size());
}

void write_latents_csv(const std::string& path, const LabeledDomainDataset& data,
                       const std::vector<Tensor>& latents, const std::string& config_hash) {
  CsvTable t;
  t.comments = standard_comments(config_hash, "latent dump: eval-mode posterior means");
  const int latent_dim = latents.at(0).cols();
  t.columns = {"sample_id", "domain", "label"};
  for (int j = 0; j < latent_dim; ++j) t.columns.push_back("z" + std::to_string(j));
  for (int d = 0; d < data.num_domains(); ++d) {
    const DomainData& dom = data.domains[d];
    for (int i = 0; i < dom.x.rows(); ++i) {
      std::vector<std::string> row = {std::to_string(dom.ids[i]), std::to_string(d),
                                      std::to_string(dom.labels[i])};
      for (int j = 0; j < latent_dim; ++j) row.push_back(format_double(latents[d].at(i, j)));
      t.rows.push_back(std::move(row));
    }
  }
  write_csv(path, t);
}

// ---------------- gradcheck internals ----------------

struct GradProblem {
  GaussianEncoder enc;
  GaussianDecoder dec;
  Tensor x, eps;
};

GradProblem make_grad_problem(uint64_t seed, int x_dim, int latent, int batch) {
  Rng root(hash_mix(seed, 0x67726164));
  GradProblem p;
  Rng er = root.fork(1);
  p.enc = GaussianEncoder(1, make_mlp_spec(x_dim, 8, 2 * latent, 2, Activation::tanh), latent,
                          false, er);
  Rng dr = root.fork(2);
  p.dec = GaussianDecoder(1, make_mlp_spec(latent, 8, x_dim, 2, Activation::tanh), dr);
  p.x = root.normal_tensor(batch, x_dim);
  p.eps = root.normal_tensor(batch, latent);
  return p;
}

AnalyticPrior make_check_prior(int components, int latent, uint64_t seed) {
  if (components <= 1) return AnalyticPrior::standard_normal(latent);
  Rng r(hash_mix(seed, 0x7072 + components));
  std::vector<double> w(components, 1.0 / components);
  double acc = 0.0;
  for (size_t i = 0; i + 1 < w.size(); ++i) acc += w[i];
  w.back() = 1.0 - acc;
  std::vector<Tensor> means, vars;
  for (int c = 0; c < components; ++c) {
    Tensor m = r.normal_tensor(1, latent);
    for (int j = 0; j < latent; ++j) m.at(0, j) *= 1.5;
    means.push_back(std::move(m));
    vars.push_back(Tensor::full(1, latent, 0.5));
  }
  return AnalyticPrior::mixture(w, means, vars);
}

std::vector<double> flatten_grads(const std::vector<Var>& vars) {
  std::vector<double> out;
  for (const Var& v : vars) {
    Tensor g = v.grad();
    out.insert(out.end(), g.values().begin(), g.values().end());
  }
  return out;
}

double vec_rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::logic_error("vec_rel_l2: size mismatch");
  double na = 0, nb = 0, nd = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    nd += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return std::sqrt(nd) / std::max(1e-12, std::max(std::sqrt(na), std::sqrt(nb)));
}

// gradient of the cross-entropy term alone w.r.t. encoder parameters
std::vector<double> xent_grads(GradProblem& p, const AnalyticPrior& prior, bool use_surrogate,
                               bool corrupt) {
  Tape tape;
  BoundEncoder be = p.enc.bind(tape, true);
  EncoderOutput eo = be.encode(tape.constant(p.x), 0, BnMode::train);
  Var z = reparameterized_sample(eo.mu, eo.logvar, p.eps);
  Var xent;
  if (use_surrogate) {
    ScoreFn score = prior.score_provider();
    if (corrupt) {
      // negative-control hook: evaluate the score at a shifted point, which is
      // what a broken stop-gradient boundary would effectively do
      ScoreFn base = score;
      score = [base](const Tensor& zt, double sigma) {
        Tensor shifted = zt;
        for (int i = 0; i < shifted.rows(); ++i)
          for (int j = 0; j < shifted.cols(); ++j) shifted.at(i, j) += 0.1;
        return base(shifted, sigma);
      };
    }
    xent = sfs_cross_entropy_surrogate(tape, z, score, 0.0, nullptr);
  } else {
    xent = neg(mean(prior.log_density_on(tape, z)));
  }
  tape.backward(xent);
  return flatten_grads(be.param_vars());
}

// gradient of the full bound w.r.t. encoder+decoder parameters
std::vector<double> bound_grads(GradProblem& p, const AnalyticPrior& prior, bool use_surrogate,
                                const LossConfig& loss) {
  Tape tape;
  BoundEncoder be = p.enc.bind(tape, true);
  BoundDecoder bd = p.dec.bind(tape, true);
  DomainLoss dl;
  if (use_surrogate) {
    dl = saub_loss(tape, be, bd, prior.score_provider(), 0.0, nullptr, p.x, 0, p.eps, loss,
                   BnMode::train);
  } else {
    Tape* tp = &tape;
    LogPriorFn lp = [tp, &prior](Var z) { return prior.log_density_on(*tp, z); };
    dl = vaub_loss(tape, be, bd, lp, p.x, 0, p.eps, loss, BnMode::train);
  }
  tape.backward(dl.total);
  std::vector<double> g = flatten_grads(be.param_vars());
  std::vector<double> gd = flatten_grads(bd.param_vars());
  g.insert(g.end(), gd.begin(), gd.end());
  return g;
}

double composite_fd_error(uint64_t seed) {
  Rng r(hash_mix(seed, 0x6664));
  Tensor x0 = r.normal_tensor(4, 3);
  Tensor w = r.normal_tensor(3, 3);
  auto build = [&w](Tape& tape, Var x) {
    Var h = softplus(matmul(tanh(x), tape.constant(w)));
    return mean(add(log(h + 0.1), square(x)));
  };
  auto f = [&](const Tensor& xt) {
    Tape tape;
    Var x = tape.leaf(xt, false);
    return build(tape, x).value().scalar_value();
  };
  Tensor fd = finite_difference_gradient(f, x0, 1e-5);
  Tape tape;
  Var x = tape.leaf(x0, true);
  Var y = build(tape, x);
  tape.backward(y);
  return max_rel_error(x.grad(), fd, 1e-6);
}

double lsgm_linear_fd_error(uint64_t seed) {
  Rng root(hash_mix(seed, 0x6c7367));
  const int x_dim = 2, latent = 2, batch = 4;
  Rng er = root.fork(1);
  GaussianEncoder enc(1, make_mlp_spec(x_dim, 4, 2 * latent, 2, Activation::tanh), latent, false,
                      er);
  Tensor x = root.normal_tensor(batch, x_dim);
  Tensor eps = root.normal_tensor(batch, latent);
  Tensor a = root.normal_tensor(latent, latent);
  for (int i = 0; i < latent; ++i)
    for (int j = 0; j < latent; ++j) a.at(i, j) *= 0.5;
  Tensor brow = root.normal_tensor(1, latent);
  NoiseSchedule sched;
  sched.sigma_min = 0.1;
  sched.sigma_max = 1.0;
  sched.levels = 5;
  LsgmNoise noise = sample_lsgm_noise(sched, batch, latent, 2, root);

  auto loss_with = [&](Tape& tape, bool trainable) {
    BoundEncoder be = enc.bind(tape, trainable);
    EncoderOutput eo = be.encode(tape.constant(x), 0, BnMode::train);
    Var z = reparameterized_sample(eo.mu, eo.logvar, eps);
    Tape* tp = &tape;
    ScoreVarFn fn = [tp, &a, &brow](Var zt, const std::vector<double>&) {
      return add(matmul(zt, tp->constant(a)), tp->constant(brow));
    };
    return std::make_pair(lsgm_cross_entropy(tape, fn, z, sched, noise), be);
  };

  Tape t1;
  auto [loss, be] = loss_with(t1, true);
  t1.backward(loss);
  std::vector<double> ad = flatten_grads(be.param_vars());

  std::vector<double> fd;
  const double h = 1e-5;
  for (Tensor* param : enc.parameters()) {
    for (int i = 0; i < param->rows(); ++i)
      for (int j = 0; j < param->cols(); ++j) {
        const double saved = param->at(i, j);
        auto eval = [&](double v) {
          param->at(i, j) = v;
          Tape tape;
          double out = loss_with(tape, false).first.value().scalar_value();
          param->at(i, j) = saved;
          return out;
        };
        fd.push_back((eval(saved + h) - eval(saved - h)) / (2 * h));
      }
  }
  return vec_rel_l2(ad, fd);
}

// ---------------- shared run drivers ----------------

struct DataBundle {
  LabeledDomainDataset data;
  std::optional<AnalyticPrior> reference;  // analytic target when one exists
};

DataBundle build_data(const Config& cfg, uint64_t default_seed) {
  const std::string kind = cfg.get_string_or("data", "kind", "nested_d");
  DataBundle out;
  if (kind == "nested_d") {
    NestedDSpec spec;
    spec.n_per_class = cfg.get_int_or("nested_d", "n_per_class", 100);
    spec.outer_radius = cfg.get_double_or("nested_d", "outer_radius", 2.0);
    spec.inner_radius = cfg.get_double_or("nested_d", "inner_radius", 1.0);
    spec.noise_std = cfg.get_double_or("nested_d", "noise_std", 0.05);
    spec.separation = cfg.get_double_or("nested_d", "separation", 6.0);
    spec.seed = cfg.get_uint64_or("nested_d", "seed", default_seed);
    out.data = gen_nested_d(spec);
  } else if (kind == "mog") {
    MogTargetSpec spec;
    spec.components = cfg.get_int_or("mog", "components", 5);
    spec.dim = cfg.get_int_or("mog", "dim", 2);
    spec.spread = cfg.get_double_or("mog", "spread", 2.0);
    spec.component_var = cfg.get_double_or("mog", "var", 0.1);
    spec.n = cfg.get_int_or("mog", "n", 1000);
    spec.seed = cfg.get_uint64_or("mog", "seed", default_seed);
    MogTarget target = gen_mog_target(spec);
    out.data = single_domain_dataset(target.samples);
    out.reference = target.prior;
  } else if (kind == "tabular") {
    TabularSchema schema;
    schema.label_column = cfg.get_string_or("tabular", "label_column", "label");
    schema.protected_column = cfg.get_string_or("tabular", "protected_column", "protected");
    schema.split_column = cfg.get_string_or("tabular", "split_column", "");
    schema.train_fraction = cfg.get_double_or("tabular", "train_fraction", 0.7);
    schema.split_seed = cfg.get_uint64_or("tabular", "split_seed", 0);
    const std::string path = cfg.get_string("tabular", "csv");
    out.data = load_tabular_csv(path, schema).train_by_domain();
  } else {
    throw std::invalid_argument("config: [data] kind must be nested_d, mog or tabular");
  }
  return out;
}

struct PriorChoice {
  bool with_score = false;
  int components = 0;  // learnable analytic components when not score-based
};

PriorChoice parse_prior_choice(const Config& cfg) {
  const std::string prior = cfg.get_string_or("model", "prior", "score");
  PriorChoice out;
  if (prior == "score") {
    out.with_score = true;
  } else if (prior == "gaussian") {
    out.components = 1;
  } else if (prior == "mog") {
    out.components = cfg.get_int_or("model", "prior_components", 5);
    if (out.components < 2)
      throw std::invalid_argument("config: [model] prior_components must be >= 2 for mog");
  } else {
    throw std::invalid_argument("config: [model] prior must be score, gaussian or mog");
  }
  return out;
}

}  // namespace

// ---------------- gradcheck ----------------

int run_gradcheck(const Config& cfg, const std::string& out_dir) {
  consume_run_keys(cfg);
  const int seeds_per_check = cfg.get_int_or("gradcheck", "seeds_per_check", 20);
  const bool corrupt = cfg.get_bool_or("gradcheck", "corrupt_detach", false);
  if (seeds_per_check < 1)
    throw std::invalid_argument("config: [gradcheck] seeds_per_check must be >= 1");
  cfg.require_all_consumed();

  CsvTable report;
  report.comments =
      standard_comments(cfg.hash(), "columns: check,seed,error,tolerance,pass (1/0)");
  report.columns = {"check", "seed", "error", "tolerance", "pass"};

  bool all_pass = true;
  auto record = [&](const std::string& check, int seed, double err, double tol) {
    const bool pass = std::isfinite(err) && err <= tol;
    all_pass = all_pass && pass;
    report.rows.push_back({check, std::to_string(seed), format_double(err), format_double(tol),
                           pass ? "1" : "0"});
  };

  const struct {
    const char* name;
    int components;
  } prior_cases[] = {{"gaussian", 1}, {"mog2", 2}, {"mog5", 5}};

  LossConfig loss;
  loss.beta = 0.5;
  loss.sigma_dec2 = 0.3;

  for (const auto& pc : prior_cases) {
    for (int seed = 0; seed < seeds_per_check; ++seed) {
      GradProblem p = make_grad_problem(seed, 3, 2, 8);
      AnalyticPrior prior = make_check_prior(pc.components, 2, seed);
      std::vector<double> direct = xent_grads(p, prior, false, false);
      std::vector<double> sfs = xent_grads(p, prior, true, corrupt);
      record(std::string("sfs_vs_direct_") + pc.name, seed, vec_rel_l2(sfs, direct),
             kSfsRelL2Tol);
    }
  }
  for (const auto& pc : prior_cases) {
    for (int seed = 0; seed < seeds_per_check; ++seed) {
      GradProblem p = make_grad_problem(hash_mix(seed, 0xb0), 3, 2, 8);
      AnalyticPrior prior = make_check_prior(pc.components, 2, seed);
      std::vector<double> vaub = bound_grads(p, prior, false, loss);
      std::vector<double> saub = bound_grads(p, prior, true, loss);
      record(std::string("saub_vs_vaub_") + pc.name, seed, vec_rel_l2(saub, vaub), kSfsRelL2Tol);
    }
  }
  for (int seed = 0; seed < seeds_per_check; ++seed)
    record("autodiff_fd", seed, composite_fd_error(seed), kFdRelTol);
  for (int seed = 0; seed < seeds_per_check; ++seed)
    record("lsgm_linear_fd", seed, lsgm_linear_fd_error(seed), kFdRelTol);

  write_csv(join_path(out_dir, "gradcheck_report.csv"), report);
  std::cout << (all_pass ? "gradcheck: all checks passed" : "gradcheck: FAILURES, see report")
            << " (" << report.rows.size() << " cases, report " << out_dir << ")\n";
  return all_pass ? kExitOk : kExitCheckFailed;
}

// ---------------- stability ----------------

int run_stability(const Config& cfg, const std::string& out_dir) {
  consume_run_keys(cfg);
  const std::vector<int> seeds = run_seeds(cfg, {0, 1, 2});
  const std::vector<double> sigma_grid =
      cfg.get_double_list_or("stability", "sigma_min_grid", {0.001, 0.01, 0.1, 0.2});
  const double sigma_max = cfg.get_double_or("stability", "sigma_max", 1.0);
  const int levels = cfg.get_int_or("stability", "levels", 10);
  const std::vector<std::string> modes =
      cfg.get_string_list_or("stability", "modes", {"sfs", "lsgm"});
  const int pretrain_steps = cfg.get_int_or("stability", "pretrain_steps", 3000);
  const int pretrain_batch = cfg.get_int_or("stability", "pretrain_batch", 256);
  const double pretrain_lr = cfg.get_double_or("stability", "pretrain_lr", 1e-3);
  const int target_components = cfg.get_int_or("stability", "target_components", 5);
  const double target_spread = cfg.get_double_or("stability", "target_spread", 2.0);
  const double target_var = cfg.get_double_or("stability", "target_var", 0.1);
  const int target_n = cfg.get_int_or("stability", "target_n", 2000);
  LossConfig loss = parse_loss(cfg, 0.1, 0.0);
  TrainDefaults tdef;
  tdef.steps = 400;
  tdef.score_loops = 1;
  ModelSpec arch = parse_arch(cfg, {2, false});
  NoiseSchedule parse_sched;  // placeholder; the sigma grid overrides it per run
  TrainConfig tbase = parse_train(cfg, tdef, loss, parse_sched, 0);
  cfg.require_all_consumed();

  MogTargetSpec target_spec;
  target_spec.components = target_components;
  target_spec.dim = arch.latent_dim;
  target_spec.spread = target_spread;
  target_spec.component_var = target_var;
  target_spec.n = 1;  // the prior is what matters here; samples drawn per seed below
  target_spec.seed = 0;
  const AnalyticPrior prior = gen_mog_target(target_spec).prior;

  CsvTable summary;
  summary.comments = standard_comments(
      cfg.hash(), "diverged: non-finite step or max_nll > 10x the step-0 nll");
  summary.columns = {"mode", "sigma_min", "seed", "max_nll", "final_nll", "diverged_step",
                     "diverged"};

  for (size_t si = 0; si < sigma_grid.size(); ++si) {
    const double sigma_min = sigma_grid[si];
    NoiseSchedule sched;
    sched.sigma_min = sigma_min;
    sched.sigma_max = sigma_max;
    sched.levels = levels;
    sched.validate();

    // one pretrained score model per sigma_min, shared by every mode and seed
    Rng srng(hash_mix(0x70726574, static_cast<uint64_t>(si)));
    ScoreNet score(arch.latent_dim,
                   make_mlp_spec(arch.latent_dim + 1, arch.hidden, arch.latent_dim,
                                 arch.score_layers, arch.activation, arch.init_scale),
                   sched.sigma_min, sched.sigma_max, srng);
    pretrain_score(
        score, [&prior](int b, Rng& r) { return prior.sample(b, r); }, sched, pretrain_steps,
        pretrain_batch, pretrain_lr, hash_mix(0x646174, static_cast<uint64_t>(si)));

    for (int seed : seeds) {
      Rng drng(hash_mix(static_cast<uint64_t>(seed), 0xda7a));
      LabeledDomainDataset data = single_domain_dataset(prior.sample(target_n, drng));

      ModelSpec mspec = arch;
      mspec.domains = 1;
      mspec.x_dim = arch.latent_dim;
      mspec.with_score = false;
      mspec.prior_components = 0;
      Model base = build_model(mspec, sched, hash_mix(static_cast<uint64_t>(seed), 0x6d6f64));

      for (const std::string& mode_name : modes) {
        Model model = base;  // identical initialization across modes
        TrainConfig tcfg = tbase;
        tcfg.schedule = sched;
        tcfg.seed = static_cast<uint64_t>(seed);
        tcfg.validate();
        StabilityOptions opts;
        opts.mode = encoder_grad_mode_from_string(mode_name);
        RunTrace trace = stability_run(model, score, prior, data, tcfg, opts);

        const std::string name = "trace_" + mode_name + "_s" + format_compact(sigma_min) +
                                 "_seed" + std::to_string(seed) + ".csv";
        write_csv(join_path(out_dir, name), trace_to_csv(trace, cfg.hash()));

        const double first_nll = trace.rows.empty()
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : trace.rows.front().nll;
        const double max_nll = trace.max_nll();
        const bool flagged =
            trace.diverged() || !std::isfinite(max_nll) ||
            (std::isfinite(first_nll) && max_nll > 10.0 * std::fabs(first_nll));
        summary.rows.push_back(
            {mode_name, format_compact(sigma_min), std::to_string(seed), format_double(max_nll),
             format_double(trace.final_nll()),
             std::to_string(trace.diverged_step.value_or(-1)), flagged ? "1" : "0"});
      }
    }
  }
  write_csv(join_path(out_dir, "stability_summary.csv"), summary);
  std::cout << "stability: wrote " << summary.rows.size() << " runs to " << out_dir << "\n";
  return kExitOk;
}

// ---------------- separation ----------------

int run_separation(const Config& cfg, const std::string& out_dir) {
  consume_run_keys(cfg);
  const std::vector<int> seeds = run_seeds(cfg, {0, 1, 2, 3, 4});
  const std::vector<int> n_grid = cfg.get_int_list_or("separation", "n_grid", {20, 100, 500});
  const std::vector<std::string> priors =
      cfg.get_string_list_or("separation", "priors", {"gaussian", "mog", "sfs", "lsgm"});
  const int mog_components = cfg.get_int_or("separation", "mog_components", 5);
  const double prior_spread = cfg.get_double_or("separation", "prior_spread", 1.0);
  NestedDSpec dspec;
  dspec.outer_radius = cfg.get_double_or("nested_d", "outer_radius", 2.0);
  dspec.inner_radius = cfg.get_double_or("nested_d", "inner_radius", 1.0);
  dspec.noise_std = cfg.get_double_or("nested_d", "noise_std", 0.05);
  dspec.separation = cfg.get_double_or("nested_d", "separation", 6.0);
  AurocOptions aopts;
  aopts.folds = cfg.get_int_or("auroc", "folds", 5);
  aopts.max_samples = cfg.get_int_or("auroc", "max_samples", 600);
  LossConfig loss = parse_loss(cfg, 0.1, 1.0);
  NoiseSchedule sched = parse_schedule(cfg);
  TrainDefaults tdef;
  tdef.steps = 2500;
  ModelSpec arch = parse_arch(cfg, {2, true});
  TrainConfig tbase = parse_train(cfg, tdef, loss, sched, 0);
  cfg.require_all_consumed();

  CsvTable out;
  out.comments = standard_comments(cfg.hash(), "auroc over all domains' latents vs labels");
  out.columns = {"prior", "n", "seed", "auroc", "diverged"};
  std::map<std::pair<std::string, int>, std::vector<double>> cell_scores;

  for (const std::string& prior_name : priors) {
    for (int n : n_grid) {
      for (int seed : seeds) {
        dspec.n_per_class = n;
        dspec.seed = hash_mix(static_cast<uint64_t>(seed), static_cast<uint64_t>(n));
        LabeledDomainDataset data = gen_nested_d(dspec);

        ModelSpec mspec = arch;
        mspec.domains = 2;
        mspec.x_dim = 2;
        std::string mode_name;
        if (prior_name == "gaussian") {
          mspec.with_score = false;
          mspec.prior_components = 1;
          mode_name = "analytic-vaub";
        } else if (prior_name == "mog") {
          mspec.with_score = false;
          mspec.prior_components = mog_components;
          mspec.prior_spread = prior_spread;
          mode_name = "analytic-vaub";
        } else if (prior_name == "sfs" || prior_name == "lsgm") {
          mspec.with_score = true;
          mspec.prior_components = 0;
          mode_name = prior_name;
        } else {
          throw std::invalid_argument("config: [separation] priors entries must be "
                                      "gaussian, mog, sfs or lsgm");
        }

        TrainConfig tcfg = tbase;
        tcfg.seed = static_cast<uint64_t>(seed);
        tcfg.mode = encoder_grad_mode_from_string(mode_name);
        tcfg.validate();
        Model model = build_model(
            mspec, sched, hash_mix(dspec.seed, 0x1000 + (prior_name == "lsgm" ? 1 : 0)));
        RunTrace trace = alternate_train(model, data, tcfg);

        double auroc = std::numeric_limits<double>::quiet_NaN();
        if (!trace.diverged()) {
          std::vector<Tensor> latents = encode_dataset(model.encoder, data);
          std::vector<Tensor> parts;
          std::vector<int> labels;
          for (int d = 0; d < data.num_domains(); ++d) {
            parts.push_back(latents[d]);
            labels.insert(labels.end(), data.domains[d].labels.begin(),
                          data.domains[d].labels.end());
          }
          Tensor all = parts[0];
          for (size_t i = 1; i < parts.size(); ++i) {
            Tensor merged(all.rows() + parts[i].rows(), all.cols());
            for (int r = 0; r < all.rows(); ++r)
              for (int c = 0; c < all.cols(); ++c) merged.at(r, c) = all.at(r, c);
            for (int r = 0; r < parts[i].rows(); ++r)
              for (int c = 0; c < all.cols(); ++c)
                merged.at(all.rows() + r, c) = parts[i].at(r, c);
            all = std::move(merged);
          }
          AurocOptions cell_opts = aopts;
          cell_opts.seed = static_cast<uint64_t>(seed);
          auroc = auroc_separation(all, labels, cell_opts).auroc;
          cell_scores[{prior_name, n}].push_back(auroc);
        }
        out.rows.push_back({prior_name, std::to_string(n), std::to_string(seed),
                            format_double(auroc), trace.diverged() ? "1" : "0"});
      }
    }
  }
  write_csv(join_path(out_dir, "separation.csv"), out);

  CsvTable summary;
  summary.comments = standard_comments(cfg.hash(), "mean/std over non-diverged seeds");
  summary.columns = {"prior", "n", "mean_auroc", "std_auroc", "runs"};
  for (const std::string& prior_name : priors)
    for (int n : n_grid) {
      const auto it = cell_scores.find({prior_name, n});
      const std::vector<double> empty;
      const std::vector<double>& scores = it == cell_scores.end() ? empty : it->second;
      summary.rows.push_back({prior_name, std::to_string(n), format_double(mean_of(scores)),
                              format_double(pop_std(scores)),
                              std::to_string(scores.size())});
    }
  write_csv(join_path(out_dir, "separation_summary.csv"), summary);
  std::cout << "separation: wrote " << out.rows.size() << " cells to " << out_dir << "\n";
  return kExitOk;
}

// ---------------- fairness ----------------

namespace {

// latents for every train/test row through that row's own domain encoder
Tensor encode_rows_by_group(const GaussianEncoder& enc, const Tensor& x,
                            const std::vector<int>& groups) {
  Tensor out(x.rows(), enc.latent_dim());
  for (int g = 0; g <= 1; ++g) {
    std::vector<int> idx;
    for (int i = 0; i < x.rows(); ++i)
      if (groups[i] == g) idx.push_back(i);
    if (idx.empty()) continue;
    Tensor mu = enc.encode_value(gather_rows(x, idx), g).first;
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < mu.cols(); ++j) out.at(idx[i], j) = mu.at(static_cast<int>(i), j);
  }
  return out;
}

}  // namespace

int run_fairness(const Config& cfg, const std::string& out_dir) {
  consume_run_keys(cfg);
  const std::vector<int> seeds = run_seeds(cfg, {0, 1, 2, 3, 4});
  std::string data_csv = cfg.get_string_or("fairness", "data_csv", "");
  const int n_train = cfg.get_int_or("fairness", "n_train", 1600);
  const int n_test = cfg.get_int_or("fairness", "n_test", 800);
  const double bias = cfg.get_double_or("fairness", "bias", 0.9);
  const uint64_t data_seed = cfg.get_uint64_or("fairness", "data_seed", 0);
  const std::vector<double> beta_grid =
      cfg.get_double_list_or("fairness", "beta_grid", {0.1, 0.25, 0.5, 1.0});
  const double lambda_gw = cfg.get_double_or("fairness", "lambda_gw", 0.0);
  ClassifierConfig ccfg;
  ccfg.steps = cfg.get_int_or("fairness", "classifier_steps", 1500);
  ccfg.hidden = cfg.get_int_or("fairness", "classifier_hidden", 64);
  TabularSchema schema = biased_tabular_schema();
  schema.label_column = cfg.get_string_or("fairness", "label_column", schema.label_column);
  schema.protected_column =
      cfg.get_string_or("fairness", "protected_column", schema.protected_column);
  schema.split_column = cfg.get_string_or("fairness", "split_column", schema.split_column);
  LossConfig base_loss = parse_loss(cfg, 1.0, lambda_gw);
  NoiseSchedule sched = parse_schedule(cfg);
  TrainDefaults tdef;
  tdef.steps = 1200;
  ModelSpec arch = parse_arch(cfg, {4, true});
  TrainConfig tbase = parse_train(cfg, tdef, base_loss, sched, 0);
  cfg.require_all_consumed();

  if (beta_grid.empty()) throw std::invalid_argument("config: [fairness] beta_grid empty");

  if (data_csv.empty()) {
    BiasedTabularSpec bspec;
    bspec.n_train = n_train;
    bspec.n_test = n_test;
    bspec.bias = bias;
    bspec.seed = data_seed;
    data_csv = join_path(out_dir, "biased_data.csv");
    write_biased_tabular_csv(data_csv, bspec);
  }
  TabularTask task = load_tabular_csv(data_csv, schema);
  LabeledDomainDataset by_dom = task.train_by_domain();

  CsvTable out;
  out.comments = standard_comments(
      cfg.hash(), "kind: aligned (representation) or unfair (raw-feature baseline)");
  out.columns = {"kind", "beta", "lambda_gw", "seed", "accuracy", "dp_gap"};

  std::map<double, std::vector<double>> dp_by_beta, acc_by_beta;
  std::vector<double> unfair_dp, unfair_acc;

  for (int seed : seeds) {
    ClassifierConfig ucfg = ccfg;
    ucfg.seed = hash_mix(static_cast<uint64_t>(seed), 0x756e66);
    TrainedClassifier unfair = train_mlp_classifier(task.x_train, task.y_train, ucfg);
    std::vector<int> pred = unfair.predict(task.x_test);
    const double acc = accuracy(pred, task.y_test);
    const double dp = dp_gap(pred, task.a_test);
    unfair_acc.push_back(acc);
    unfair_dp.push_back(dp);
    out.rows.push_back({"unfair", "nan", "nan", std::to_string(seed), format_double(acc),
                        format_double(dp)});
  }

  for (double beta : beta_grid) {
    for (int seed : seeds) {
      TrainConfig tcfg = tbase;
      tcfg.loss.beta = beta;
      tcfg.seed = static_cast<uint64_t>(seed);
      tcfg.validate();
      ModelSpec mspec = arch;
      mspec.domains = 2;
      mspec.x_dim = task.x_train.cols();
      mspec.with_score = tcfg.mode != EncoderGradMode::analytic_vaub;
      mspec.prior_components = mspec.with_score ? 0 : 1;
      Model model =
          build_model(mspec, sched, hash_mix(static_cast<uint64_t>(seed), 0x66616972));
      RunTrace trace = alternate_train(model, by_dom, tcfg);

      double acc = std::numeric_limits<double>::quiet_NaN();
      double dp = std::numeric_limits<double>::quiet_NaN();
      if (!trace.diverged()) {
        Tensor z_train = encode_rows_by_group(model.encoder, task.x_train, task.a_train);
        Tensor z_test = encode_rows_by_group(model.encoder, task.x_test, task.a_test);
        ClassifierConfig acfg = ccfg;
        acfg.seed = hash_mix(static_cast<uint64_t>(seed), 0x616c6e);
        TrainedClassifier clf = train_mlp_classifier(z_train, task.y_train, acfg);
        std::vector<int> pred = clf.predict(z_test);
        acc = accuracy(pred, task.y_test);
        dp = dp_gap(pred, task.a_test);
        acc_by_beta[beta].push_back(acc);
        dp_by_beta[beta].push_back(dp);
      }
      out.rows.push_back({"aligned", format_compact(beta), format_compact(tcfg.loss.lambda_gw),
                          std::to_string(seed), format_double(acc), format_double(dp)});
    }
  }
  write_csv(join_path(out_dir, "fairness.csv"), out);

  CsvTable summary;
  std::vector<double> betas, dp_means;
  for (double beta : beta_grid) {
    betas.push_back(beta);
    dp_means.push_back(mean_of(dp_by_beta[beta]));
  }
  double rho = std::numeric_limits<double>::quiet_NaN();
  if (betas.size() >= 2) {
    bool finite = true;
    for (double v : dp_means) finite = finite && std::isfinite(v);
    if (finite) rho = spearman_rho(betas, dp_means);
  }
  summary.comments = standard_comments(cfg.hash());
  summary.comments.push_back("spearman_beta_dpgap " + format_double(rho));
  summary.comments.push_back("unfair_mean_dp_gap " + format_double(mean_of(unfair_dp)));
  summary.comments.push_back("unfair_mean_accuracy " + format_double(mean_of(unfair_acc)));
  summary.columns = {"beta", "mean_accuracy", "mean_dp_gap", "runs"};
  for (double beta : beta_grid)
    summary.rows.push_back({format_compact(beta), format_double(mean_of(acc_by_beta[beta])),
                            format_double(mean_of(dp_by_beta[beta])),
                            std::to_string(dp_by_beta[beta].size())});
  write_csv(join_path(out_dir, "fairness_summary.csv"), summary);
  std::cout << "fairness: wrote " << out.rows.size() << " rows to " << out_dir << "\n";
  return kExitOk;
}

// ---------------- train / eval ----------------

int run_train(const Config& cfg, const std::string& out_dir) {
  consume_run_keys(cfg);
  const std::vector<int> seeds = run_seeds(cfg, {0});
  const uint64_t seed = static_cast<uint64_t>(seeds.front());
  DataBundle bundle = build_data(cfg, seed);
  PriorChoice prior = parse_prior_choice(cfg);
  const double prior_spread = cfg.get_double_or("model", "prior_spread", 1.0);
  LossConfig loss = parse_loss(cfg, 1.0, 0.0);
  NoiseSchedule sched = parse_schedule(cfg);
  TrainDefaults tdef;
  tdef.mode = prior.with_score ? "sfs" : "analytic-vaub";
  ModelSpec arch = parse_arch(cfg, {2, false});
  TrainConfig tcfg = parse_train(cfg, tdef, loss, sched, seed);
  cfg.require_all_consumed();

  if (prior.with_score && tcfg.mode == EncoderGradMode::analytic_vaub)
    throw std::invalid_argument("config: score prior needs [train] mode sfs or lsgm");
  if (!prior.with_score && tcfg.mode != EncoderGradMode::analytic_vaub)
    throw std::invalid_argument("config: analytic prior needs [train] mode analytic-vaub");

  ModelSpec mspec = arch;
  mspec.domains = bundle.data.num_domains();
  mspec.x_dim = bundle.data.feature_dim;
  mspec.with_score = prior.with_score;
  mspec.prior_components = prior.components;
  mspec.prior_spread = prior_spread;
  Model model = build_model(mspec, sched, hash_mix(seed, 0x747261));

  TrainHooks hooks;
  if (bundle.reference) hooks.nll_reference = &*bundle.reference;
  RunTrace trace = alternate_train(model, bundle.data, tcfg, hooks);

  write_csv(join_path(out_dir, "trace.csv"), trace_to_csv(trace, cfg.hash()));
  save_checkpoint(join_path(out_dir, "model.ckpt"), model.named_entries());
  std::vector<Tensor> latents = encode_dataset(model.encoder, bundle.data);
  write_latents_csv(join_path(out_dir, "latents_train.csv"), bundle.data, latents, cfg.hash());

  if (trace.diverged()) {
    std::cout << "train: diverged at step " << *trace.diverged_step << " (" << trace.note
              << ")\n";
    return kExitDiverged;
  }
  std::cout << "train: " << trace.rows.size() << " steps, artifacts in " << out_dir << "\n";
  return kExitOk;
}

int run_eval(const Config& cfg, const std::string& out_dir) {
  consume_run_keys(cfg);
  const std::vector<int> seeds = run_seeds(cfg, {0});
  const uint64_t seed = static_cast<uint64_t>(seeds.front());
  const std::string ckpt_path = cfg.get_string("eval", "checkpoint");
  DataBundle bundle = build_data(cfg, seed);
  PriorChoice prior = parse_prior_choice(cfg);
  const double prior_spread = cfg.get_double_or("model", "prior_spread", 1.0);
  NoiseSchedule sched = parse_schedule(cfg);
  ModelSpec arch = parse_arch(cfg, {2, false});
  AurocOptions aopts;
  aopts.folds = cfg.get_int_or("auroc", "folds", 5);
  aopts.max_samples = cfg.get_int_or("auroc", "max_samples", 600);
  aopts.seed = seed;
  cfg.require_all_consumed();

  ModelSpec mspec = arch;
  mspec.domains = bundle.data.num_domains();
  mspec.x_dim = bundle.data.feature_dim;
  mspec.with_score = prior.with_score;
  mspec.prior_components = prior.components;
  mspec.prior_spread = prior_spread;
  Model model = build_model(mspec, sched, 0);
  model.restore(load_checkpoint(ckpt_path));

  std::vector<Tensor> latents = encode_dataset(model.encoder, bundle.data);
  write_latents_csv(join_path(out_dir, "latents.csv"), bundle.data, latents, cfg.hash());

  CsvTable metrics;
  metrics.comments = standard_comments(cfg.hash());
  metrics.columns = {"metric", "value"};
  metrics.rows.push_back({"n_total", std::to_string(bundle.data.total())});
  metrics.rows.push_back({"feature_dim", std::to_string(bundle.data.feature_dim)});
  metrics.rows.push_back({"latent_dim", std::to_string(model.encoder.latent_dim())});

  std::vector<int> labels;
  std::vector<Tensor> parts;
  for (int d = 0; d < bundle.data.num_domains(); ++d) {
    labels.insert(labels.end(), bundle.data.domains[d].labels.begin(),
                  bundle.data.domains[d].labels.end());
    parts.push_back(latents[d]);
  }
  Tensor all = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) {
    Tensor merged(all.rows() + parts[i].rows(), all.cols());
    for (int r = 0; r < all.rows(); ++r)
      for (int c = 0; c < all.cols(); ++c) merged.at(r, c) = all.at(r, c);
    for (int r = 0; r < parts[i].rows(); ++r)
      for (int c = 0; c < all.cols(); ++c) merged.at(all.rows() + r, c) = parts[i].at(r, c);
    all = std::move(merged);
  }
  bool has_both = false, has_zero = false, has_one = false;
  for (int l : labels) {
    has_zero = has_zero || l == 0;
    has_one = has_one || l == 1;
  }
  has_both = has_zero && has_one;
  metrics.rows.push_back(
      {"auroc", has_both ? format_double(auroc_separation(all, labels, aopts).auroc) : "nan"});
  metrics.rows.push_back(
      {"nll_reference",
       bundle.reference ? format_double(nll_under_prior(all, *bundle.reference)) : "nan"});
  write_csv(join_path(out_dir, "metrics.csv"), metrics);
  std::cout << "eval: metrics in " << out_dir << "\n";
  return kExitOk;
}

// ---------------- plotdata ----------------

int run_plotdata(const Config& cfg, const std::string& out_dir) {
  consume_run_keys(cfg);
  const std::vector<std::string> inputs = cfg.get_string_list_or("plotdata", "inputs", {});
  const std::vector<std::string> columns = cfg.get_string_list_or("plotdata", "columns", {});
  const std::string id_column = cfg.get_string_or("plotdata", "id_column", "step");
  const std::string output = cfg.get_string_or("plotdata", "output", "plot_data.csv");
  cfg.require_all_consumed();
  if (inputs.empty()) throw std::invalid_argument("config: [plotdata] inputs required");
  if (columns.empty()) throw std::invalid_argument("config: [plotdata] columns required");

  // per column, per id: values across inputs that contain the id
  std::vector<std::map<double, std::vector<double>>> series(columns.size());
  for (const std::string& path : inputs) {
    CsvTable t = read_csv(path);
    std::vector<double> ids = column_values(t, id_column);
    for (size_t c = 0; c < columns.size(); ++c) {
      std::vector<double> vals = column_values(t, columns[c]);
      for (size_t r = 0; r < ids.size(); ++r) series[c][ids[r]].push_back(vals[r]);
    }
  }

  std::map<double, bool> all_ids;
  for (const auto& s : series)
    for (const auto& [id, vals] : s) all_ids[id] = true;

  CsvTable out;
  out.comments = standard_comments(
      cfg.hash(), "aggregated over " + std::to_string(inputs.size()) +
                      " input file(s); std is population std; log10 empty unless mean > 0");
  out.columns = {id_column};
  for (const std::string& c : columns) {
    out.columns.push_back(c + "_mean");
    out.columns.push_back(c + "_std");
    out.columns.push_back(c + "_log10");
  }
  for (const auto& [id, unused] : all_ids) {
    std::vector<std::string> row = {format_double(id)};
    for (size_t c = 0; c < columns.size(); ++c) {
      auto it = series[c].find(id);
      const std::vector<double> empty;
      const std::vector<double>& vals = it == series[c].end() ? empty : it->second;
      const double m = mean_of(vals);
      row.push_back(format_double(m));
      row.push_back(format_double(pop_std(vals)));
      row.push_back(m > 0 ? format_double(std::log10(m)) : "");
    }
    out.rows.push_back(std::move(row));
  }
  write_csv(join_path(out_dir, output), out);
  std::cout << "plotdata: aggregated " << inputs.size() << " file(s) into " << output << "\n";
  return kExitOk;
}

// ---------------- dispatch ----------------

std::string resolve_out_dir(const Config& cfg, const std::string& experiment,
                            const std::string& out_override) {
  std::string dir = !out_override.empty()
                        ? out_override
                        : cfg.get_string_or("run", "out_dir", "out/" + experiment);
  fs::path p(dir);
  if (p.is_relative()) {
    const char* root = std::getenv(kOutRootEnv);
    if (root && *root) p = fs::path(root) / p;
  }
  fs::create_directories(p);
  return p.string();
}

int run_experiment(const std::string& name, Config config, const std::string& out_override,
                   std::optional<std::uint64_t> seed_override) {
  try {
    const std::string declared = config.get_string_or("run", "experiment", name);
    if (declared != name)
      throw std::invalid_argument("config declares experiment '" + declared +
                                  "' but the command is '" + name + "'");
    if (seed_override) config.set("run", "seeds", std::to_string(*seed_override));
    const std::string out_dir = resolve_out_dir(config, name, out_override);
    if (name == "gradcheck") return run_gradcheck(config, out_dir);
    if (name == "stability") return run_stability(config, out_dir);
    if (name == "separation") return run_separation(config, out_dir);
    if (name == "fairness") return run_fairness(config, out_dir);
    if (name == "train") return run_train(config, out_dir);
    if (name == "eval") return run_eval(config, out_dir);
    if (name == "plotdata") return run_plotdata(config, out_dir);
    throw std::invalid_argument("unknown experiment '" + name + "'");
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const NonFiniteError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace dmatch
