#include "dmatch/priors.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dmatch {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

void check_component(const Tensor& mean, const Tensor& var, int dim) {
  if (mean.rows() != 1 || mean.cols() != dim)
    throw std::invalid_argument("prior: component mean must be 1 x dim");
  if (var.rows() != 1 || var.cols() != dim)
    throw std::invalid_argument("prior: component var must be 1 x dim");
  for (double v : var.values())
    if (!(v > 0)) throw std::invalid_argument("prior: variances must be positive");
}

// log N(z_row; mean, diag var)
double gaussian_logpdf_row(const Tensor& z, int row, const Tensor& mean, const Tensor& var) {
  double acc = 0.0;
  for (int j = 0; j < z.cols(); ++j) {
    const double d = z.at(row, j) - mean.at(0, j);
    acc += d * d / var.at(0, j) + std::log(var.at(0, j)) + kLog2Pi;
  }
  return -0.5 * acc;
}

}  // namespace

AnalyticPrior AnalyticPrior::gaussian(Tensor mean, Tensor var) {
  AnalyticPrior p;
  p.dim_ = mean.cols();
  check_component(mean, var, p.dim_);
  p.weights_ = {1.0};
  p.means_.push_back(std::move(mean));
  p.vars_.push_back(std::move(var));
  return p;
}

AnalyticPrior AnalyticPrior::standard_normal(int dim) {
  return gaussian(Tensor(1, dim), Tensor::full(1, dim, 1.0));
}

AnalyticPrior AnalyticPrior::mixture(std::vector<double> weights, std::vector<Tensor> means,
                                     std::vector<Tensor> vars) {
  if (weights.empty() || weights.size() != means.size() || weights.size() != vars.size())
    throw std::invalid_argument("AnalyticPrior::mixture: component count mismatch");
  AnalyticPrior p;
  p.dim_ = means[0].cols();
  double wsum = 0.0;
  for (size_t k = 0; k < weights.size(); ++k) {
    if (!(weights[k] > 0)) throw std::invalid_argument("AnalyticPrior::mixture: weights must be positive");
    wsum += weights[k];
    check_component(means[k], vars[k], p.dim_);
  }
  if (std::fabs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("AnalyticPrior::mixture: weights must sum to 1 (got " +
                                std::to_string(wsum) + ")");
  p.weights_ = std::move(weights);
  p.means_ = std::move(means);
  p.vars_ = std::move(vars);
  return p;
}

Tensor AnalyticPrior::log_density(const Tensor& z) const {
  if (z.cols() != dim_) throw std::invalid_argument("AnalyticPrior::log_density: dim mismatch");
  Tensor out(z.rows(), 1);
  for (int i = 0; i < z.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> lk(components());
    for (int k = 0; k < components(); ++k) {
      lk[k] = std::log(weights_[k]) + gaussian_logpdf_row(z, i, means_[k], vars_[k]);
      best = std::max(best, lk[k]);
    }
    double s = 0.0;
    for (double v : lk) s += std::exp(v - best);
    out.at(i, 0) = best + std::log(s);
  }
  return out;
}

Tensor AnalyticPrior::score(const Tensor& z) const {
  if (z.cols() != dim_) throw std::invalid_argument("AnalyticPrior::score: dim mismatch");
  Tensor out(z.rows(), dim_);
  for (int i = 0; i < z.rows(); ++i) {
    std::vector<double> lk(components());
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < components(); ++k) {
      lk[k] = std::log(weights_[k]) + gaussian_logpdf_row(z, i, means_[k], vars_[k]);
      best = std::max(best, lk[k]);
    }
    double norm = 0.0;
    for (double v : lk) norm += std::exp(v - best);
    for (int k = 0; k < components(); ++k) {
      const double resp = std::exp(lk[k] - best) / norm;
      for (int j = 0; j < dim_; ++j)
        out.at(i, j) += resp * (-(z.at(i, j) - means_[k].at(0, j)) / vars_[k].at(0, j));
    }
  }
  return out;
}

namespace {

// -0.5 * sum_j [(z_j - m_j)^2 / v_j + log(2 pi v_j)] as a graph over z.
Var gaussian_log_density_graph(Var z, Var mean, Var var, Var log_var_term) {
  Var diff = sub(z, mean);
  Var quad = div(square(diff), var);
  Var per_dim = add(quad, log_var_term);
  return scale(sum(per_dim, 1), -0.5);
}

// log-sum-exp over the rows of a KxB stack, with a constant shift taken from
// the forward values; the shift cancels in the derivative.
Var logsumexp_rows(Tape& tape, Var stacked) {
  Var shift = tape.constant(colwise_max(stacked.value()));  // 1 x B
  Var s = sum(exp(sub(stacked, shift)), 0);                 // 1 x B
  return add(log(s), shift);
}

}  // namespace

Var AnalyticPrior::log_density_on(Tape& tape, Var z) const {
  if (z.value().cols() != dim_)
    throw std::invalid_argument("AnalyticPrior::log_density_on: dim mismatch");
  std::vector<Var> rows;
  for (int k = 0; k < components(); ++k) {
    Tensor log_var_row(1, dim_);
    for (int j = 0; j < dim_; ++j) log_var_row.at(0, j) = std::log(vars_[k].at(0, j)) + kLog2Pi;
    Var comp = gaussian_log_density_graph(z, tape.constant(means_[k]), tape.constant(vars_[k]),
                                          tape.constant(log_var_row));
    if (!is_mixture()) return comp;
    rows.push_back(transpose(comp) + std::log(weights_[k]));  // 1 x B
  }
  return transpose(logsumexp_rows(tape, concat_rows(rows)));
}

Tensor AnalyticPrior::sample(int n, Rng& rng) const {
  Tensor out(n, dim_);
  for (int i = 0; i < n; ++i) {
    int k = 0;
    if (is_mixture()) {
      const double u = rng.uniform();
      double acc = 0.0;
      for (int c = 0; c < components(); ++c) {
        acc += weights_[c];
        if (u < acc || c == components() - 1) {
          k = c;
          break;
        }
      }
    }
    for (int j = 0; j < dim_; ++j)
      out.at(i, j) = means_[k].at(0, j) + std::sqrt(vars_[k].at(0, j)) * rng.normal();
  }
  return out;
}

Tensor AnalyticPrior::moment_mean() const {
  Tensor m(1, dim_);
  for (int k = 0; k < components(); ++k)
    for (int j = 0; j < dim_; ++j) m.at(0, j) += weights_[k] * means_[k].at(0, j);
  return m;
}

Tensor AnalyticPrior::moment_var() const {
  Tensor m = moment_mean();
  Tensor v(1, dim_);
  for (int k = 0; k < components(); ++k)
    for (int j = 0; j < dim_; ++j)
      v.at(0, j) += weights_[k] * (vars_[k].at(0, j) + means_[k].at(0, j) * means_[k].at(0, j));
  for (int j = 0; j < dim_; ++j) v.at(0, j) -= m.at(0, j) * m.at(0, j);
  return v;
}

ScoreFn AnalyticPrior::score_provider() const {
  AnalyticPrior copy = *this;
  return [copy](const Tensor& z, double) { return copy.score(z); };
}

// ---- learnable prior ----

LearnableAnalyticPrior LearnableAnalyticPrior::gaussian(int dim) {
  LearnableAnalyticPrior p;
  p.dim_ = dim;
  p.k_ = 1;
  p.means_.push_back(Tensor(1, dim));
  p.log_vars_.push_back(Tensor(1, dim));
  p.weight_logits_ = Tensor(1, 1);
  return p;
}

LearnableAnalyticPrior LearnableAnalyticPrior::mixture(int k, int dim, double mean_spread,
                                                       Rng& rng) {
  if (k < 1) throw std::invalid_argument("LearnableAnalyticPrior::mixture: k must be >= 1");
  LearnableAnalyticPrior p;
  p.dim_ = dim;
  p.k_ = k;
  for (int c = 0; c < k; ++c) {
    Tensor m = rng.normal_tensor(1, dim);
    for (int j = 0; j < dim; ++j) m.at(0, j) *= mean_spread;
    p.means_.push_back(std::move(m));
    p.log_vars_.push_back(Tensor(1, dim));
  }
  p.weight_logits_ = Tensor(1, k);
  return p;
}

std::vector<Tensor*> LearnableAnalyticPrior::parameters() {
  std::vector<Tensor*> out;
  for (int c = 0; c < k_; ++c) {
    out.push_back(&means_[c]);
    out.push_back(&log_vars_[c]);
  }
  out.push_back(&weight_logits_);
  return out;
}

std::vector<std::string> LearnableAnalyticPrior::parameter_names() const {
  std::vector<std::string> out;
  for (int c = 0; c < k_; ++c) {
    out.push_back("prior.mean" + std::to_string(c));
    out.push_back("prior.logvar" + std::to_string(c));
  }
  out.push_back("prior.logits");
  return out;
}

BoundLearnablePrior::BoundLearnablePrior(Tape& tape, const LearnableAnalyticPrior& prior,
                                         bool trainable)
    : tape_(&tape), dim_(prior.dim_), k_(prior.k_) {
  if (dim_ == 0) throw std::logic_error("LearnableAnalyticPrior: default constructed");
  for (int c = 0; c < k_; ++c) {
    means_.push_back(tape.leaf(prior.means_[c], trainable));
    log_vars_.push_back(tape.leaf(prior.log_vars_[c], trainable));
    param_vars_.push_back(means_.back());
    param_vars_.push_back(log_vars_.back());
  }
  logits_ = tape.leaf(prior.weight_logits_, trainable);
  param_vars_.push_back(logits_);
}

Var BoundLearnablePrior::log_density(Var z) const {
  if (z.value().cols() != dim_)
    throw std::invalid_argument("BoundLearnablePrior::log_density: dim mismatch");
  Tape& tape = *tape_;
  // log softmax of the weight logits, shifted by the current max
  const Tensor& logit_vals = logits_.value();
  double mx = logit_vals.at(0, 0);
  for (int c = 1; c < k_; ++c) mx = std::max(mx, logit_vals.at(0, c));
  Var shift = tape.constant(Tensor::scalar(mx));
  Var lse = add(log(sum(exp(sub(logits_, shift)))), shift);  // 1x1
  Var log_w = sub(logits_, lse);                             // 1 x k

  std::vector<Var> rows;
  for (int c = 0; c < k_; ++c) {
    Var var_v = exp(log_vars_[c]);
    Var log_var_term = add(log_vars_[c], tape.constant(Tensor::scalar(kLog2Pi)));
    Var comp = gaussian_log_density_graph(z, means_[c], var_v, log_var_term);  // B x 1
    if (k_ == 1) return comp;
    rows.push_back(add(transpose(comp), slice_cols(log_w, c, 1)));  // 1 x B
  }
  return transpose(logsumexp_rows(tape, concat_rows(rows)));
}

BoundLearnablePrior LearnableAnalyticPrior::bind(Tape& tape, bool trainable) const {
  return BoundLearnablePrior(tape, *this, trainable);
}

Var LearnableAnalyticPrior::log_density_on(Tape& tape, Var z, bool trainable) const {
  return bind(tape, trainable).log_density(z);
}

AnalyticPrior LearnableAnalyticPrior::snapshot() const {
  if (dim_ == 0) throw std::logic_error("LearnableAnalyticPrior: default constructed");
  std::vector<double> w(k_);
  double mx = weight_logits_.at(0, 0);
  for (int c = 1; c < k_; ++c) mx = std::max(mx, weight_logits_.at(0, c));
  double norm = 0.0;
  for (int c = 0; c < k_; ++c) {
    w[c] = std::exp(weight_logits_.at(0, c) - mx);
    norm += w[c];
  }
  double acc = 0.0;
  for (int c = 0; c < k_; ++c) {
    w[c] /= norm;
    acc += w[c];
  }
  w[k_ - 1] += 1.0 - acc;  // force exact unit sum against rounding
  std::vector<Tensor> means = means_, vars;
  for (int c = 0; c < k_; ++c) {
    Tensor v(1, dim_);
    for (int j = 0; j < dim_; ++j) v.at(0, j) = std::exp(log_vars_[c].at(0, j));
    vars.push_back(std::move(v));
  }
  if (k_ == 1) return AnalyticPrior::gaussian(means[0], vars[0]);
  return AnalyticPrior::mixture(w, means, vars);
}

// ---- running moments and blending ----

void RunningMoments::reset(Tensor mean_init, Tensor var_init) {
  mean = std::move(mean_init);
  var = std::move(var_init);
  initialized = true;
}

void RunningMoments::update(const Tensor& batch, double momentum) {
  if (batch.rows() < 1) throw std::invalid_argument("RunningMoments::update: empty batch");
  const int d = batch.cols();
  Tensor bm(1, d), bv(1, d);
  for (int j = 0; j < d; ++j) {
    double m = 0.0;
    for (int i = 0; i < batch.rows(); ++i) m += batch.at(i, j);
    m /= batch.rows();
    double v = 0.0;
    for (int i = 0; i < batch.rows(); ++i) {
      const double c = batch.at(i, j) - m;
      v += c * c;
    }
    v = batch.rows() > 1 ? v / batch.rows() : 1.0;
    bm.at(0, j) = m;
    bv.at(0, j) = std::max(v, 1e-8);
  }
  if (!initialized) {
    reset(std::move(bm), std::move(bv));
    return;
  }
  for (int j = 0; j < d; ++j) {
    mean.at(0, j) = (1.0 - momentum) * mean.at(0, j) + momentum * bm.at(0, j);
    var.at(0, j) = (1.0 - momentum) * var.at(0, j) + momentum * bv.at(0, j);
  }
}

BlendedScorePrior::BlendedScorePrior(ScoreFn network, int dim, double alpha, double sigma_min,
                                     double sigma_max)
    : network_(std::move(network)), alpha_(alpha), sigma_min_(sigma_min), sigma_max_(sigma_max) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("BlendedScorePrior: alpha must be in [0, 1]");
  if (!(sigma_min > 0) || !(sigma_max >= sigma_min))
    throw std::invalid_argument("BlendedScorePrior: need 0 < sigma_min <= sigma_max");
  moments_.reset(Tensor(1, dim), Tensor::full(1, dim, 1.0));
}

void BlendedScorePrior::set_fallback(Tensor mean, Tensor var) {
  moments_.reset(std::move(mean), std::move(var));
}

void BlendedScorePrior::update_fallback(const Tensor& z_batch, double momentum) {
  moments_.update(z_batch, momentum);
}

Tensor BlendedScorePrior::blended_score(const Tensor& z, double sigma) const {
  if (!network_) throw std::logic_error("BlendedScorePrior: default constructed");
  const double sc = std::min(sigma_max_, std::max(sigma_min_, sigma));
  Tensor net = network_(z, sc);
  if (!net.same_shape(z)) throw std::logic_error("BlendedScorePrior: provider shape mismatch");
  Tensor out(z.rows(), z.cols());
  for (int i = 0; i < z.rows(); ++i)
    for (int j = 0; j < z.cols(); ++j) {
      const double gauss =
          -(z.at(i, j) - moments_.mean.at(0, j)) / (moments_.var.at(0, j) + sc * sc);
      out.at(i, j) = (1.0 - alpha_) * net.at(i, j) + alpha_ * gauss;
    }
  return out;
}

ScoreFn BlendedScorePrior::provider() const {
  const BlendedScorePrior* self = this;
  return [self](const Tensor& z, double sigma) { return self->blended_score(z, sigma); };
}

}  // namespace dmatch
