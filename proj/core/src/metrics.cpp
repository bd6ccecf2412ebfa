#include "dmatch/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dmatch/adam.hpp"
#include "dmatch/autodiff.hpp"
#include "dmatch/rng.hpp"

namespace dmatch {

namespace {

std::vector<double> tie_averaged_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&values](int a, int b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

void check_binary(const std::vector<int>& labels, const char* who) {
  for (int v : labels)
    if (v != 0 && v != 1) throw std::invalid_argument(std::string(who) + ": labels must be 0/1");
}

}  // namespace

double rank_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("rank_auroc: size mismatch or empty input");
  check_binary(labels, "rank_auroc");
  for (double s : scores)
    if (!std::isfinite(s)) throw std::invalid_argument("rank_auroc: non-finite score");
  const std::vector<double> ranks = tie_averaged_ranks(scores);
  double pos_rank_sum = 0.0;
  long long n_pos = 0;
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) {
      pos_rank_sum += ranks[i];
      ++n_pos;
    }
  const long long n_neg = static_cast<long long>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("rank_auroc: single-class input");
  // Mann-Whitney U from the positive rank sum
  return (pos_rank_sum - 0.5 * n_pos * (n_pos + 1)) / (static_cast<double>(n_pos) * n_neg);
}

namespace {

// Cholesky solve of (K + lambda I) alpha = y for SPD K.
std::vector<double> solve_spd(std::vector<std::vector<double>> a, std::vector<double> y) {
  const int n = static_cast<int>(y.size());
  // in-place lower Cholesky
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (int k = 0; k < j; ++k) s -= a[i][k] * a[j][k];
      if (i == j) {
        if (s <= 0) throw std::runtime_error("solve_spd: matrix not positive definite");
        a[i][i] = std::sqrt(s);
      } else {
        a[i][j] = s / a[j][j];
      }
    }
  }
  // L w = y
  for (int i = 0; i < n; ++i) {
    double s = y[i];
    for (int k = 0; k < i; ++k) s -= a[i][k] * y[k];
    y[i] = s / a[i][i];
  }
  // L^T alpha = w
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int k = i + 1; k < n; ++k) s -= a[k][i] * y[k];
    y[i] = s / a[i][i];
  }
  return y;
}

double sq_dist(const Tensor& x, int i, int j) {
  double s = 0.0;
  for (int c = 0; c < x.cols(); ++c) {
    const double d = x.at(i, c) - x.at(j, c);
    s += d * d;
  }
  return s;
}

// Round-robin deal of shuffled per-class indices into folds, so every fold
// gets both classes whenever each class has >= folds members.
std::vector<int> stratified_fold_assignment(const std::vector<int>& labels, int folds, Rng& rng) {
  std::vector<int> fold_of(labels.size(), -1);
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<int> members;
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(static_cast<int>(i));
    std::vector<int> perm = rng.permutation(static_cast<int>(members.size()));
    for (size_t j = 0; j < members.size(); ++j)
      fold_of[members[perm[j]]] = static_cast<int>(j) % folds;
  }
  return fold_of;
}

}  // namespace

AurocReport auroc_separation(const Tensor& latents, const std::vector<int>& labels,
                             const AurocOptions& opts) {
  if (latents.rows() != static_cast<int>(labels.size()))
    throw std::invalid_argument("auroc_separation: row/label count mismatch");
  check_binary(labels, "auroc_separation");
  if (opts.folds < 2) throw std::invalid_argument("auroc_separation: folds must be >= 2");
  if (opts.c_grid.empty() || opts.gamma_grid.empty())
    throw std::invalid_argument("auroc_separation: empty grid");

  Rng rng(hash_mix(opts.seed, 0x61757263));

  // stratified cap
  Tensor x = latents;
  std::vector<int> y = labels;
  if (opts.max_samples > 0 && latents.rows() > opts.max_samples) {
    std::vector<int> keep;
    for (int cls = 0; cls <= 1; ++cls) {
      std::vector<int> members;
      for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == cls) members.push_back(static_cast<int>(i));
      int quota = static_cast<int>(std::llround(
          static_cast<double>(opts.max_samples) * members.size() / labels.size()));
      quota = std::max(1, std::min<int>(quota, static_cast<int>(members.size())));
      std::vector<int> perm = rng.permutation(static_cast<int>(members.size()));
      for (int j = 0; j < quota; ++j) keep.push_back(members[perm[j]]);
    }
    std::sort(keep.begin(), keep.end());
    x = gather_rows(latents, keep);
    y.clear();
    for (int i : keep) y.push_back(labels[i]);
  }

  const int n = x.rows();
  int min_class = n;
  for (int cls = 0; cls <= 1; ++cls) {
    int count = 0;
    for (int v : y) count += (v == cls) ? 1 : 0;
    min_class = std::min(min_class, count);
  }
  if (min_class < 2) throw std::invalid_argument("auroc_separation: need >= 2 samples per class");
  const int folds = std::min(opts.folds, min_class);

  const std::vector<int> fold_of = stratified_fold_assignment(y, folds, rng);

  // squared distances once; every (C, gamma) cell reuses them
  std::vector<std::vector<double>> d2(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) d2[i][j] = d2[j][i] = sq_dist(x, i, j);

  AurocReport best;
  best.auroc = -1.0;
  for (double c : opts.c_grid) {
    for (double gamma : opts.gamma_grid) {
      const double lambda = 1.0 / c;
      std::vector<double> fold_scores;
      for (int f = 0; f < folds; ++f) {
        std::vector<int> tr, te;
        for (int i = 0; i < n; ++i) (fold_of[i] == f ? te : tr).push_back(i);
        const int ntr = static_cast<int>(tr.size());
        std::vector<std::vector<double>> k(ntr, std::vector<double>(ntr));
        for (int i = 0; i < ntr; ++i) {
          for (int j = 0; j < ntr; ++j) k[i][j] = std::exp(-gamma * d2[tr[i]][tr[j]]);
          k[i][i] += lambda;
        }
        std::vector<double> target(ntr);
        for (int i = 0; i < ntr; ++i) target[i] = y[tr[i]] == 1 ? 1.0 : -1.0;
        std::vector<double> alpha = solve_spd(std::move(k), std::move(target));
        std::vector<double> decision(te.size());
        std::vector<int> te_labels(te.size());
        for (size_t i = 0; i < te.size(); ++i) {
          double s = 0.0;
          for (int j = 0; j < ntr; ++j) s += alpha[j] * std::exp(-gamma * d2[te[i]][tr[j]]);
          decision[i] = s;
          te_labels[i] = y[te[i]];
        }
        fold_scores.push_back(rank_auroc(decision, te_labels));
      }
      const double mean_score =
          std::accumulate(fold_scores.begin(), fold_scores.end(), 0.0) / fold_scores.size();
      if (mean_score > best.auroc) {
        best.auroc = mean_score;
        best.best_c = c;
        best.best_gamma = gamma;
        best.fold_scores = fold_scores;
      }
    }
  }
  return best;
}

double knn_auroc(const Tensor& latents, const std::vector<int>& labels, int k) {
  const int n = latents.rows();
  if (n != static_cast<int>(labels.size()) || n < 3)
    throw std::invalid_argument("knn_auroc: bad input sizes");
  check_binary(labels, "knn_auroc");
  k = std::min(k, n - 1);
  if (k < 1) throw std::invalid_argument("knn_auroc: k must be >= 1");
  std::vector<double> scores(n);
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) dist[j] = {sq_dist(latents, i, j), j};
    dist[i].first = std::numeric_limits<double>::infinity();  // exclude self
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    int pos = 0;
    for (int j = 0; j < k; ++j) pos += labels[dist[j].second];
    scores[i] = static_cast<double>(pos) / k;
  }
  return rank_auroc(scores, labels);
}

double nll_under_prior(const Tensor& latents, const AnalyticPrior& prior) {
  if (latents.cols() != prior.dim())
    throw std::invalid_argument("nll_under_prior: dimension mismatch");
  if (latents.rows() < 1) throw std::invalid_argument("nll_under_prior: empty input");
  Tensor ld = prior.log_density(latents);
  double acc = 0.0;
  for (int i = 0; i < ld.rows(); ++i) acc += ld.at(i, 0);
  return -acc / ld.rows();
}

double dp_gap(const std::vector<int>& predictions, const std::vector<int>& protected_attr) {
  if (predictions.size() != protected_attr.size() || predictions.empty())
    throw std::invalid_argument("dp_gap: size mismatch or empty input");
  check_binary(predictions, "dp_gap");
  check_binary(protected_attr, "dp_gap");
  double sum[2] = {0, 0};
  int count[2] = {0, 0};
  for (size_t i = 0; i < predictions.size(); ++i) {
    sum[protected_attr[i]] += predictions[i];
    count[protected_attr[i]] += 1;
  }
  if (count[0] == 0 || count[1] == 0) throw std::invalid_argument("dp_gap: empty protected group");
  return std::fabs(sum[0] / count[0] - sum[1] / count[1]);
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size() || predictions.empty())
    throw std::invalid_argument("accuracy: size mismatch or empty input");
  int hits = 0;
  for (size_t i = 0; i < predictions.size(); ++i) hits += (predictions[i] == labels[i]) ? 1 : 0;
  return static_cast<double>(hits) / predictions.size();
}

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman_rho: need two same-length series");
  const std::vector<double> ra = tie_averaged_ranks(a);
  const std::vector<double> rb = tie_averaged_ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0 || vb == 0) throw std::invalid_argument("spearman_rho: constant series");
  return cov / std::sqrt(va * vb);
}

std::vector<double> TrainedClassifier::decision_values(const Tensor& x) const {
  Tensor f = net.forward_value(x);
  std::vector<double> out(f.rows());
  for (int i = 0; i < f.rows(); ++i) out[i] = f.at(i, 0);
  return out;
}

std::vector<int> TrainedClassifier::predict(const Tensor& x) const {
  std::vector<double> d = decision_values(x);
  std::vector<int> out(d.size());
  for (size_t i = 0; i < d.size(); ++i) out[i] = d[i] > 0 ? 1 : 0;
  return out;
}

TrainedClassifier train_mlp_classifier(const Tensor& x, const std::vector<int>& y,
                                       const ClassifierConfig& cfg) {
  if (x.rows() != static_cast<int>(y.size()) || x.rows() < 2)
    throw std::invalid_argument("train_mlp_classifier: bad input sizes");
  check_binary(y, "train_mlp_classifier");
  if (cfg.steps < 0 || cfg.batch_size < 1 || !(cfg.lr > 0))
    throw std::invalid_argument("train_mlp_classifier: bad config");

  Rng rng(hash_mix(cfg.seed, 0x636c66));
  TrainedClassifier clf{
      Mlp(make_mlp_spec(x.cols(), cfg.hidden, 1, cfg.layers, Activation::relu, 1.0), rng)};
  Adam opt(clf.net.parameters(), cfg.lr);
  const int batch = std::min(cfg.batch_size, x.rows());
  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<int> idx = rng.sample_indices(x.rows(), batch);
    Tensor xb = gather_rows(x, idx);
    Tensor ypm(batch, 1);
    for (int i = 0; i < batch; ++i) ypm.at(i, 0) = y[idx[i]] == 1 ? 1.0 : -1.0;
    Tape tape;
    BoundMlp net = clf.net.bind(tape, true);
    Var f = net.forward(tape.constant(xb));
    Var loss = mean(softplus(neg(mul(tape.constant(ypm), f))));
    tape.backward(loss);
    std::vector<Tensor> grads;
    for (const Var& v : net.param_vars()) grads.push_back(v.grad());
    opt.step(grads);
  }
  return clf;
}

}  // namespace dmatch
