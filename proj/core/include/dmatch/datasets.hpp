#pragma once

#include <string>
#include <vector>

#include "dmatch/priors.hpp"
#include "dmatch/rng.hpp"
#include "dmatch/tensor.hpp"

namespace dmatch {

struct DomainData {
  Tensor x;                // n x feature_dim
  std::vector<int> labels;
  std::vector<int> ids;    // global sample ids, stable across the dataset
};

struct LabeledDomainDataset {
  int feature_dim = 0;
  std::vector<DomainData> domains;

  int num_domains() const { return static_cast<int>(domains.size()); }
  int total() const;
};

LabeledDomainDataset single_domain_dataset(Tensor x);

// Two-domain nested D-shapes: per domain an outer D (label 0) and an inner D
// (label 1) sharing a center; domain 1 is the mirror image of domain 0,
// translated by `separation` along x. Each D is a semicircular arc closed by
// its diameter chord, sampled uniformly by arc length, plus isotropic noise.
struct NestedDSpec {
  int n_per_class = 100;
  double outer_radius = 2.0;
  double inner_radius = 1.0;
  double noise_std = 0.05;
  double separation = 6.0;
  uint64_t seed = 0;
};

LabeledDomainDataset gen_nested_d(const NestedDSpec& spec);

// Canonical building blocks, exposed so tests can couple the draws: sample a
// D-curve centered at the origin opening toward +x, and apply the per-domain
// placement (mirror for domain 1, then translate).
Tensor sample_d_curve(double radius, int n, double noise_std, Rng& rng);
Tensor place_d_points(const Tensor& canonical, int domain, const NestedDSpec& spec);
// Distance from a point to the ideal (noise-free) canonical D-curve.
double d_curve_distance(double radius, double px, double py);

// Mixture target with equally weighted components on a circle (dim >= 2) or
// evenly spaced on a segment (dim == 1), all with isotropic variance.
struct MogTargetSpec {
  int components = 5;
  int dim = 2;
  double spread = 2.0;         // circle radius / half segment length
  double component_var = 0.1;
  int n = 1000;
  uint64_t seed = 0;
};

struct MogTarget {
  Tensor samples;
  AnalyticPrior prior;
};

MogTarget gen_mog_target(const MogTargetSpec& spec);

// ---- tabular ingestion ----

struct TabularSchema {
  std::string label_column;
  std::string protected_column;
  std::string split_column;     // optional; cells must be "train" or "test"
  double train_fraction = 0.7;  // used only when split_column is empty
  uint64_t split_seed = 0;
};

struct TabularTask {
  Tensor x_train, x_test;  // one-hot expanded, continuous columns z-scored on train stats
  std::vector<int> y_train, y_test;
  std::vector<int> a_train, a_test;  // protected attribute, binary
  std::vector<std::string> feature_names;

  // Domains keyed by the protected attribute; ids index into the train split.
  LabeledDomainDataset train_by_domain() const;
};

// Strict CSV ingestion: header row required, no quoting, empty cells rejected.
// A column is categorical iff any cell fails to parse as a number; categorical
// columns expand to one-hot indicators. Label and protected columns must be
// strictly binary 0/1.
TabularTask load_tabular_csv(const std::string& path, const TabularSchema& schema);

// Synthetic hiring-style task with a group-dependent label threshold: the
// label depends on a latent skill plus a protected-group offset, and two
// feature columns (one continuous, one categorical) leak the group.
struct BiasedTabularSpec {
  int n_train = 1600;
  int n_test = 800;
  double bias = 0.9;  // group offset added to the label threshold
  uint64_t seed = 0;
};

void write_biased_tabular_csv(const std::string& path, const BiasedTabularSpec& spec);

TabularSchema biased_tabular_schema();

// ---- embedding tables for the precomputed-metric hook ----

// Text format: '# comment' lines, then "dim <d>", then "<id> v1 .. vd" rows.
struct EmbeddingTable {
  int dim = 0;
  std::vector<int> ids;
  Tensor rows;

  // Row lookup by sample id; throws if an id is missing.
  Tensor gather(const std::vector<int>& sample_ids) const;
};

EmbeddingTable load_embedding_table(const std::string& path);
void write_embedding_table(const std::string& path, const EmbeddingTable& table);

}  // namespace dmatch
