#include "dmatch/datasets.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace dmatch {

int LabeledDomainDataset::total() const {
  int n = 0;
  for (const auto& d : domains) n += d.x.rows();
  return n;
}

LabeledDomainDataset single_domain_dataset(Tensor x) {
  LabeledDomainDataset ds;
  ds.feature_dim = x.cols();
  DomainData d;
  d.labels.assign(x.rows(), 0);
  d.ids.resize(x.rows());
  for (int i = 0; i < x.rows(); ++i) d.ids[i] = i;
  d.x = std::move(x);
  ds.domains.push_back(std::move(d));
  return ds;
}

Tensor sample_d_curve(double radius, int n, double noise_std, Rng& rng) {
  if (!(radius > 0)) throw std::invalid_argument("sample_d_curve: radius must be positive");
  if (noise_std < 0) throw std::invalid_argument("sample_d_curve: negative noise");
  const double arc_len = std::numbers::pi * radius;
  const double total_len = arc_len + 2.0 * radius;
  Tensor out(n, 2);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform(0.0, total_len);
    double px, py;
    if (u < arc_len) {
      const double phi = -std::numbers::pi / 2.0 + u / radius;
      px = radius * std::cos(phi);
      py = radius * std::sin(phi);
    } else {
      px = 0.0;
      py = -radius + (u - arc_len);
    }
    out.at(i, 0) = px + noise_std * rng.normal();
    out.at(i, 1) = py + noise_std * rng.normal();
  }
  return out;
}

Tensor place_d_points(const Tensor& canonical, int domain, const NestedDSpec& spec) {
  if (canonical.cols() != 2) throw std::invalid_argument("place_d_points: points must be 2-D");
  if (domain != 0 && domain != 1) throw std::invalid_argument("place_d_points: domain must be 0 or 1");
  Tensor out = canonical;
  const double offset = spec.separation / 2.0;
  for (int i = 0; i < out.rows(); ++i) {
    if (domain == 0)
      out.at(i, 0) = canonical.at(i, 0) - offset;
    else
      out.at(i, 0) = -canonical.at(i, 0) + offset;
  }
  return out;
}

double d_curve_distance(double radius, double px, double py) {
  // arc: right semicircle of radius r
  const double norm = std::hypot(px, py);
  double arc_dist;
  if (px >= 0.0) {
    arc_dist = std::fabs(norm - radius);
  } else {
    arc_dist = std::min(std::hypot(px, py - radius), std::hypot(px, py + radius));
  }
  // chord: x = 0, y in [-r, r]
  double chord_dist;
  if (std::fabs(py) <= radius)
    chord_dist = std::fabs(px);
  else
    chord_dist = std::hypot(px, std::fabs(py) - radius);
  return std::min(arc_dist, chord_dist);
}

LabeledDomainDataset gen_nested_d(const NestedDSpec& spec) {
  if (spec.n_per_class < 1) throw std::invalid_argument("gen_nested_d: n_per_class must be >= 1");
  if (!(spec.outer_radius > spec.inner_radius))
    throw std::invalid_argument("gen_nested_d: outer radius must exceed inner radius");
  LabeledDomainDataset ds;
  ds.feature_dim = 2;
  int next_id = 0;
  Rng root(spec.seed);
  for (int d = 0; d < 2; ++d) {
    Rng sub = root.fork(hash_mix(0xd5, d));
    Tensor outer = place_d_points(sample_d_curve(spec.outer_radius, spec.n_per_class,
                                                 spec.noise_std, sub),
                                  d, spec);
    Tensor inner = place_d_points(sample_d_curve(spec.inner_radius, spec.n_per_class,
                                                 spec.noise_std, sub),
                                  d, spec);
    DomainData dom;
    dom.x = Tensor(2 * spec.n_per_class, 2);
    for (int i = 0; i < spec.n_per_class; ++i) {
      dom.x.at(i, 0) = outer.at(i, 0);
      dom.x.at(i, 1) = outer.at(i, 1);
      dom.labels.push_back(0);
      dom.ids.push_back(next_id++);
    }
    for (int i = 0; i < spec.n_per_class; ++i) {
      dom.x.at(spec.n_per_class + i, 0) = inner.at(i, 0);
      dom.x.at(spec.n_per_class + i, 1) = inner.at(i, 1);
      dom.labels.push_back(1);
      dom.ids.push_back(next_id++);
    }
    ds.domains.push_back(std::move(dom));
  }
  return ds;
}

MogTarget gen_mog_target(const MogTargetSpec& spec) {
  if (spec.components < 1) throw std::invalid_argument("gen_mog_target: components must be >= 1");
  if (spec.dim < 1) throw std::invalid_argument("gen_mog_target: dim must be >= 1");
  if (!(spec.component_var > 0))
    throw std::invalid_argument("gen_mog_target: component_var must be positive");
  std::vector<double> weights(spec.components, 1.0 / spec.components);
  // nudge against accumulated rounding so the unit-sum invariant holds exactly
  double acc = 0.0;
  for (size_t i = 0; i + 1 < weights.size(); ++i) acc += weights[i];
  weights.back() = 1.0 - acc;

  std::vector<Tensor> means, vars;
  for (int c = 0; c < spec.components; ++c) {
    Tensor m(1, spec.dim);
    if (spec.dim == 1) {
      m.at(0, 0) = spec.components == 1
                       ? 0.0
                       : -spec.spread + 2.0 * spec.spread * c / (spec.components - 1);
    } else if (spec.components > 1) {
      const double theta = 2.0 * std::numbers::pi * c / spec.components;
      m.at(0, 0) = spec.spread * std::cos(theta);
      m.at(0, 1) = spec.spread * std::sin(theta);
    }
    means.push_back(std::move(m));
    vars.push_back(Tensor::full(1, spec.dim, spec.component_var));
  }
  MogTarget out{Tensor(), spec.components == 1
                              ? AnalyticPrior::gaussian(means[0], vars[0])
                              : AnalyticPrior::mixture(weights, means, vars)};
  Rng rng(spec.seed);
  out.samples = out.prior.sample(spec.n, rng);
  return out;
}

// ---- tabular ----

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size();
}

int parse_binary(const std::string& s, const std::string& column, int row) {
  double v;
  if (!parse_number(s, v) || (v != 0.0 && v != 1.0))
    throw std::invalid_argument("load_tabular_csv: column '" + column + "' row " +
                                std::to_string(row) + " must be 0 or 1, got '" + s + "'");
  return static_cast<int>(v);
}

}  // namespace

TabularTask load_tabular_csv(const std::string& path, const TabularSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_tabular_csv: cannot open " + path);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.size() < 2) throw std::invalid_argument("load_tabular_csv: need header plus data rows");

  const std::vector<std::string> header = rows[0];
  for (size_t i = 0; i < header.size(); ++i)
    for (size_t j = i + 1; j < header.size(); ++j)
      if (header[i] == header[j])
        throw std::invalid_argument("load_tabular_csv: duplicate column '" + header[i] + "'");

  auto col_index = [&](const std::string& name, bool required) -> int {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    if (required) throw std::invalid_argument("load_tabular_csv: missing column '" + name + "'");
    return -1;
  };
  const int label_col = col_index(schema.label_column, true);
  const int prot_col = col_index(schema.protected_column, true);
  const int split_col = schema.split_column.empty() ? -1 : col_index(schema.split_column, true);

  const int n = static_cast<int>(rows.size()) - 1;
  const int ncols = static_cast<int>(header.size());
  for (int r = 1; r <= n; ++r) {
    if (static_cast<int>(rows[r].size()) != ncols)
      throw std::invalid_argument("load_tabular_csv: row " + std::to_string(r) + " has " +
                                  std::to_string(rows[r].size()) + " cells, expected " +
                                  std::to_string(ncols));
    for (const std::string& cell : rows[r])
      if (cell.empty())
        throw std::invalid_argument("load_tabular_csv: empty cell in row " + std::to_string(r));
  }

  // feature columns and their kinds
  std::vector<int> feat_cols;
  for (int c = 0; c < ncols; ++c)
    if (c != label_col && c != prot_col && c != split_col) feat_cols.push_back(c);

  std::vector<bool> categorical(feat_cols.size(), false);
  std::vector<std::vector<std::string>> categories(feat_cols.size());
  for (size_t f = 0; f < feat_cols.size(); ++f) {
    double tmp;
    for (int r = 1; r <= n; ++r)
      if (!parse_number(rows[r][feat_cols[f]], tmp)) {
        categorical[f] = true;
        break;
      }
    if (categorical[f]) {
      std::set<std::string> values;
      for (int r = 1; r <= n; ++r) values.insert(rows[r][feat_cols[f]]);
      categories[f].assign(values.begin(), values.end());
    }
  }

  // train/test membership
  std::vector<bool> in_train(n, false);
  if (split_col >= 0) {
    for (int r = 0; r < n; ++r) {
      const std::string& cell = rows[r + 1][split_col];
      if (cell == "train") in_train[r] = true;
      else if (cell == "test") in_train[r] = false;
      else
        throw std::invalid_argument("load_tabular_csv: split cell must be train/test, got '" +
                                    cell + "'");
    }
  } else {
    Rng rng(schema.split_seed);
    std::vector<int> perm = rng.permutation(n);
    const int n_train = static_cast<int>(std::ceil(schema.train_fraction * n));
    for (int i = 0; i < n_train && i < n; ++i) in_train[perm[i]] = true;
  }

  TabularTask task;
  int width = 0;
  for (size_t f = 0; f < feat_cols.size(); ++f) {
    if (categorical[f]) {
      for (const std::string& v : categories[f])
        task.feature_names.push_back(header[feat_cols[f]] + "=" + v);
      width += static_cast<int>(categories[f].size());
    } else {
      task.feature_names.push_back(header[feat_cols[f]]);
      width += 1;
    }
  }

  Tensor raw(n, width);
  for (int r = 0; r < n; ++r) {
    int w = 0;
    for (size_t f = 0; f < feat_cols.size(); ++f) {
      const std::string& cell = rows[r + 1][feat_cols[f]];
      if (categorical[f]) {
        for (const std::string& v : categories[f]) raw.at(r, w++) = (cell == v) ? 1.0 : 0.0;
      } else {
        double v = 0.0;
        parse_number(cell, v);
        raw.at(r, w++) = v;
      }
    }
  }

  // z-score continuous columns with train-split statistics
  std::vector<bool> is_onehot(width, false);
  {
    int w = 0;
    for (size_t f = 0; f < feat_cols.size(); ++f) {
      if (categorical[f])
        for (size_t k = 0; k < categories[f].size(); ++k) is_onehot[w++] = true;
      else
        ++w;
    }
  }
  int n_train_rows = 0;
  for (int r = 0; r < n; ++r) n_train_rows += in_train[r] ? 1 : 0;
  if (n_train_rows == 0 || n_train_rows == n)
    throw std::invalid_argument("load_tabular_csv: degenerate train/test split");
  for (int c = 0; c < width; ++c) {
    if (is_onehot[c]) continue;
    double m = 0.0;
    for (int r = 0; r < n; ++r)
      if (in_train[r]) m += raw.at(r, c);
    m /= n_train_rows;
    double var = 0.0;
    for (int r = 0; r < n; ++r)
      if (in_train[r]) {
        const double d = raw.at(r, c) - m;
        var += d * d;
      }
    var /= n_train_rows;
    const double sd = std::sqrt(var);
    for (int r = 0; r < n; ++r) {
      raw.at(r, c) -= m;
      if (sd > 0) raw.at(r, c) /= sd;
    }
  }

  std::vector<std::vector<double>> xtr, xte;
  for (int r = 0; r < n; ++r) {
    const int y = parse_binary(rows[r + 1][label_col], schema.label_column, r + 1);
    const int a = parse_binary(rows[r + 1][prot_col], schema.protected_column, r + 1);
    std::vector<double> feat(width);
    for (int c = 0; c < width; ++c) feat[c] = raw.at(r, c);
    if (in_train[r]) {
      xtr.push_back(std::move(feat));
      task.y_train.push_back(y);
      task.a_train.push_back(a);
    } else {
      xte.push_back(std::move(feat));
      task.y_test.push_back(y);
      task.a_test.push_back(a);
    }
  }
  task.x_train = Tensor::from_rows(xtr);
  task.x_test = Tensor::from_rows(xte);
  return task;
}

LabeledDomainDataset TabularTask::train_by_domain() const {
  LabeledDomainDataset ds;
  ds.feature_dim = x_train.cols();
  ds.domains.resize(2);
  for (int r = 0; r < x_train.rows(); ++r) {
    const int a = a_train[r];
    if (a != 0 && a != 1) throw std::logic_error("TabularTask: protected attribute not binary");
    ds.domains[a].labels.push_back(y_train[r]);
    ds.domains[a].ids.push_back(r);
  }
  for (int d = 0; d < 2; ++d) {
    if (ds.domains[d].ids.empty())
      throw std::invalid_argument("TabularTask::train_by_domain: empty protected group " +
                                  std::to_string(d));
    Tensor x(static_cast<int>(ds.domains[d].ids.size()), ds.feature_dim);
    for (size_t i = 0; i < ds.domains[d].ids.size(); ++i)
      for (int c = 0; c < ds.feature_dim; ++c) x.at(static_cast<int>(i), c) =
          x_train.at(ds.domains[d].ids[i], c);
    ds.domains[d].x = std::move(x);
  }
  return ds;
}

void write_biased_tabular_csv(const std::string& path, const BiasedTabularSpec& spec) {
  if (spec.n_train < 2 || spec.n_test < 2)
    throw std::invalid_argument("write_biased_tabular_csv: too few rows");
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("write_biased_tabular_csv: cannot open " + path);
  out << "skill1,skill2,proxy,background,region,protected,label,split\n";
  Rng rng(spec.seed);
  const int total = spec.n_train + spec.n_test;
  char buf[256];
  for (int i = 0; i < total; ++i) {
    const int a = rng.uniform() < 0.5 ? 1 : 0;
    const double s = rng.normal();
    // group-dependent acceptance threshold: the historical bias
    const double threshold = (a == 1) ? -spec.bias : spec.bias;
    const int y = s > threshold ? 1 : 0;
    const double skill1 = s + 0.4 * rng.normal();
    const double skill2 = s + 0.4 * rng.normal();
    const double proxy = 0.8 * (2 * a - 1) + 0.5 * rng.normal();
    const double background = rng.normal();
    const double u = rng.uniform();
    const char* region;
    if (a == 0)
      region = u < 0.6 ? "north" : (u < 0.9 ? "center" : "south");
    else
      region = u < 0.1 ? "north" : (u < 0.4 ? "center" : "south");
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%s,%d,%d,%s\n", skill1, skill2, proxy,
                  background, region, a, y, i < spec.n_train ? "train" : "test");
    out << buf;
  }
}

TabularSchema biased_tabular_schema() {
  TabularSchema schema;
  schema.label_column = "label";
  schema.protected_column = "protected";
  schema.split_column = "split";
  return schema;
}

// ---- embeddings ----

Tensor EmbeddingTable::gather(const std::vector<int>& sample_ids) const {
  std::unordered_map<int, int> index;
  index.reserve(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) index[ids[i]] = static_cast<int>(i);
  Tensor out(static_cast<int>(sample_ids.size()), dim);
  for (size_t i = 0; i < sample_ids.size(); ++i) {
    auto it = index.find(sample_ids[i]);
    if (it == index.end())
      throw std::invalid_argument("EmbeddingTable: no row for sample id " +
                                  std::to_string(sample_ids[i]));
    for (int j = 0; j < dim; ++j) out.at(static_cast<int>(i), j) = rows.at(it->second, j);
  }
  return out;
}

EmbeddingTable load_embedding_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_embedding_table: cannot open " + path);
  EmbeddingTable table;
  std::string line;
  bool have_dim = false;
  std::vector<std::vector<double>> rows;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::stringstream ss(t);
    if (!have_dim) {
      std::string kw;
      ss >> kw >> table.dim;
      if (kw != "dim" || table.dim < 1 || ss.fail())
        throw std::invalid_argument("load_embedding_table: expected 'dim <d>' header at line " +
                                    std::to_string(lineno));
      have_dim = true;
      continue;
    }
    int id;
    ss >> id;
    std::vector<double> vals(table.dim);
    for (int j = 0; j < table.dim; ++j) ss >> vals[j];
    if (ss.fail())
      throw std::invalid_argument("load_embedding_table: malformed row at line " +
                                  std::to_string(lineno));
    table.ids.push_back(id);
    rows.push_back(std::move(vals));
  }
  if (!have_dim) throw std::invalid_argument("load_embedding_table: missing dim header");
  std::set<int> unique_ids(table.ids.begin(), table.ids.end());
  if (unique_ids.size() != table.ids.size())
    throw std::invalid_argument("load_embedding_table: duplicate sample ids");
  table.rows = Tensor::from_rows(rows);
  return table;
}

void write_embedding_table(const std::string& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("write_embedding_table: cannot open " + path);
  out << "dim " << table.dim << "\n";
  char buf[64];
  for (size_t i = 0; i < table.ids.size(); ++i) {
    out << table.ids[i];
    for (int j = 0; j < table.dim; ++j) {
      std::snprintf(buf, sizeof(buf), " %.17g", table.rows.at(static_cast<int>(i), j));
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace dmatch
