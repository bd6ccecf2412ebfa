#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <string>

#include "dmatch/datasets.hpp"

using namespace dmatch;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/dmatch_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

}  // namespace

TEST_CASE("nested d dataset has the documented layout") {
  NestedDSpec spec;
  spec.n_per_class = 20;
  spec.seed = 3;
  LabeledDomainDataset ds = gen_nested_d(spec);
  REQUIRE(ds.num_domains() == 2);
  CHECK(ds.feature_dim == 2);
  CHECK(ds.total() == 80);

  std::set<int> ids;
  for (int d = 0; d < 2; ++d) {
    const DomainData& dom = ds.domains[d];
    REQUIRE(dom.x.rows() == 40);
    REQUIRE(dom.labels.size() == 40);
    for (int i = 0; i < 20; ++i) CHECK(dom.labels[i] == 0);
    for (int i = 20; i < 40; ++i) CHECK(dom.labels[i] == 1);
    for (int id : dom.ids) ids.insert(id);
  }
  CHECK(ids.size() == 80);
  CHECK(*ids.begin() == 0);
  CHECK(*ids.rbegin() == 79);

  // the two domains sit on opposite sides of the origin
  double mean0 = 0, mean1 = 0;
  for (int i = 0; i < 40; ++i) {
    mean0 += ds.domains[0].x.at(i, 0);
    mean1 += ds.domains[1].x.at(i, 0);
  }
  CHECK(mean0 / 40 < 0.0);
  CHECK(mean1 / 40 > 0.0);
}

TEST_CASE("noise-free samples lie exactly on the placed curve") {
  NestedDSpec spec;
  spec.noise_std = 0.0;
  Rng rng(17);
  Tensor canon = sample_d_curve(spec.outer_radius, 50, 0.0, rng);
  for (int i = 0; i < 50; ++i)
    CHECK(d_curve_distance(spec.outer_radius, canon.at(i, 0), canon.at(i, 1)) <= 1e-12);

  for (int d = 0; d < 2; ++d) {
    Tensor placed = place_d_points(canon, d, spec);
    const double off = spec.separation / 2.0;
    for (int i = 0; i < 50; ++i) {
      // undo the placement, then measure against the canonical curve
      const double px = d == 0 ? placed.at(i, 0) + off : off - placed.at(i, 0);
      CHECK(d_curve_distance(spec.outer_radius, px, placed.at(i, 1)) <= 1e-12);
    }
  }
}

TEST_CASE("d-curve distance closed form") {
  // on the arc, on the chord, and off both
  CHECK(d_curve_distance(2.0, 2.0, 0.0) == 0.0);
  CHECK(d_curve_distance(2.0, 0.0, 1.5) == 0.0);
  CHECK(d_curve_distance(2.0, 3.0, 0.0) == doctest::Approx(1.0));
  CHECK(d_curve_distance(2.0, -1.0, 0.0) == doctest::Approx(1.0));  // chord is closest
  CHECK(d_curve_distance(2.0, -3.0, 2.0) == doctest::Approx(3.0));  // arc endpoint
  CHECK(d_curve_distance(2.0, 0.0, 3.0) == doctest::Approx(1.0));   // above the chord end
}

TEST_CASE("mirror placement flips domain 1 across the separation midline") {
  Tensor canon(1, 2);
  canon.at(0, 0) = 0.7;
  canon.at(0, 1) = -0.2;
  NestedDSpec spec;
  spec.separation = 6.0;
  Tensor p0 = place_d_points(canon, 0, spec);
  Tensor p1 = place_d_points(canon, 1, spec);
  CHECK(p0.at(0, 0) == doctest::Approx(0.7 - 3.0));
  CHECK(p1.at(0, 0) == doctest::Approx(3.0 - 0.7));
  CHECK(p0.at(0, 1) == -0.2);
  CHECK(p1.at(0, 1) == -0.2);
  CHECK_THROWS_AS(place_d_points(canon, 2, spec), std::invalid_argument);
}

TEST_CASE("mog target places equal-weight components on a circle") {
  MogTargetSpec spec;
  spec.components = 4;
  spec.spread = 2.0;
  spec.component_var = 0.1;
  spec.n = 500;
  spec.seed = 5;
  MogTarget t = gen_mog_target(spec);
  CHECK(t.samples.rows() == 500);
  CHECK(t.samples.cols() == 2);

  // all four means at radius `spread`, log density symmetric under 90-degree rotation
  Tensor probe = Tensor::row({2.0, 0.0});
  Tensor rotated = Tensor::row({0.0, 2.0});
  CHECK(t.prior.log_density(probe).at(0, 0) ==
        doctest::Approx(t.prior.log_density(rotated).at(0, 0)).epsilon(1e-12));

  // sample first moment near zero by symmetry
  double mx = 0, my = 0;
  for (int i = 0; i < 500; ++i) {
    mx += t.samples.at(i, 0);
    my += t.samples.at(i, 1);
  }
  CHECK(std::fabs(mx / 500) < 0.25);
  CHECK(std::fabs(my / 500) < 0.25);
}

TEST_CASE("single-component target degenerates to a gaussian") {
  MogTargetSpec spec;
  spec.components = 1;
  spec.dim = 2;
  spec.component_var = 1.0;
  spec.n = 10;
  MogTarget t = gen_mog_target(spec);
  Tensor origin(1, 2);
  const double log2pi = std::log(2.0 * std::numbers::pi);
  CHECK(t.prior.log_density(origin).at(0, 0) == doctest::Approx(-log2pi).epsilon(1e-12));
}

TEST_CASE("one-dimensional targets spread along a segment") {
  MogTargetSpec spec;
  spec.components = 3;
  spec.dim = 1;
  spec.spread = 2.0;
  spec.n = 10;
  MogTarget t = gen_mog_target(spec);
  // means -2, 0, 2: density symmetric about the origin
  Tensor left = Tensor::row({-1.3});
  Tensor right = Tensor::row({1.3});
  CHECK(t.prior.log_density(left).at(0, 0) ==
        doctest::Approx(t.prior.log_density(right).at(0, 0)).epsilon(1e-12));
}

TEST_CASE("tabular ingestion one-hot expands and z-scores on train statistics") {
  TempFile f("tab.csv");
  write_file(f.path,
             "age,color,label,protected,split\n"
             "1.0,red,0,0,train\n"
             "3.0,blue,1,1,train\n"
             "2.0,red,1,0,test\n"
             "5.0,green,0,1,test\n");
  TabularSchema schema;
  schema.label_column = "label";
  schema.protected_column = "protected";
  schema.split_column = "split";
  TabularTask task = load_tabular_csv(f.path, schema);

  REQUIRE(task.x_train.rows() == 2);
  REQUIRE(task.x_test.rows() == 2);
  // feature columns: age plus three color indicators (order follows first appearance)
  REQUIRE(task.x_train.cols() == 4);
  CHECK(task.y_train == std::vector<int>{0, 1});
  CHECK(task.a_train == std::vector<int>{0, 1});
  CHECK(task.y_test == std::vector<int>{1, 0});

  // train ages 1 and 3: mean 2, population std 1
  CHECK(task.x_train.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(task.x_train.at(1, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(task.x_test.at(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(task.x_test.at(1, 0) == doctest::Approx(3.0).epsilon(1e-9));

  // one-hot block: exactly one indicator set per row
  for (int i = 0; i < 2; ++i) {
    double s = 0;
    for (int j = 1; j < 4; ++j) s += task.x_train.at(i, j);
    CHECK(s == 1.0);
  }

  LabeledDomainDataset by_domain = task.train_by_domain();
  REQUIRE(by_domain.num_domains() == 2);
  CHECK(by_domain.domains[0].x.rows() == 1);
  CHECK(by_domain.domains[1].x.rows() == 1);
  CHECK(by_domain.domains[0].labels[0] == 0);
  CHECK(by_domain.domains[1].labels[0] == 1);
}

TEST_CASE("tabular ingestion rejects malformed inputs") {
  TabularSchema schema;
  schema.label_column = "label";
  schema.protected_column = "protected";

  TempFile f("bad.csv");
  SUBCASE("non-binary protected column") {
    write_file(f.path, "x,label,protected\n1,0,0\n2,1,2\n3,0,1\n4,1,0\n");
    CHECK_THROWS_AS(load_tabular_csv(f.path, schema), std::invalid_argument);
  }
  SUBCASE("empty cell") {
    write_file(f.path, "x,label,protected\n1,0,0\n,1,1\n3,0,1\n4,1,0\n");
    CHECK_THROWS_AS(load_tabular_csv(f.path, schema), std::invalid_argument);
  }
  SUBCASE("missing label column") {
    write_file(f.path, "x,y,protected\n1,0,0\n2,1,1\n");
    CHECK_THROWS_AS(load_tabular_csv(f.path, schema), std::invalid_argument);
  }
  SUBCASE("duplicate header") {
    write_file(f.path, "x,x,label,protected\n1,2,0,0\n3,4,1,1\n");
    CHECK_THROWS_AS(load_tabular_csv(f.path, schema), std::invalid_argument);
  }
  SUBCASE("bad split cell") {
    TabularSchema s2 = schema;
    s2.split_column = "split";
    write_file(f.path, "x,label,protected,split\n1,0,0,train\n2,1,1,dev\n");
    CHECK_THROWS_AS(load_tabular_csv(f.path, s2), std::invalid_argument);
  }
  SUBCASE("missing file") {
    CHECK_THROWS(load_tabular_csv("/tmp/does_not_exist_dmatch.csv", schema));
  }
}

TEST_CASE("synthetic biased table round trips through the strict loader") {
  TempFile f("biased.csv");
  BiasedTabularSpec spec;
  spec.n_train = 120;
  spec.n_test = 60;
  spec.seed = 9;
  write_biased_tabular_csv(f.path, spec);
  TabularTask task = load_tabular_csv(f.path, biased_tabular_schema());
  CHECK(task.x_train.rows() == 120);
  CHECK(task.x_test.rows() == 60);
  CHECK(task.x_train.cols() == task.x_test.cols());

  // both protected groups and both labels occur in the train split
  std::set<int> groups(task.a_train.begin(), task.a_train.end());
  std::set<int> labels(task.y_train.begin(), task.y_train.end());
  CHECK(groups == std::set<int>{0, 1});
  CHECK(labels == std::set<int>{0, 1});

  // deterministic in the seed
  TempFile g("biased2.csv");
  write_biased_tabular_csv(g.path, spec);
  std::ifstream a(f.path), b(g.path);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(!sa.empty());
}

TEST_CASE("embedding tables round trip and validate") {
  TempFile f("emb.txt");
  EmbeddingTable t;
  t.dim = 3;
  t.ids = {4, 7, 2};
  t.rows = Tensor(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.rows.at(i, j) = 0.1 * i - 0.25 * j;
  write_embedding_table(f.path, t);
  EmbeddingTable r = load_embedding_table(f.path);
  CHECK(r.dim == 3);
  CHECK(r.ids == t.ids);
  CHECK(max_abs_diff(r.rows, t.rows) == 0.0);

  Tensor g = r.gather({7, 4});
  CHECK(g.rows() == 2);
  CHECK(max_abs_diff(g, Tensor::unchecked(2, 3, {0.1, -0.15, -0.4, 0.0, -0.25, -0.5})) <= 1e-12);
  CHECK_THROWS_AS(r.gather({99}), std::invalid_argument);

  SUBCASE("missing dim header") {
    write_file(f.path, "# comment\n1 0.5 0.5\n");
    CHECK_THROWS_AS(load_embedding_table(f.path), std::invalid_argument);
  }
  SUBCASE("row width mismatch") {
    write_file(f.path, "dim 2\n1 0.5\n");
    CHECK_THROWS_AS(load_embedding_table(f.path), std::invalid_argument);
  }
}

TEST_CASE("single domain wrapper assigns sequential ids") {
  Rng rng(12);
  LabeledDomainDataset ds = single_domain_dataset(rng.normal_tensor(5, 3));
  REQUIRE(ds.num_domains() == 1);
  CHECK(ds.feature_dim == 3);
  CHECK(ds.domains[0].ids == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(ds.domains[0].labels == std::vector<int>(5, 0));
}
