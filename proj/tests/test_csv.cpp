#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "dmatch/csv.hpp"

using namespace dmatch;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/dmatch_csv_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("tables round trip through disk") {
  CsvTable t;
  t.comments = {"first comment", "second"};
  t.columns = {"a", "b"};
  t.rows = {{"1", "x"}, {"2", "y"}};
  TempFile f("roundtrip.csv");
  write_csv(f.path, t);
  CsvTable r = read_csv(f.path);
  CHECK(r.comments == t.comments);
  CHECK(r.columns == t.columns);
  CHECK(r.rows == t.rows);
}

TEST_CASE("width mismatches are rejected on write and read") {
  CsvTable t;
  t.columns = {"a", "b"};
  t.rows = {{"1"}};
  TempFile f("width.csv");
  CHECK_THROWS(write_csv(f.path, t));

  std::ofstream out(f.path);
  out << "a,b\n1,2\n3\n";
  out.close();
  CHECK_THROWS(read_csv(f.path));
}

TEST_CASE("format_double survives a parse round trip on awkward values") {
  for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e17, 0.1, 123456789.123456789}) {
    CHECK(parse_double_cell(format_double(v)) == v);
  }
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(std::isnan(parse_double_cell("nan")));
  CHECK(std::isinf(parse_double_cell("inf")));
  CHECK(parse_double_cell("-inf") < 0);
  CHECK_THROWS(parse_double_cell("junk"));
  CHECK_THROWS(parse_double_cell(""));
}

TEST_CASE("column helpers") {
  CsvTable t;
  t.columns = {"step", "value"};
  t.rows = {{"0", "1.5"}, {"1", "nan"}, {"2", "-2.0"}};
  CHECK(column_index(t, "value") == 1);
  CHECK_THROWS(column_index(t, "missing"));
  std::vector<double> v = column_values(t, "value");
  REQUIRE(v.size() == 3);
  CHECK(v[0] == 1.5);
  CHECK(std::isnan(v[1]));
  CHECK(v[2] == -2.0);
}

TEST_CASE("standard comment block carries the config hash") {
  std::vector<std::string> c = standard_comments("deadbeef", "note");
  REQUIRE(c.size() >= 2);
  bool has_hash = false, has_generated = false, has_note = false;
  for (const std::string& line : c) {
    if (line.find("deadbeef") != std::string::npos) has_hash = true;
    if (line.rfind("generated", 0) == 0) has_generated = true;
    if (line.find("note") != std::string::npos) has_note = true;
  }
  CHECK(has_hash);
  CHECK(has_generated);
  CHECK(has_note);
}

TEST_CASE("trace serialization uses the fixed schema") {
  RunTrace trace;
  trace.rows.push_back({0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.5});
  trace.rows.push_back({1, 1.5, 2.5, std::numeric_limits<double>::quiet_NaN(), 4.5, 5.5, 6.5, 8.0});
  CsvTable t = trace_to_csv(trace, "cafe");
  CHECK(t.columns ==
        std::vector<std::string>{"step", "recon", "entropy", "xent", "dsm", "gw", "nll",
                                 "wall_ms"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][0] == "0");
  CHECK(t.rows[0][1] == "1");
  CHECK(t.rows[1][3] == "nan");

  TempFile f("trace.csv");
  write_csv(f.path, t);
  CsvTable r = read_csv(f.path);
  CHECK(column_values(r, "recon") == std::vector<double>{1.0, 1.5});
}

TEST_CASE("diverged traces record the step in a comment") {
  RunTrace trace;
  trace.rows.push_back({0, 1, 1, 1, 1, 1, 1, 1});
  trace.diverged_step = 17;
  trace.note = "nan in loss";
  CsvTable t = trace_to_csv(trace, "cafe");
  bool mentioned = false;
  for (const std::string& c : t.comments)
    if (c.find("17") != std::string::npos) mentioned = true;
  CHECK(mentioned);
}
