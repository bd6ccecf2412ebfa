#include <doctest.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "dmatch/config.hpp"

using namespace dmatch;

TEST_CASE("parses sections, comments and values") {
  Config c = Config::parse_string(
      "# leading comment\n"
      "[run]\n"
      "experiment = train\n"
      "seeds = 0, 1, 2\n"
      "\n"
      "[loss]\n"
      "beta = 0.5\n"
      "use_noise = true\n");
  CHECK(c.get_string("run", "experiment") == "train");
  CHECK(c.get_double("loss", "beta") == 0.5);
  CHECK(c.get_bool_or("loss", "use_noise", false) == true);
  CHECK(c.get_int_list_or("run", "seeds", {}) == std::vector<int>{0, 1, 2});
  CHECK_NOTHROW(c.require_all_consumed());
}

TEST_CASE("comments are whole-line only; inline hashes join the value") {
  Config c = Config::parse_string("[a]\nx = 0.5 # not a comment\n");
  CHECK(c.get_string("a", "x") == "0.5 # not a comment");
  CHECK_THROWS(c.get_double("a", "x"));
}

TEST_CASE("fallback getters only fire on absent keys") {
  Config c = Config::parse_string("[a]\nx = 7\n");
  CHECK(c.get_int_or("a", "x", 3) == 7);
  CHECK(c.get_int_or("a", "missing", 3) == 3);
  CHECK(c.get_double_or("b", "anything", 1.5) == 1.5);
  CHECK(c.get_string_or("a", "missing", "dflt") == "dflt");
  CHECK_NOTHROW(c.require_all_consumed());
}

TEST_CASE("malformed values are errors even with a fallback") {
  Config c = Config::parse_string("[a]\nx = notanumber\nb = maybe\n");
  CHECK_THROWS(c.get_double_or("a", "x", 1.0));
  CHECK_THROWS(c.get_int_or("a", "x", 1));
  CHECK_THROWS(c.get_bool_or("a", "b", true));
}

TEST_CASE("syntax violations throw") {
  CHECK_THROWS(Config::parse_string("key_outside_section = 1\n"));
  CHECK_THROWS(Config::parse_string("[a]\nx = 1\nx = 2\n"));      // duplicate
  CHECK_THROWS(Config::parse_string("[a]\nnot a key value\n"));   // no equals
  CHECK_THROWS(Config::parse_string("[unclosed\nx = 1\n"));
  CHECK_THROWS(Config::parse_string("[a]\n= 1\n"));               // empty key
}

TEST_CASE("unconsumed keys are reported as unknown") {
  Config c = Config::parse_string("[a]\nx = 1\ntypo_key = 2\n");
  CHECK(c.get_int("a", "x") == 1);
  bool threw = false;
  try {
    c.require_all_consumed();
  } catch (const std::invalid_argument& e) {
    threw = true;
    CHECK(std::string(e.what()).find("typo_key") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("has() consumes and reports presence") {
  Config c = Config::parse_string("[a]\nx = 1\n");
  CHECK(c.has("a", "x"));
  CHECK(!c.has("a", "y"));
  CHECK_NOTHROW(c.require_all_consumed());
}

TEST_CASE("negative seed rejected by the unsigned getter") {
  Config c = Config::parse_string("[run]\nseed = -4\n");
  CHECK_THROWS(c.get_uint64_or("run", "seed", 0));
}

TEST_CASE("lists parse with and without spaces") {
  Config c = Config::parse_string("[g]\na = 0.1,0.2 , 0.3\nb = x, y\n");
  CHECK(c.get_double_list_or("g", "a", {}) == std::vector<double>{0.1, 0.2, 0.3});
  CHECK(c.get_string_list_or("g", "b", {}) == std::vector<std::string>{"x", "y"});
}

TEST_CASE("hash ignores formatting but tracks content") {
  Config a = Config::parse_string("[s]\nx = 1\ny = 2\n");
  Config b = Config::parse_string("# comment\n[s]\n\ny = 2\nx = 1\n");
  CHECK(a.hash() == b.hash());
  Config c = Config::parse_string("[s]\nx = 1\ny = 3\n");
  CHECK(a.hash() != c.hash());
  Config d = Config::parse_string("[s]\nx = 1\n[t]\ny = 2\n");
  CHECK(a.hash() != d.hash());
}

TEST_CASE("set() overrides and participates in the hash") {
  Config a = Config::parse_string("[s]\nx = 1\n");
  const std::string before = a.hash();
  a.set("s", "x", "9");
  CHECK(a.get_int("s", "x") == 9);
  CHECK(a.hash() != before);
  a.set("t", "fresh", "1");
  CHECK(a.get_int("t", "fresh") == 1);
}

TEST_CASE("missing file is a parse error") {
  CHECK_THROWS(Config::parse_file("/tmp/definitely_missing_dmatch.cfg"));
}
