#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "ilde/rng.hpp"
#include "ilde/serialization.hpp"

using namespace ilde;

TEST_CASE("rng streams are deterministic and tag-separated") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng c = derive_rng(7, "rollout", 0);
  Rng d = derive_rng(7, "rollout", 0);
  Rng e = derive_rng(7, "demo", 0);
  CHECK(c.next_u64() == d.next_u64());
  CHECK(c.next_u64() != e.next_u64());

  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 64; ++i) firsts.insert(derive_rng(7, "rollout", i).next_u64());
  CHECK(firsts.size() == 64);  // distinct indices give distinct streams
}

TEST_CASE("uniform() lands in [0, 1) and is roughly centered") {
  Rng rng(1);
  double sum = 0.0;
  for (int i = 0; i < 100000; ++i) {
    double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / 100000.0 - 0.5) < 0.01);
}

TEST_CASE("categorical matches probabilities over many draws") {
  Rng rng(9);
  std::vector<double> p = {0.2, 0.5, 0.3};
  std::vector<int> counts(3, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[rng.categorical(p)];
  for (int k = 0; k < 3; ++k) {
    double se = std::sqrt(p[k] * (1 - p[k]) / n);
    CHECK(std::abs(counts[k] / static_cast<double>(n) - p[k]) < 4 * se);
  }
}

TEST_CASE("format_double round-trips bit-exactly") {
  std::vector<double> values = {0.0, 1.0, -1.0, 1.0 / 3.0, 1e-300, 1e300, 0.1, -0.7};
  for (double v : values) {
    double back = std::stod(format_double(v));
    CHECK(back == v);
  }
}

TEST_CASE("key-value writer/reader round trip") {
  KvWriter w;
  w.put("name", std::string("example"));
  w.put("count", 42);
  w.put("scale", 0.125);
  w.put("values", std::vector<double>{1.0, 2.5, -3.0});
  w.comment("a comment line");

  KvReader r = KvReader::from_string(w.str());
  CHECK(r.get_string("name") == "example");
  CHECK(r.get_int("count") == 42);
  CHECK(r.get_double("scale") == 0.125);
  CHECK(r.get_vector("values") == std::vector<double>{1.0, 2.5, -3.0});
  CHECK(r.get_int("missing", 7) == 7);
  CHECK(r.get_vector("missing", {4.0}) == std::vector<double>{4.0});
  CHECK_THROWS(r.get_string("missing"));
}

TEST_CASE("malformed input reports the line number") {
  try {
    KvReader r = KvReader::from_string("good = 1\nbadline\n");
    FAIL("expected a parse error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  try {
    KvReader r = KvReader::from_string("a = 1\nb = xyz\n");
    r.get_double("b");
    FAIL("expected a parse error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
}

TEST_CASE("content_hash separates different content") {
  CHECK(content_hash("abc") == content_hash("abc"));
  CHECK(content_hash("abc") != content_hash("abd"));
}
