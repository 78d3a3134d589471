#include <doctest.h>

#include <advface/rng.hpp>

#include <map>
#include <string>

#include "support.hpp"

using advface::Rng;
using testing::oracle;

TEST_CASE("engine matches the standard mt19937_64 check value") {
  Rng rng(5489);
  for (int i = 0; i < 9999; ++i) rng.next_u64();
  CHECK(std::to_string(rng.next_u64()) == oracle()["mt19937_64_default_10000th"].get<std::string>());
}

TEST_CASE("seeded draws match the reference stream") {
  const auto& ref = oracle()["stream42"];
  Rng rng(42);
  for (int i = 0; i < 3; ++i) CHECK(std::to_string(rng.next_u64()) == ref["u64"][i].get<std::string>());
  for (int i = 0; i < 3; ++i) CHECK(rng.uniform() == ref["uniform"][i].get<double>());
  for (int i = 0; i < 4; ++i) CHECK(rng.normal() == doctest::Approx(ref["normal"][i].get<double>()).epsilon(1e-15));
  for (int i = 0; i < 8; ++i) CHECK(rng.uniform_int(0, 9) == ref["uniform_int_0_9"][i].get<int>());
}

TEST_CASE("uniform stays in [0, 1) and uniform_int in its closed range") {
  Rng rng(7);
  std::map<int, int> counts;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const int k = rng.uniform_int(-2, 2);
    REQUIRE(k >= -2);
    REQUIRE(k <= 2);
    ++counts[k];
  }
  CHECK(counts.size() == 5);
  for (const auto& [k, n] : counts) CHECK(n == doctest::Approx(4000).epsilon(0.06));
  CHECK(rng.uniform_int(3, 3) == 3);
}

TEST_CASE("normal draws have unit moments") {
  Rng rng(11);
  double sum = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal(2.0, 3.0);
    sum += z;
    sq += z * z;
  }
  const double mean = sum / n;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.02));
  CHECK(sq / n - mean * mean == doctest::Approx(9.0).epsilon(0.02));
}

TEST_CASE("FNV-1a and seed derivation match reference values") {
  const auto& f = oracle()["fnv1a64"];
  CHECK(std::to_string(advface::fnv1a64("", 0)) == f[""].get<std::string>());
  CHECK(std::to_string(advface::fnv1a64("a", 1)) == f["a"].get<std::string>());
  CHECK(std::to_string(advface::fnv1a64("foobar", 6)) == f["foobar"].get<std::string>());
  // Published FNV-1a 64 test vectors.
  CHECK(advface::fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(advface::fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  const auto& d = oracle()["derive_seed"];
  CHECK(std::to_string(advface::derive_seed(7, 0)) == d["7_0"].get<std::string>());
  CHECK(std::to_string(advface::derive_seed(123, 456)) == d["123_456"].get<std::string>());
  CHECK(advface::derive_seed(1, 0) != advface::derive_seed(1, 1));
}

TEST_CASE("same seed gives the same stream") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) REQUIRE(a.normal() == b.normal());
}
