#include <doctest.h>

#include <set>

#include "itersr/rng.hpp"
#include "support.hpp"

using namespace itersr;

TEST_SUITE("rng") {
  TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next();
      CHECK(x == b.next());
      differs |= x != c.next();
    }
    CHECK(differs);
  }

  TEST_CASE("derived seeds separate names, indices and sub-streams") {
    std::set<std::uint64_t> seen;
    for (const char* name : {"dataset", "train", "sample"}) {
      for (std::uint64_t i = 0; i < 4; ++i) {
        for (std::uint64_t j = 0; j < 4; ++j) seen.insert(derive_seed(7, name, i, j));
      }
    }
    CHECK(seen.size() == 48);
    CHECK(derive_seed(7, "train") == derive_seed(7, "train", 0, 0));
    CHECK(derive_seed(7, "train") != derive_seed(8, "train"));
  }

  TEST_CASE("uniform draws stay in [0, 1) with the right mean") {
    Rng rng(1);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      const double u = rng.uniform();
      REQUIRE(u >= 0.0);
      REQUIRE(u < 1.0);
      sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / n));
  }

  TEST_CASE("bounded integers are uniform") {
    Rng rng(2);
    const int n = 70000;
    std::vector<int> counts(7);
    for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
    for (int c : counts) CHECK(test::within_3sigma(static_cast<double>(c) / n, 1.0 / 7.0, n));
  }

  TEST_CASE("normal and Gumbel moments") {
    Rng rng(3);
    const int n = 200000;
    double s = 0.0, s2 = 0.0, g = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = rng.normal();
      s += z;
      s2 += z * z;
      g += rng.gumbel();
    }
    CHECK(std::abs(s / n) < 3.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 3.0 * std::sqrt(2.0 / n));
    // Gumbel mean is the Euler-Mascheroni constant, variance pi^2 / 6.
    CHECK(std::abs(g / n - 0.5772156649) < 3.0 * std::sqrt(1.6449340668 / n));
  }
}
