#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "masd/rng.hpp"

using masd::Rng;

TEST_CASE("same seed gives the same stream") {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs |= x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("state round trip resumes the stream") {
  Rng a(7);
  for (int i = 0; i < 10; ++i) a.next_u64();
  Rng b(0);
  b.set_state(a.state());
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("uniform and index stay in range, moments look right") {
  Rng r(1);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  std::vector<int> counts(7, 0);
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double g = r.normal();
    sum += g;
    sq += g * g;
    const auto k = r.index(7);
    REQUIRE(k < 7);
    ++counts[k];
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
  for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 7.0) < 0.005);
}

TEST_CASE("split streams differ from the parent") {
  Rng parent(5);
  Rng child = parent.split();
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 50; ++i) {
    seen.insert(parent.next_u64());
    seen.insert(child.next_u64());
  }
  CHECK(seen.size() == 100);
}
