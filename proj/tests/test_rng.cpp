// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "floq/rng.hpp"

using namespace floq;

TEST_CASE("streams with the same seed and name agree") {
  RngStream a(42, "module.purpose");
  RngStream b(42, "module.purpose");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("streams are independent of draw interleaving") {
  RngStream a1(7, "a"), b1(7, "b");
  std::vector<std::uint64_t> a_vals, b_vals;
  for (int i = 0; i < 10; ++i) {
    a_vals.push_back(a1.next_u64());
    b_vals.push_back(b1.next_u64());
  }
  // interleave differently; per-stream sequences must not change
  RngStream a2(7, "a"), b2(7, "b");
  for (int i = 0; i < 10; ++i) b_vals[i] -= b2.next_u64();
  for (int i = 0; i < 10; ++i) a_vals[i] -= a2.next_u64();
  for (int i = 0; i < 10; ++i) {
    CHECK(a_vals[i] == 0);
    CHECK(b_vals[i] == 0);
  }
}

TEST_CASE("distinct names decorrelate streams") {
  RngStream a(123, "one"), b(123, "two");
  int equal = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++equal;
  CHECK(equal == 0);
}

TEST_CASE("uniform values live in [0,1) with sane mean") {
  RngStream rng(3, "uniform");
  Scalar sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Scalar u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("normal draws have unit variance") {
  RngStream rng(4, "normal");
  Scalar sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const Scalar x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("uniform_below covers the whole range") {
  RngStream rng(5, "bins");
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) ++counts[rng.uniform_below(7)];
  for (int c : counts) CHECK(c > 800);
}
