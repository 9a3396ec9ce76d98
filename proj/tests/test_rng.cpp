#include <cmath>
#include <cstdint>

#include "doctest.h"
#include "umk/rng.hpp"

using umk::Rng;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1) and covers the range") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("uniform_below is unbiased enough for small n") {
  Rng rng(3);
  int counts[5] = {};
  const int n = 50000;
  for (int i = 0; i < n; ++i) counts[rng.uniform_below(5)]++;
  for (int c : counts) CHECK(std::abs(c - n / 5) < 4 * std::sqrt(n * 0.2 * 0.8));
}

TEST_CASE("normal has roughly the right moments") {
  Rng rng(11);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal(2.0, 3.0);
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.05));
  CHECK(var == doctest::Approx(9.0).epsilon(0.05));
}

TEST_CASE("forked streams are independent and reproducible") {
  Rng root(5);
  Rng a = root.fork(1);
  Rng b = root.fork(2);
  Rng a2 = Rng(5).fork(1);
  CHECK(a.next_u64() == a2.next_u64());
  CHECK(a.next_u64() != b.next_u64());
}
