#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "tsdr/rng.hpp"
#include "tsdr/tensor.hpp"

using namespace tsdr;

TEST_CASE("rng streams are deterministic and tag-separated", "[core]") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  SECTION("different seeds differ") {
    Rng c(42), d(43);
    bool any_diff = false;
    for (int i = 0; i < 8; ++i) any_diff |= (c.next_u64() != d.next_u64());
    CHECK(any_diff);
  }

  SECTION("derive separates streams by tag and index") {
    CHECK(Rng::derive(7, "crop").next_u64() == Rng::derive(7, "crop").next_u64());
    CHECK(Rng::derive(7, "crop").next_u64() != Rng::derive(7, "scene").next_u64());
    CHECK(Rng::derive(7, "scene", std::uint64_t{0}).next_u64() !=
          Rng::derive(7, "scene", std::uint64_t{1}).next_u64());
    CHECK(Rng::derive(7, "scene", std::uint64_t{1}).next_u64() !=
          Rng::derive(8, "scene", std::uint64_t{1}).next_u64());
  }
}

TEST_CASE("rng distributions respect their ranges", "[core]") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) {
    const std::int64_t v = rng.uniform_int(-3, 4);
    CHECK(v >= -3);
    CHECK(v <= 4);
  }

  SECTION("uniform_int covers both endpoints") {
    Rng r2(9);
    std::set<std::int64_t> seen;
    for (int i = 0; i < 500; ++i) seen.insert(r2.uniform_int(0, 3));
    CHECK(seen == std::set<std::int64_t>{0, 1, 2, 3});
  }

  SECTION("degenerate range returns the single value") {
    Rng r3(1);
    CHECK(r3.uniform_int(5, 5) == 5);
    CHECK_THROWS_AS(r3.uniform_int(6, 5), Error);
  }

  SECTION("normal mean and spread are sane") {
    Rng r4(11);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const double v = r4.normal();
      sum += v;
      sq += v * v;
    }
    CHECK(std::abs(sum / n) < 0.05);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
  }
}

TEST_CASE("rng shuffle is a deterministic permutation", "[core]") {
  std::vector<int> v(20);
  std::iota(v.begin(), v.end(), 0);
  std::vector<int> w = v;
  Rng a(3), b(3);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> expect(20);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(sorted == expect);
}

TEST_CASE("tensor shape bookkeeping", "[core]") {
  Tensor t({2, 3, 4});
  CHECK(t.ndim() == 3);
  CHECK(t.numel() == 24);
  CHECK(t.dim(1) == 3);
  for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);

  t.at3(1, 2, 3) = 5.0;
  CHECK(t[1 * 12 + 2 * 4 + 3] == 5.0);

  SECTION("reshape preserves data and rejects bad sizes") {
    const Tensor r = t.reshaped({4, 6});
    CHECK(r.at2(3, 5) == 5.0);  // flat index 23 survives the reshape
    CHECK_THROWS_AS(t.reshaped({5, 5}), Error);
  }

  SECTION("full and fill") {
    const Tensor f = Tensor::full({2, 2}, 3.5);
    CHECK(f[3] == 3.5);
    Tensor g({2});
    g.fill(-1.0);
    CHECK(g[0] == -1.0);
  }

  SECTION("elementwise operators demand matching shapes") {
    Tensor a = Tensor::full({3}, 1.0);
    const Tensor b = Tensor::full({3}, 2.0);
    a += b;
    CHECK(a[2] == 3.0);
    a *= 2.0;
    CHECK(a[0] == 6.0);
    const Tensor c = Tensor::full({4}, 1.0);
    CHECK_THROWS_AS(a += c, Error);
  }
}

TEST_CASE("tensor byte hash tracks content", "[core]") {
  Rng rng(2);
  const Tensor a = Tensor::randn({5, 5}, rng);
  Tensor b = a;
  CHECK(a.byte_hash() == b.byte_hash());
  CHECK(a.byte_hash(1) == b.byte_hash(1));
  b[7] += 1e-12;
  CHECK(a.byte_hash() != b.byte_hash());
}

TEST_CASE("random tensor constructors are seed-deterministic", "[core]") {
  Rng r1(4), r2(4);
  const Tensor a = Tensor::randn({3, 3}, r1);
  const Tensor b = Tensor::randn({3, 3}, r2);
  CHECK(a.byte_hash() == b.byte_hash());

  Rng r3(4), r4(4);
  const Tensor c = Tensor::rand_uniform({8}, r3, -2.0, 2.0);
  const Tensor d = Tensor::rand_uniform({8}, r4, -2.0, 2.0);
  CHECK(c.byte_hash() == d.byte_hash());
  for (std::int64_t i = 0; i < c.numel(); ++i) {
    CHECK(c[i] >= -2.0);
    CHECK(c[i] < 2.0);
  }
}
