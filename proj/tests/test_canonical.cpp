#include <catch2/catch_amalgamated.hpp>

#include <numeric>
#include <random>
#include <thread>

#include "daopt/canonical.hpp"
#include "daopt/enumerate.hpp"
#include "test_util.hpp"

using namespace daopt;

TEST_CASE("group action basics") {
  std::mt19937 rng(31);
  const DesignMatrix d = test_util::random_design(8, 4, rng);

  SECTION("identity") {
    IsomorphismOp id;
    id.row_perm.resize(8);
    id.col_perm.resize(4);
    std::iota(id.row_perm.begin(), id.row_perm.end(), 0);
    std::iota(id.col_perm.begin(), id.col_perm.end(), 0);
    id.signs.assign(4, 1);
    CHECK(apply(id, d) == d);
  }
  SECTION("switching all signs twice is the identity") {
    IsomorphismOp flip;
    flip.row_perm.resize(8);
    flip.col_perm.resize(4);
    std::iota(flip.row_perm.begin(), flip.row_perm.end(), 0);
    std::iota(flip.col_perm.begin(), flip.col_perm.end(), 0);
    flip.signs.assign(4, -1);
    CHECK_FALSE(apply(flip, d) == d);
    CHECK(apply(flip, apply(flip, d)) == d);
  }
  SECTION("an operation composed with its inverse is the identity") {
    for (int trial = 0; trial < 50; ++trial) {
      const IsomorphismOp op = test_util::random_op(8, 4, rng);
      CHECK(apply(test_util::inverse_of(op), apply(op, d)) == d);
    }
  }
  SECTION("shape mismatch") {
    const IsomorphismOp op = test_util::random_op(7, 4, rng);
    CHECK_THROWS_AS(apply(op, d), ShapeError);
  }
}

TEST_CASE("canonical keys are invariant over the group") {
  std::mt19937 rng(17);
  std::vector<DesignMatrix> fixtures;
  const Catalog c10 = enumerate_catalog(10, 7);
  fixtures.push_back(c10.at(BucketKey{7, FormSpec::n2(4, 4)}).front());
  fixtures.push_back(c10.at(BucketKey{6, FormSpec::n2(3, 4)}).back());
  const Catalog c13 = enumerate_catalog(13, 8);
  fixtures.push_back(c13.at(BucketKey{8, FormSpec::n1()}).front());
  for (int i = 0; i < 4; ++i)
    fixtures.push_back(test_util::random_design(9, 5, rng));

  for (const DesignMatrix& d : fixtures) {
    const CanonicalKey key = canonical_key(d);
    for (int trial = 0; trial < 200; ++trial) {
      const IsomorphismOp op =
          test_util::random_op(d.runs(), d.factors(), rng);
      REQUIRE(canonical_key(apply(op, d)) == key);
    }
  }
}

TEST_CASE("canonical keys separate the known small classes") {
  const Catalog c5 = enumerate_catalog(5, 4);
  const auto& five_three = c5.at(BucketKey{3, FormSpec::n1()});
  REQUIRE(five_three.size() == 2);
  CHECK_FALSE(canonical_key(five_three[0]) == canonical_key(five_three[1]));
  CHECK_FALSE(are_isomorphic(five_three[0], five_three[1]));

  const Catalog c6 = enumerate_catalog(6, 5);
  const auto& six_three = c6.at(BucketKey{3, FormSpec::n2(2, 2)});
  REQUIRE(six_three.size() == 2);
  CHECK_FALSE(are_isomorphic(six_three[0], six_three[1]));
}

TEST_CASE("isomorphism oracle basics") {
  std::mt19937 rng(23);
  const DesignMatrix d = test_util::random_design(10, 5, rng);
  CHECK(are_isomorphic(d, d));
  for (int trial = 0; trial < 25; ++trial) {
    const IsomorphismOp op = test_util::random_op(10, 5, rng);
    CHECK(are_isomorphic(d, apply(op, d)));
  }
  const DesignMatrix other = test_util::random_design(9, 5, rng);
  CHECK_THROWS_AS(are_isomorphic(d, other), ShapeError);
}

TEST_CASE("key equality matches the oracle on enumerated buckets") {
  for (int runs : {6, 10}) {
    const Catalog cat = enumerate_catalog(runs, runs - 1);
    for (const auto& [bucket, designs] : cat) {
      std::vector<CanonicalKey> keys;
      keys.reserve(designs.size());
      for (const DesignMatrix& d : designs) keys.push_back(canonical_key(d));
      for (std::size_t a = 0; a < designs.size(); ++a) {
        for (std::size_t b = a; b < designs.size(); ++b) {
          const bool same_key = keys[a] == keys[b];
          const bool iso = are_isomorphic(designs[a], designs[b]);
          REQUIRE(same_key == iso);
          REQUIRE(same_key == (a == b));
        }
      }
    }
  }
}

TEST_CASE("keys are deterministic across calls and threads") {
  const Catalog c10 = enumerate_catalog(10, 5);
  const DesignMatrix d = c10.at(BucketKey{5, FormSpec::n2(3, 3)}).front();
  const CanonicalKey reference = canonical_key(d);
  CHECK(canonical_key(d) == reference);

  std::vector<CanonicalKey> results(4);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t)
    pool.emplace_back([&, t] { results[t] = canonical_key(d); });
  for (auto& t : pool) t.join();
  for (const CanonicalKey& k : results) CHECK(k == reference);
}

TEST_CASE("key serialization") {
  const CanonicalKey key = canonical_key(starting_design_n2(6));
  CHECK(key.bytes.size() == 1 + 2 * 1);  // scheme byte + one byte per column
  const std::string hex = key.hex();
  CHECK(hex.size() == key.bytes.size() * 2);
  CHECK(hex.substr(0, 2) == "01");  // scheme version
  for (char c : hex) CHECK(((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')));
}
