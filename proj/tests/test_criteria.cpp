#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "daopt/criteria.hpp"
#include "daopt/enumerate.hpp"
#include "daopt/oa.hpp"
#include "daopt/oracle.hpp"
#include "test_util.hpp"

using namespace daopt;

namespace {

DesignMatrix full_factorial_2x3() {
  // 8-run full factorial in three factors; an orthogonal array.
  std::vector<int> rows;
  for (int r = 0; r < 8; ++r) {
    rows.push_back(r & 1 ? 1 : -1);
    rows.push_back(r & 2 ? 1 : -1);
    rows.push_back(r & 4 ? 1 : -1);
  }
  return DesignMatrix::from_levels(8, 3, rows);
}

// Plackett-Burman style 12-run array from the usual cyclic generator.
DesignMatrix pb12(int factors) {
  const int gen[11] = {1, 1, -1, 1, 1, 1, -1, -1, -1, 1, -1};
  std::vector<int> rows;
  for (int r = 0; r < 11; ++r)
    for (int c = 0; c < factors; ++c)
      rows.push_back(gen[(c + r) % 11]);
  for (int c = 0; c < factors; ++c) rows.push_back(-1);
  return DesignMatrix::from_levels(12, factors, rows);
}

}  // namespace

TEST_CASE("J spectra of single-block designs start flat") {
  const Catalog cat = enumerate_catalog(13, 6);
  const DesignMatrix d = cat.at(BucketKey{6, FormSpec::n1()}).front();
  for (int v : j_spectrum(d, 1).values) CHECK(v == 1);
  for (int v : j_spectrum(d, 2).values) CHECK(v == 1);
  CHECK(j_spectrum(d, 1).values.size() == 6);
  CHECK(j_spectrum(d, 2).values.size() == 15);
  CHECK_THROWS_AS(j_spectrum(d, 0), OrderError);
  CHECK_THROWS_AS(j_spectrum(d, 7), OrderError);
}

TEST_CASE("packed J computation agrees with the naive oracle") {
  std::mt19937 rng(4242);
  for (int trial = 0; trial < 60; ++trial) {
    const int runs = 5 + static_cast<int>(rng() % 14);
    const int k = 3 + static_cast<int>(rng() % 6);
    const DesignMatrix d = test_util::random_design(runs, k, rng);
    for (int s = 1; s <= std::min(k, 5); ++s) {
      const JSpectrum a = j_spectrum(d, s);
      const JSpectrum b = brute_force_j(d, s);
      REQUIRE(a.values == b.values);
    }
  }
}

TEST_CASE("J values respect the run-size parity bound") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int runs = 5 + static_cast<int>(rng() % 14);
    const DesignMatrix d = test_util::random_design(runs, 5, rng);
    for (int s = 1; s <= 5; ++s) {
      for (int v : j_spectrum(d, s).values) {
        CHECK(v <= runs);
        CHECK((v - runs) % 2 == 0);
      }
    }
  }
}

TEST_CASE("J spectra are isomorphism invariant") {
  std::mt19937 rng(515);
  const Catalog cat = enumerate_catalog(10, 6);
  const DesignMatrix d = cat.at(BucketKey{6, FormSpec::n2(4, 3)}).front();
  auto sorted_values = [](JSpectrum spec) {
    std::sort(spec.values.begin(), spec.values.end());
    return spec.values;
  };
  const auto j3 = sorted_values(j_spectrum(d, 3));
  const auto j4 = sorted_values(j_spectrum(d, 4));
  for (int trial = 0; trial < 100; ++trial) {
    const IsomorphismOp op = test_util::random_op(10, 6, rng);
    const DesignMatrix e = apply(op, d);
    CHECK(sorted_values(j_spectrum(e, 3)) == j3);
    CHECK(sorted_values(j_spectrum(e, 4)) == j4);
  }
}

TEST_CASE("frequency vectors encode descending runs") {
  SECTION("flat spectrum") {
    const FrequencyVector f = frequency_vector(JSpectrum{3, {1, 1, 1}});
    CHECK(f.entries == std::vector<std::pair<int, int>>{{1, 3}});
  }
  SECTION("zeros appear as the final entry") {
    const FrequencyVector f = frequency_vector(JSpectrum{4, {17, 1, 1, 0}});
    CHECK(f.entries ==
          std::vector<std::pair<int, int>>{{17, 1}, {1, 2}, {0, 1}});
  }
}

TEST_CASE("alias traces vanish on orthogonal arrays") {
  const DesignMatrix oa = full_factorial_2x3();
  CHECK(alias_trace(oa, 2).value == Catch::Approx(0.0).margin(1e-18));
}

TEST_CASE("alias trace matches the J identity on orthogonal arrays") {
  // With orthogonal main effects, C2 = 3/N^2 * sum of squared J3 values.
  const DesignMatrix oa = pb12(4);
  REQUIRE(is_orthogonal_array(oa));
  double sum_j3_sq = 0;
  for (int v : j_spectrum(oa, 3).values) sum_j3_sq += double(v) * v;
  const double expect = 3.0 * sum_j3_sq / (12.0 * 12.0);
  CHECK(alias_trace(oa, 2).value == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("exact characterization agrees with the solver route") {
  const Catalog cat = enumerate_catalog(10, 7);
  for (const auto& [bucket, designs] : cat) {
    if (bucket.factors < 4) continue;
    for (const DesignMatrix& d : designs) {
      const AberrationProfile p = characterize_design(d, bucket.form);
      CHECK(std::abs(p.c2_value() - alias_trace(d, 2).value) < 1e-9);
      CHECK(std::abs(p.c3_value() - alias_trace(d, 3).value) < 1e-9);
    }
  }
}

TEST_CASE("alias order bounds") {
  const Catalog cat = enumerate_catalog(10, 5);
  const DesignMatrix d = cat.at(BucketKey{5, FormSpec::n2(3, 3)}).front();
  CHECK_THROWS_AS(alias_trace(d, 1), OrderError);
  CHECK_THROWS_AS(alias_trace(d, 5), OrderError);
  CHECK_NOTHROW(alias_trace(d, 4));
}

TEST_CASE("rank-deficient models are rejected") {
  // Two identical columns make the main-effects matrix singular.
  std::mt19937 rng(3);
  const DesignMatrix base = test_util::random_design(10, 1, rng);
  const DesignMatrix d(10, 3,
                       {base.column(0), base.column(0), base.column(0) ^ 1u});
  CHECK_THROWS_AS(alias_trace(d, 2), SingularModelError);
}

TEST_CASE("least-squares bias oracle validates the alias matrices") {
  const Catalog cat = enumerate_catalog(10, 5);
  const DesignMatrix d = cat.at(BucketKey{5, FormSpec::n2(3, 3)}).front();
  CHECK(brute_force_bias(d, 2, 50) < 1e-9);
  CHECK(brute_force_bias(d, 4, 20) < 1e-9);  // boundary order k - 1
  CHECK(brute_force_bias(pb12(5), 2, 10) < 1e-9);
}

TEST_CASE("odd-factor buckets share their F1 and F2 vectors") {
  const Catalog cat = enumerate_catalog(10, 5);
  const auto& bucket = cat.at(BucketKey{5, FormSpec::n2(3, 3)});
  const auto f1 = frequency_vector(j_spectrum(bucket.front(), 1)).entries;
  const auto f2 = frequency_vector(j_spectrum(bucket.front(), 2)).entries;
  for (const DesignMatrix& d : bucket) {
    CHECK(frequency_vector(j_spectrum(d, 1)).entries == f1);
    CHECK(frequency_vector(j_spectrum(d, 2)).entries == f2);
  }
}

TEST_CASE("rankings are input-order invariant and tie-stable") {
  const Catalog cat = enumerate_catalog(10, 7);
  const auto& bucket = cat.at(BucketKey{7, FormSpec::n2(4, 4)});
  std::vector<CharacterizedDesign> designs;
  for (const DesignMatrix& d : bucket)
    designs.push_back(CharacterizedDesign{
        d, characterize_design(d, FormSpec::n2(4, 4)),
        canonical_key(d).bytes});

  auto winner_key = [&](const std::vector<CharacterizedDesign>& list,
                        bool g2) {
    const auto order = g2 ? rank_g2(list) : rank_g(list);
    return list[order.front()].key_bytes;
  };
  const std::string g_winner = winner_key(designs, false);
  const std::string g2_winner = winner_key(designs, true);

  std::mt19937 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<CharacterizedDesign> shuffled = designs;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(winner_key(shuffled, false) == g_winner);
    CHECK(winner_key(shuffled, true) == g2_winner);
  }

  SECTION("singleton list ranks itself") {
    std::vector<CharacterizedDesign> one{designs.front()};
    CHECK(rank_g(one) == std::vector<std::size_t>{0});
    CHECK(rank_g2(one) == std::vector<std::size_t>{0});
  }
  SECTION("mixed shapes are rejected") {
    std::vector<CharacterizedDesign> mixed{designs.front()};
    const Catalog other = enumerate_catalog(10, 5);
    const DesignMatrix d5 = other.at(BucketKey{5, FormSpec::n2(3, 3)}).front();
    mixed.push_back(CharacterizedDesign{
        d5, characterize_design(d5, FormSpec::n2(3, 3)),
        canonical_key(d5).bytes});
    CHECK_THROWS_AS(rank_g(mixed), ShapeError);
    CHECK_THROWS_AS(rank_g2(mixed), ShapeError);
  }
}
