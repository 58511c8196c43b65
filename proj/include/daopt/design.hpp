#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "daopt/errors.hpp"

namespace daopt {

/// Largest supported run size; every column fits one machine word.
inline constexpr int kMaxRuns = 32;

/// Mask with the low `runs` bits set.
inline std::uint32_t row_mask(int runs) {
  return runs == 32 ? ~std::uint32_t{0} : ((std::uint32_t{1} << runs) - 1);
}

/// Element sum of a packed column (bit = 1 means level +1).
inline int column_sum(std::uint32_t col, int runs) {
  return 2 * std::popcount(col) - runs;
}

/// Inner product of two packed columns of the same length.
inline int inner_product(std::uint32_t a, std::uint32_t b, int runs) {
  return runs - 2 * std::popcount(a ^ b);
}

/**
 * Two-level N x k design with entries in {-1,+1}. Each factor column is
 * stored as a packed bit sequence of length N where bit r set means the
 * level in run r is +1. The intercept column is never materialized;
 * operations that need it work with column sums instead.
 */
class DesignMatrix {
 public:
  DesignMatrix(int runs, int factors, std::vector<std::uint32_t> columns)
      : runs_(runs), factors_(factors), cols_(std::move(columns)) {
    if (runs_ < 2 || runs_ > kMaxRuns)
      throw ShapeError("run size out of range: " + std::to_string(runs_));
    if (factors_ < 1)
      throw ShapeError("factor count must be positive");
    if (static_cast<int>(cols_.size()) != factors_)
      throw ShapeError("column count does not match declared factors");
    const std::uint32_t mask = row_mask(runs_);
    for (std::uint32_t c : cols_)
      if (c & ~mask) throw ShapeError("column has bits beyond the run range");
  }

  /// Builds from a row-major sequence of -1/+1 levels.
  static DesignMatrix from_levels(int runs, int factors,
                                  const std::vector<int>& row_major) {
    if (static_cast<int>(row_major.size()) != runs * factors)
      throw ShapeError("level array size does not match runs x factors");
    std::vector<std::uint32_t> cols(factors, 0);
    for (int r = 0; r < runs; ++r) {
      for (int c = 0; c < factors; ++c) {
        const int v = row_major[static_cast<std::size_t>(r) * factors + c];
        if (v == 1)
          cols[c] |= std::uint32_t{1} << r;
        else if (v != -1)
          throw ShapeError("levels must be -1 or +1");
      }
    }
    return DesignMatrix(runs, factors, std::move(cols));
  }

  int runs() const { return runs_; }
  int factors() const { return factors_; }

  std::uint32_t column(int c) const { return cols_[c]; }
  const std::vector<std::uint32_t>& columns() const { return cols_; }

  /// Level of run r, factor c, as -1 or +1.
  int entry(int r, int c) const { return (cols_[c] >> r) & 1u ? 1 : -1; }

  int sum(int c) const { return column_sum(cols_[c], runs_); }
  int gram(int a, int b) const { return inner_product(cols_[a], cols_[b], runs_); }

  DesignMatrix with_column(std::uint32_t col) const {
    std::vector<std::uint32_t> cols = cols_;
    cols.push_back(col);
    return DesignMatrix(runs_, factors_ + 1, std::move(cols));
  }

  DesignMatrix drop_column(int c) const {
    std::vector<std::uint32_t> cols = cols_;
    cols.erase(cols.begin() + c);
    return DesignMatrix(runs_, factors_ - 1, std::move(cols));
  }

  bool operator==(const DesignMatrix& other) const {
    return runs_ == other.runs_ && cols_ == other.cols_;
  }

 private:
  int runs_;
  int factors_;
  std::vector<std::uint32_t> cols_;
};

/// Column sums and the factor block of X'X (diagonal = N).
struct InformationSummary {
  std::vector<int> column_sums;
  std::vector<std::vector<int>> grams;
};

/// Computes column sums and all pairwise inner products via popcounts.
inline InformationSummary information_summary(const DesignMatrix& d) {
  const int k = d.factors();
  InformationSummary s;
  s.column_sums.resize(k);
  s.grams.assign(k, std::vector<int>(k, 0));
  for (int a = 0; a < k; ++a) {
    s.column_sums[a] = d.sum(a);
    s.grams[a][a] = d.runs();
    for (int b = a + 1; b < k; ++b)
      s.grams[a][b] = s.grams[b][a] = d.gram(a, b);
  }
  return s;
}

/// Which optimal information-matrix form a design is asked to satisfy.
struct FormSpec {
  enum class Variant { N1Form, N2Form };

  Variant variant = Variant::N1Form;
  // Block dimensions of the two-block form; the intercept is counted in
  // the first block, so block_i - 1 factor columns sum to 2 and block_j
  // factor columns sum to 0. Unused for the single-block form.
  int block_i = 0;
  int block_j = 0;

  static FormSpec n1() { return FormSpec{Variant::N1Form, 0, 0}; }
  static FormSpec n2(int i, int j) { return FormSpec{Variant::N2Form, i, j}; }

  bool operator==(const FormSpec& o) const {
    return variant == o.variant && block_i == o.block_i && block_j == o.block_j;
  }
  bool operator<(const FormSpec& o) const {
    if (variant != o.variant) return variant < o.variant;
    if (block_i != o.block_i) return block_i < o.block_i;
    return block_j < o.block_j;
  }

  std::string name() const {
    if (variant == Variant::N1Form) return "n1";
    return "g" + std::to_string(block_i) + "x" + std::to_string(block_j);
  }
};

/// Validates that `spec` is a legal two-block form for k factors.
inline void check_n2_spec(const FormSpec& spec, int k) {
  if (spec.variant != FormSpec::Variant::N2Form)
    throw SpecShapeError("expected a two-block form spec");
  if (spec.block_i + spec.block_j != k + 1)
    throw SpecShapeError("block sizes must sum to k + 1");
  if (k % 2 == 1) {
    if (spec.block_i != (k + 1) / 2 || spec.block_j != (k + 1) / 2)
      throw SpecShapeError("odd k requires equal blocks (k+1)/2");
  } else {
    const bool lo = spec.block_i == k / 2 && spec.block_j == k / 2 + 1;
    const bool hi = spec.block_i == k / 2 + 1 && spec.block_j == k / 2;
    if (!lo && !hi)
      throw SpecShapeError("even k requires blocks {k/2, k/2+1}");
  }
}

/**
 * True iff X'X = (N-1)I + J for the main-effects model with intercept:
 * every column sums to 1 and every pair of factor columns has inner
 * product 1. Permutation-invariant by construction.
 */
inline bool matches_n1_form(const DesignMatrix& d) {
  if (d.runs() % 4 != 1)
    throw RunSizeResidueError("run size must be 1 mod 4");
  const int k = d.factors();
  for (int a = 0; a < k; ++a)
    if (d.sum(a) != 1) return false;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      if (d.gram(a, b) != 1) return false;
  return true;
}

/**
 * True iff the design's information matrix is the two-block form with the
 * given block sizes, up to column order: block_i - 1 factor columns sum
 * to 2, block_j sum to 0, inner products are 2 within each group and 0
 * across groups.
 */
inline bool matches_n2_form(const DesignMatrix& d, const FormSpec& spec) {
  if (d.runs() % 4 != 2)
    throw RunSizeResidueError("run size must be 2 mod 4");
  check_n2_spec(spec, d.factors());
  const int k = d.factors();
  std::vector<int> sum2, sum0;
  for (int a = 0; a < k; ++a) {
    const int s = d.sum(a);
    if (s == 2)
      sum2.push_back(a);
    else if (s == 0)
      sum0.push_back(a);
    else
      return false;
  }
  if (static_cast<int>(sum2.size()) != spec.block_i - 1) return false;
  if (static_cast<int>(sum0.size()) != spec.block_j) return false;
  for (std::size_t x = 0; x < sum2.size(); ++x)
    for (std::size_t y = x + 1; y < sum2.size(); ++y)
      if (d.gram(sum2[x], sum2[y]) != 2) return false;
  for (std::size_t x = 0; x < sum0.size(); ++x)
    for (std::size_t y = x + 1; y < sum0.size(); ++y)
      if (d.gram(sum0[x], sum0[y]) != 2) return false;
  for (int a : sum2)
    for (int b : sum0)
      if (d.gram(a, b) != 0) return false;
  return true;
}

/// Infers the form a design satisfies, or throws FormError.
inline FormSpec infer_form(const DesignMatrix& d) {
  if (d.runs() % 4 == 1) {
    if (matches_n1_form(d)) return FormSpec::n1();
    throw FormError("design does not satisfy the single-block form");
  }
  if (d.runs() % 4 == 2) {
    int n_sum2 = 0;
    for (int a = 0; a < d.factors(); ++a)
      if (d.sum(a) == 2) ++n_sum2;
    const FormSpec spec = FormSpec::n2(n_sum2 + 1, d.factors() - n_sum2);
    try {
      if (matches_n2_form(d, spec)) return spec;
    } catch (const SpecShapeError&) {
    }
    throw FormError("design does not satisfy a two-block form");
  }
  throw FormError("run size residue admits no optimal form here");
}

/// Exact small rational, always normalized with positive denominator.
struct Fraction {
  long long num = 0;
  long long den = 1;

  Fraction() = default;
  Fraction(long long n, long long d) : num(n), den(d) {
    if (den == 0) throw Error("zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const long long g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  bool operator==(const Fraction& o) const { return num == o.num && den == o.den; }
  bool operator<(const Fraction& o) const {
    return static_cast<__int128>(num) * o.den <
           static_cast<__int128>(o.num) * den;
  }

  double value() const {
    return static_cast<double>(num) / static_cast<double>(den);
  }

  std::string str() const {
    return std::to_string(num) + "/" + std::to_string(den);
  }
};

/**
 * Multiset (sorted ascending) of pairwise column correlations for a
 * design in optimal form, with the intercept adjustment:
 *   corr(a,b) = (N g_ab - s_a s_b) / sqrt((N^2 - s_a^2)(N^2 - s_b^2)).
 * For the forms handled here either the numerator vanishes or the two
 * column sums agree, so every value is an exact rational.
 */
inline std::vector<Fraction> correlation_profile(const DesignMatrix& d) {
  infer_form(d);  // throws FormError when out of form
  const long long n = d.runs();
  std::vector<Fraction> out;
  for (int a = 0; a < d.factors(); ++a) {
    for (int b = a + 1; b < d.factors(); ++b) {
      const long long sa = d.sum(a), sb = d.sum(b);
      const long long numer = n * d.gram(a, b) - sa * sb;
      if (numer == 0) {
        out.emplace_back(0, 1);
        continue;
      }
      if (sa * sa != sb * sb)
        throw FormError("unequal column sums with correlated columns");
      out.emplace_back(numer, n * n - sa * sa);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace daopt
