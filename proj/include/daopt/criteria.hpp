#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "daopt/design.hpp"
#include "daopt/errors.hpp"

namespace daopt {

/// The C(k,s) absolute interaction-contrast sums for one order s.
struct JSpectrum {
  int order = 0;
  std::vector<int> values;
};

/// Descending run-length summary of one J spectrum; zero values get the
/// final entry when present.
struct FrequencyVector {
  int order = 0;
  std::vector<std::pair<int, int>> entries;  // (j value, count), value desc
};

namespace detail {

// Visits all s-subsets of {0..k-1} in lexicographic order.
template <typename Fn>
void for_each_subset(int k, int s, Fn&& fn) {
  std::vector<int> idx(s);
  for (int i = 0; i < s; ++i) idx[i] = i;
  for (;;) {
    fn(idx);
    int i = s - 1;
    while (i >= 0 && idx[i] == k - s + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < s; ++j) idx[j] = idx[j - 1] + 1;
  }
}

// Packed product column of the given factor subset: bit r set when the
// elementwise product over the subset is +1 in run r.
inline std::uint32_t product_column(const DesignMatrix& d,
                                    const std::vector<int>& subset) {
  std::uint32_t x = 0;
  for (int c : subset) x ^= d.column(c);
  if (subset.size() % 2 == 0) x = ~x & row_mask(d.runs());
  return x;
}

}  // namespace detail

/// J values of order s, computed through packed-bit parity and popcounts.
inline JSpectrum j_spectrum(const DesignMatrix& d, int s) {
  if (s < 1 || s > d.factors())
    throw OrderError("interaction order out of range");
  JSpectrum spec;
  spec.order = s;
  const int n = d.runs();
  detail::for_each_subset(d.factors(), s, [&](const std::vector<int>& subset) {
    const int sum = column_sum(detail::product_column(d, subset), n);
    spec.values.push_back(sum < 0 ? -sum : sum);
  });
  return spec;
}

inline FrequencyVector frequency_vector(const JSpectrum& spec) {
  std::map<int, int, std::greater<int>> counts;
  for (int v : spec.values) ++counts[v];
  FrequencyVector f;
  f.order = spec.order;
  f.entries.assign(counts.begin(), counts.end());
  return f;
}

/// Squared Frobenius norm of the intercept-stripped alias matrix.
struct AliasTrace {
  int order = 0;
  double value = 0.0;
};

namespace detail {

// Cholesky factorization of the (k+1)-dimensional X'X for the
// main-effects model with intercept. Kept as a small dense lower
// triangle; the systems here never exceed 18 unknowns.
class NormalEquations {
 public:
  explicit NormalEquations(const DesignMatrix& d) : m_(d.factors() + 1) {
    const int n = d.runs(), k = d.factors();
    g_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
    at(0, 0) = n;
    for (int a = 0; a < k; ++a) {
      at(0, a + 1) = at(a + 1, 0) = d.sum(a);
      at(a + 1, a + 1) = n;
      for (int b = a + 1; b < k; ++b)
        at(a + 1, b + 1) = at(b + 1, a + 1) = d.gram(a, b);
    }
    l_ = g_;
    for (int j = 0; j < m_; ++j) {
      double diag = lat(j, j);
      for (int p = 0; p < j; ++p) diag -= lat(j, p) * lat(j, p);
      if (diag <= 1e-9)
        throw SingularModelError("main-effects model matrix is rank deficient");
      const double root = std::sqrt(diag);
      lat(j, j) = root;
      for (int i = j + 1; i < m_; ++i) {
        double v = lat(i, j);
        for (int p = 0; p < j; ++p) v -= lat(i, p) * lat(j, p);
        lat(i, j) = v / root;
      }
    }
  }

  int dim() const { return m_; }

  // Solves G u = rhs with one step of iterative refinement.
  void solve(const std::vector<double>& rhs, std::vector<double>& u) const {
    u = rhs;
    substitute(u);
    std::vector<double> r(m_);
    for (int i = 0; i < m_; ++i) {
      double acc = rhs[i];
      for (int j = 0; j < m_; ++j) acc -= gat(i, j) * u[j];
      r[i] = acc;
    }
    substitute(r);
    for (int i = 0; i < m_; ++i) u[i] += r[i];
  }

 private:
  void substitute(std::vector<double>& x) const {
    for (int i = 0; i < m_; ++i) {
      double v = x[i];
      for (int j = 0; j < i; ++j) v -= lat(i, j) * x[j];
      x[i] = v / lat(i, i);
    }
    for (int i = m_ - 1; i >= 0; --i) {
      double v = x[i];
      for (int j = i + 1; j < m_; ++j) v -= lat(j, i) * x[j];
      x[i] = v / lat(i, i);
    }
  }

  double& at(int i, int j) { return g_[static_cast<std::size_t>(i) * m_ + j]; }
  double gat(int i, int j) const { return g_[static_cast<std::size_t>(i) * m_ + j]; }
  double& lat(int i, int j) { return l_[static_cast<std::size_t>(i) * m_ + j]; }
  double lat(int i, int j) const { return l_[static_cast<std::size_t>(i) * m_ + j]; }

  int m_;
  std::vector<double> g_, l_;
};

}  // namespace detail

/**
 * Alias matrix of the main-effects model against the order-i interaction
 * contrasts: (X'm Xm)^-1 X'm Xi, including the intercept row. Columns
 * follow the lexicographic subset order.
 */
inline std::vector<std::vector<double>> alias_matrix(const DesignMatrix& d,
                                                     int i) {
  if (i < 2 || i > d.factors() - 1)
    throw OrderError("alias order must lie in [2, k - 1]");
  const int n = d.runs(), k = d.factors();
  detail::NormalEquations eq(d);
  std::vector<std::vector<double>> cols;
  std::vector<double> rhs(k + 1), u;
  detail::for_each_subset(k, i, [&](const std::vector<int>& subset) {
    const std::uint32_t prod = detail::product_column(d, subset);
    rhs[0] = column_sum(prod, n);
    for (int a = 0; a < k; ++a)
      rhs[a + 1] = inner_product(prod, d.column(a), n);
    eq.solve(rhs, u);
    cols.push_back(u);
  });
  return cols;
}

/// C_i: the squared Frobenius norm of the alias matrix with the intercept
/// row removed.
inline AliasTrace alias_trace(const DesignMatrix& d, int i) {
  const auto cols = alias_matrix(d, i);
  double total = 0.0;
  for (const auto& col : cols)
    for (std::size_t r = 1; r < col.size(); ++r) total += col[r] * col[r];
  return AliasTrace{i, total};
}

namespace detail {

// For designs in optimal form, X'X inverts in closed form: the single
// block (N-1)I + J has inverse ((I - J/(N+k)) / (N-1)), and each block
// (N-2)I + 2J of size t has inverse ((I - 2J/(N-2+2t)) / (N-2)). That
// makes every alias-matrix entry a rational with a shared denominator,
// so C_i values come out exact and tie detection needs no tolerance.
inline Fraction exact_alias_c(const DesignMatrix& d, int i,
                              const FormSpec& form) {
  if (i < 2 || i > d.factors() - 1)
    throw OrderError("alias order must lie in [2, k - 1]");
  const int n = d.runs(), k = d.factors();
  const int m = k + 1;

  // block id per model row: 0 = intercept block, 1 = second block
  std::vector<int> block(m, 0);
  long long p0, p1, scale;  // u * (scale * p0 * p1) is integral
  if (form.variant == FormSpec::Variant::N1Form) {
    if (!matches_n1_form(d)) throw FormError("design is out of form");
    p0 = n + k;
    p1 = 1;
    scale = n - 1;
  } else {
    if (!matches_n2_form(d, form)) throw FormError("design is out of form");
    p0 = n - 2 + 2 * form.block_i;
    p1 = n - 2 + 2 * form.block_j;
    scale = n - 2;
    for (int a = 0; a < k; ++a)
      if (d.sum(a) == 0) block[a + 1] = 1;
  }
  const long long den = scale * p0 * p1;

  __int128 total = 0;
  std::vector<long long> rhs(m);
  detail::for_each_subset(k, i, [&](const std::vector<int>& subset) {
    const std::uint32_t prod = detail::product_column(d, subset);
    rhs[0] = column_sum(prod, n);
    for (int a = 0; a < k; ++a)
      rhs[a + 1] = inner_product(prod, d.column(a), n);
    long long s0 = 0, s1 = 0;
    for (int r = 0; r < m; ++r) (block[r] ? s1 : s0) += rhs[r];
    for (int r = 1; r < m; ++r) {
      long long num;
      if (form.variant == FormSpec::Variant::N1Form) {
        num = p0 * rhs[r] - s0;  // p1 = 1, single block
      } else if (block[r] == 0) {
        num = p0 * p1 * rhs[r] - 2 * p1 * s0;
      } else {
        num = p0 * p1 * rhs[r] - 2 * p0 * s1;
      }
      total += static_cast<__int128>(num) * num;
    }
  });

  const __int128 den2 = static_cast<__int128>(den) * den;
  // Reduce once through the gcd so the result fits the Fraction type.
  __int128 g = total;
  __int128 h = den2;
  while (h) {
    const __int128 t = g % h;
    g = h;
    h = t;
  }
  if (g == 0) g = 1;
  return Fraction(static_cast<long long>(total / g),
                  static_cast<long long>(den2 / g));
}

}  // namespace detail

/// Ranking profile: the F3/F4 frequency summaries plus the C2/C3 traces,
/// held exactly.
struct AberrationProfile {
  FrequencyVector f3;
  FrequencyVector f4;
  Fraction c2{0, 1};
  Fraction c3{0, 1};
  FormSpec form;

  double c2_value() const { return c2.value(); }
  double c3_value() const { return c3.value(); }
};

/// Computes the full profile of one design of known form. C3 is reported
/// as zero for three-factor designs, where no order-3 alias matrix with
/// the required shape exists.
inline AberrationProfile characterize_design(const DesignMatrix& d,
                                             const FormSpec& form) {
  AberrationProfile p;
  p.form = form;
  p.f3 = frequency_vector(j_spectrum(d, 3));
  p.f4 = d.factors() >= 4 ? frequency_vector(j_spectrum(d, 4))
                          : FrequencyVector{4, {}};
  p.c2 = detail::exact_alias_c(d, 2, form);
  p.c3 = d.factors() >= 4 ? detail::exact_alias_c(d, 3, form) : Fraction{0, 1};
  return p;
}

/// A design bundled with its profile and canonical key, as rankings and
/// reports consume it.
struct CharacterizedDesign {
  DesignMatrix design;
  AberrationProfile profile;
  std::string key_bytes;
};

namespace detail {

// Expands a frequency vector onto the full descending grid of values the
// run size admits (N, N-2, ..., down to parity), so vectors of different
// supports compare entrywise.
inline std::vector<int> padded_frequencies(const FrequencyVector& f, int runs) {
  std::vector<int> grid;
  for (int v = runs; v >= 0; v -= 2) grid.push_back(v);
  std::vector<int> out(grid.size(), 0);
  for (const auto& [value, count] : f.entries) {
    const int slot = (runs - value) / 2;
    out[slot] += count;
  }
  return out;
}

// Lexicographic G-aberration comparison over the concatenated padded
// (F3, F4) vectors: fewer high J values first.
inline int compare_g(const AberrationProfile& a, const AberrationProfile& b,
                     int runs) {
  for (auto sel : {&AberrationProfile::f3, &AberrationProfile::f4}) {
    const auto fa = padded_frequencies(a.*sel, runs);
    const auto fb = padded_frequencies(b.*sel, runs);
    for (std::size_t i = 0; i < fa.size(); ++i) {
      if (fa[i] != fb[i]) return fa[i] < fb[i] ? -1 : 1;
    }
  }
  return 0;
}

// The block form with the smaller leading block has the better F1 vector
// and wins G ties across forms.
inline int compare_form_tiebreak(const FormSpec& a, const FormSpec& b) {
  if (a.block_i != b.block_i) return a.block_i < b.block_i ? -1 : 1;
  return 0;
}

inline void check_same_shape(const std::vector<CharacterizedDesign>& designs) {
  for (std::size_t i = 1; i < designs.size(); ++i)
    if (designs[i].design.runs() != designs[0].design.runs() ||
        designs[i].design.factors() != designs[0].design.factors())
      throw ShapeError("ranking requires a shared run size and factor count");
}

}  // namespace detail

/**
 * Minimum G-aberration order: indices into `designs`, best first.
 * Designs tied through F4 stay tied under the criterion; among them the
 * best (C2, C3) pair leads, matching how the minimally aliased tables
 * present a tied class, then the cross-form F1 tiebreak and the
 * canonical key keep the order stable.
 */
inline std::vector<std::size_t> rank_g(
    const std::vector<CharacterizedDesign>& designs) {
  detail::check_same_shape(designs);
  std::vector<std::size_t> order(designs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const int runs = designs.empty() ? 0 : designs[0].design.runs();
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = designs[x];
    const auto& b = designs[y];
    if (const int c = detail::compare_g(a.profile, b.profile, runs))
      return c < 0;
    if (!(a.profile.c2 == b.profile.c2)) return a.profile.c2 < b.profile.c2;
    if (!(a.profile.c3 == b.profile.c3)) return a.profile.c3 < b.profile.c3;
    if (const int c =
            detail::compare_form_tiebreak(a.profile.form, b.profile.form))
      return c < 0;
    return a.key_bytes < b.key_bytes;
  });
  return order;
}

/**
 * Minimum G2-aberration order: lexicographic on the exact (C2, C3) pair,
 * G-aberration among ties, then the canonical key. Exact rationals make
 * tie detection deterministic without a tolerance.
 */
inline std::vector<std::size_t> rank_g2(
    const std::vector<CharacterizedDesign>& designs) {
  detail::check_same_shape(designs);
  std::vector<std::size_t> order(designs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const int runs = designs.empty() ? 0 : designs[0].design.runs();
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = designs[x];
    const auto& b = designs[y];
    if (!(a.profile.c2 == b.profile.c2)) return a.profile.c2 < b.profile.c2;
    if (!(a.profile.c3 == b.profile.c3)) return a.profile.c3 < b.profile.c3;
    if (const int c = detail::compare_g(a.profile, b.profile, runs))
      return c < 0;
    if (const int c =
            detail::compare_form_tiebreak(a.profile.form, b.profile.form))
      return c < 0;
    return a.key_bytes < b.key_bytes;
  });
  return order;
}

}  // namespace daopt
