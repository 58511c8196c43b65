#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "daopt/canonical.hpp"
#include "daopt/criteria.hpp"
#include "daopt/design.hpp"
#include "daopt/errors.hpp"

namespace daopt {

/// One representative per isomorphism class, produced without the staged
/// algorithm and without canonical keys.
struct OracleCatalog {
  int runs = 0;
  int factors = 0;
  std::vector<std::pair<FormSpec, std::vector<DesignMatrix>>> by_form;
};

namespace oracle_detail {

// All packed columns of the given weight, ascending.
inline std::vector<std::uint32_t> columns_of_weight(int runs, int weight) {
  std::vector<std::uint32_t> out;
  const std::uint32_t limit = std::uint32_t{1} << runs;
  std::uint32_t v = (std::uint32_t{1} << weight) - 1;
  while (v < limit) {
    out.push_back(v);
    const std::uint32_t c = v & -v;
    const std::uint32_t r = v + c;
    v = (((r ^ v) >> 2) / c) | r;
  }
  return out;
}

// Sorting the rows maps every row relabeling of the same column set to
// one representative, which keeps the duplicate pool small.
inline std::string row_sorted_bytes(const DesignMatrix& d) {
  std::vector<std::uint32_t> rows(d.runs(), 0);
  for (int c = 0; c < d.factors(); ++c)
    for (int r = 0; r < d.runs(); ++r)
      if ((d.column(c) >> r) & 1u) rows[r] |= std::uint32_t{1} << c;
  std::sort(rows.begin(), rows.end());
  std::string bytes;
  bytes.reserve(rows.size() * 3);
  for (std::uint32_t w : rows) {
    bytes.push_back(static_cast<char>(w & 0xff));
    bytes.push_back(static_cast<char>((w >> 8) & 0xff));
    bytes.push_back(static_cast<char>((w >> 16) & 0xff));
  }
  return bytes;
}

inline DesignMatrix from_row_sorted_bytes(int runs, int factors,
                                          const std::string& bytes) {
  std::vector<std::uint32_t> cols(factors, 0);
  for (int r = 0; r < runs; ++r) {
    const std::uint32_t w =
        static_cast<std::uint8_t>(bytes[3 * r]) |
        (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[3 * r + 1])) << 8) |
        (static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes[3 * r + 2])) << 16);
    for (int c = 0; c < factors; ++c)
      if ((w >> c) & 1u) cols[c] |= std::uint32_t{1} << r;
  }
  return DesignMatrix(runs, factors, std::move(cols));
}

// Backtracks over strictly increasing column choices under the exact
// inner-product pattern of the target form.
struct FormSearch {
  int runs, factors;
  bool n1;
  int cap_sum2, cap_sum0;  // form capacities; unused for the single block
  const std::vector<std::uint32_t>* pool;
  std::unordered_set<std::string>* seen;

  std::vector<std::uint32_t> chosen;
  int n_sum2 = 0, n_sum0 = 0;

  void run(std::size_t from) {
    if (static_cast<int>(chosen.size()) == factors) {
      DesignMatrix d(runs, factors, chosen);
      seen->insert(row_sorted_bytes(d));
      return;
    }
    for (std::size_t i = from; i < pool->size(); ++i) {
      const std::uint32_t cand = (*pool)[i];
      const int s = column_sum(cand, runs);
      if (n1) {
        if (s != 1) continue;
      } else if (s == 2) {
        if (n_sum2 == cap_sum2) continue;
      } else if (s == 0) {
        if (n_sum0 == cap_sum0) continue;
      } else {
        continue;
      }
      bool ok = true;
      for (std::uint32_t prev : chosen) {
        const int ip = inner_product(cand, prev, runs);
        if (n1) {
          ok = ip == 1;
        } else {
          const int ps = column_sum(prev, runs);
          ok = (ps == s) ? ip == 2 : ip == 0;
        }
        if (!ok) break;
      }
      if (!ok) continue;
      chosen.push_back(cand);
      n_sum2 += s == 2;
      n_sum0 += s == 0;
      run(i + 1);
      n_sum2 -= s == 2;
      n_sum0 -= s == 0;
      chosen.pop_back();
    }
  }
};

// Groups form designs into isomorphism classes through are_isomorphic,
// with J spectra as a cheap prefilter.
inline std::vector<DesignMatrix> group_classes(
    const std::vector<DesignMatrix>& designs) {
  struct Rep {
    DesignMatrix design;
    std::vector<int> invariant;
  };
  auto invariant_of = [](const DesignMatrix& d) {
    std::vector<int> inv;
    for (int s = 3; s <= std::min(4, d.factors()); ++s) {
      JSpectrum spec = j_spectrum(d, s);
      std::sort(spec.values.begin(), spec.values.end());
      inv.push_back(-s);
      inv.insert(inv.end(), spec.values.begin(), spec.values.end());
    }
    return inv;
  };
  std::vector<Rep> reps;
  for (const DesignMatrix& d : designs) {
    std::vector<int> inv = invariant_of(d);
    bool found = false;
    for (const Rep& rep : reps) {
      if (rep.invariant == inv && are_isomorphic(rep.design, d)) {
        found = true;
        break;
      }
    }
    if (!found) reps.push_back(Rep{d, std::move(inv)});
  }
  std::vector<DesignMatrix> out;
  out.reserve(reps.size());
  for (Rep& rep : reps) out.push_back(std::move(rep.design));
  return out;
}

}  // namespace oracle_detail

/**
 * Brute-force reference catalog: enumerates every column multiset of the
 * full 2^N space satisfying the target form (with form-constrained
 * pruning), collapses row relabelings by sorting rows, and groups the
 * rest into classes with the backtracking isomorphism test.
 */
inline OracleCatalog brute_force_catalog(int runs, int factors) {
  if (runs > 10)
    throw OracleScaleError("brute-force enumeration is limited to 10 runs");
  if (runs % 4 != 1 && runs % 4 != 2)
    throw RunSizeResidueError("run size residue must be 1 or 2 mod 4");
  if (factors < 2 || factors > runs - 1)
    throw ShapeError("factor count must lie in [2, runs - 1]");

  OracleCatalog catalog;
  catalog.runs = runs;
  catalog.factors = factors;

  const bool n1 = runs % 4 == 1;
  std::vector<std::uint32_t> pool;
  if (n1) {
    pool = oracle_detail::columns_of_weight(runs, (runs + 1) / 2);
  } else {
    pool = oracle_detail::columns_of_weight(runs, runs / 2);
    const auto sum2 = oracle_detail::columns_of_weight(runs, (runs + 2) / 2);
    pool.insert(pool.end(), sum2.begin(), sum2.end());
    std::sort(pool.begin(), pool.end());
  }

  std::vector<FormSpec> targets;
  if (n1) {
    targets.push_back(FormSpec::n1());
  } else if (factors % 2 == 1) {
    targets.push_back(FormSpec::n2((factors + 1) / 2, (factors + 1) / 2));
  } else {
    targets.push_back(FormSpec::n2(factors / 2, factors / 2 + 1));
    targets.push_back(FormSpec::n2(factors / 2 + 1, factors / 2));
  }

  for (const FormSpec& form : targets) {
    std::unordered_set<std::string> seen;
    oracle_detail::FormSearch search;
    search.runs = runs;
    search.factors = factors;
    search.n1 = n1;
    search.cap_sum2 = n1 ? 0 : form.block_i - 1;
    search.cap_sum0 = n1 ? 0 : form.block_j;
    search.pool = &pool;
    search.seen = &seen;
    search.run(0);

    std::vector<std::string> ordered(seen.begin(), seen.end());
    std::sort(ordered.begin(), ordered.end());
    std::vector<DesignMatrix> designs;
    designs.reserve(ordered.size());
    for (const std::string& bytes : ordered)
      designs.push_back(
          oracle_detail::from_row_sorted_bytes(runs, factors, bytes));
    catalog.by_form.emplace_back(form, oracle_detail::group_classes(designs));
  }
  return catalog;
}

/// Naive J computation with integer loops; same contract as j_spectrum,
/// independent code path.
inline JSpectrum brute_force_j(const DesignMatrix& d, int s) {
  if (s < 1 || s > d.factors())
    throw OrderError("interaction order out of range");
  double subsets = 1.0;
  for (int i = 0; i < s; ++i)
    subsets = subsets * (d.factors() - i) / (i + 1);
  if (subsets > 1e6)
    throw OracleScaleError("too many interaction columns for the oracle");

  JSpectrum spec;
  spec.order = s;
  std::vector<int> idx(s);
  for (int i = 0; i < s; ++i) idx[i] = i;
  for (;;) {
    int total = 0;
    for (int r = 0; r < d.runs(); ++r) {
      int prod = 1;
      for (int i = 0; i < s; ++i) prod *= d.entry(r, idx[i]);
      total += prod;
    }
    spec.values.push_back(total < 0 ? -total : total);
    int i = s - 1;
    while (i >= 0 && idx[i] == d.factors() - s + i) --i;
    if (i < 0) break;
    ++idx[i];
    for (int j = i + 1; j < s; ++j) idx[j] = idx[j - 1] + 1;
  }
  return spec;
}

/**
 * Simulates responses with active order-i interactions, fits the
 * main-effects model by least squares through Gauss-Jordan elimination,
 * and compares the resulting main-effect bias against the alias-matrix
 * prediction. Returns the worst relative deviation across trials.
 */
inline double brute_force_bias(const DesignMatrix& d, int i, int trials,
                               unsigned seed = 20240901) {
  const int n = d.runs(), k = d.factors();
  const auto alias = alias_matrix(d, i);  // (k+1)-entry columns
  const int n_inter = static_cast<int>(alias.size());

  // Dense model matrices.
  std::vector<std::vector<double>> xm(n, std::vector<double>(k + 1, 1.0));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < k; ++c) xm[r][c + 1] = d.entry(r, c);
  std::vector<std::vector<double>> xi(n, std::vector<double>(n_inter, 1.0));
  {
    int col = 0;
    detail::for_each_subset(k, i, [&](const std::vector<int>& subset) {
      for (int r = 0; r < n; ++r) {
        int prod = 1;
        for (int c : subset) prod *= d.entry(r, c);
        xi[r][col] = prod;
      }
      ++col;
    });
  }

  // Normal equations, solved fresh per trial by Gauss-Jordan with
  // partial pivoting.
  auto solve = [&](const std::vector<double>& y) {
    const int m = k + 1;
    std::vector<std::vector<double>> aug(m, std::vector<double>(m + 1, 0.0));
    for (int a = 0; a < m; ++a) {
      for (int b = 0; b < m; ++b) {
        double acc = 0;
        for (int r = 0; r < n; ++r) acc += xm[r][a] * xm[r][b];
        aug[a][b] = acc;
      }
      double acc = 0;
      for (int r = 0; r < n; ++r) acc += xm[r][a] * y[r];
      aug[a][m] = acc;
    }
    for (int col = 0; col < m; ++col) {
      int pivot = col;
      for (int r = col + 1; r < m; ++r)
        if (std::abs(aug[r][col]) > std::abs(aug[pivot][col])) pivot = r;
      if (std::abs(aug[pivot][col]) < 1e-9)
        throw SingularModelError("singular normal equations");
      std::swap(aug[col], aug[pivot]);
      const double p = aug[col][col];
      for (int c = col; c <= m; ++c) aug[col][c] /= p;
      for (int r = 0; r < m; ++r) {
        if (r == col) continue;
        const double f = aug[r][col];
        if (f == 0) continue;
        for (int c = col; c <= m; ++c) aug[r][c] -= f * aug[col][c];
      }
    }
    std::vector<double> beta(m);
    for (int a = 0; a < m; ++a) beta[a] = aug[a][m];
    return beta;
  };

  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> beta_m(k + 1), beta_i(n_inter);
    for (double& b : beta_m) b = unif(rng);
    for (double& b : beta_i) b = unif(rng);
    std::vector<double> y(n, 0.0);
    for (int r = 0; r < n; ++r) {
      double acc = 0;
      for (int a = 0; a <= k; ++a) acc += xm[r][a] * beta_m[a];
      for (int j = 0; j < n_inter; ++j) acc += xi[r][j] * beta_i[j];
      y[r] = acc;
    }
    const std::vector<double> fitted = solve(y);
    for (int a = 1; a <= k; ++a) {
      double predicted = 0;
      for (int j = 0; j < n_inter; ++j) predicted += alias[j][a] * beta_i[j];
      const double actual = fitted[a] - beta_m[a];
      const double denom = std::max(1.0, std::abs(predicted));
      worst = std::max(worst, std::abs(actual - predicted) / denom);
    }
  }
  return worst;
}

}  // namespace daopt
