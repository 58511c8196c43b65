#pragma once

#include <vector>

#include "daopt/design.hpp"
#include "daopt/errors.hpp"

namespace daopt {

/// Strength-2 orthogonal array check: balanced columns, all pairwise
/// inner products zero.
inline bool is_orthogonal_array(const DesignMatrix& d) {
  const int k = d.factors();
  for (int a = 0; a < k; ++a)
    if (d.sum(a) != 0) return false;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      if (d.gram(a, b) != 0) return false;
  return true;
}

/// Whether a design arises from an orthogonal array by row addition, with
/// the rows whose removal exposes the array.
struct OADerivability {
  bool derivable = false;
  std::vector<int> witness_rows;
};

namespace oa_detail {

// Whether some column sign switch lands the design in optimal form; such
// designs are exactly the DA designs this module classifies. Column sums
// force the switch except on balanced columns, whose signs follow from a
// two-coloring of the +-2 inner-product pattern.
inline bool in_form_up_to_signs(const DesignMatrix& d) {
  const int n = d.runs(), k = d.factors();
  std::vector<std::uint32_t> cols = d.columns();
  if (n % 4 == 1) {
    for (auto& c : cols) {
      const int s = column_sum(c, n);
      if (s == -1)
        c = ~c & row_mask(n);
      else if (s != 1)
        return false;
    }
  } else if (n % 4 == 2) {
    std::vector<int> zero_idx;
    for (int i = 0; i < k; ++i) {
      const int s = column_sum(cols[i], n);
      if (s == -2)
        cols[i] = ~cols[i] & row_mask(n);
      else if (s == 0)
        zero_idx.push_back(i);
      else if (s != 2)
        return false;
    }
    const int z = static_cast<int>(zero_idx.size());
    std::vector<int> eps(z, 0);
    if (z > 0) {
      eps[0] = 1;
      std::vector<int> stack{0};
      while (!stack.empty()) {
        const int a = stack.back();
        stack.pop_back();
        for (int b = 0; b < z; ++b) {
          if (a == b) continue;
          const int g = inner_product(cols[zero_idx[a]], cols[zero_idx[b]], n);
          if (g != 2 && g != -2) return false;
          const int want = g > 0 ? eps[a] : -eps[a];
          if (eps[b] == 0) {
            eps[b] = want;
            stack.push_back(b);
          } else if (eps[b] != want) {
            return false;
          }
        }
      }
    }
    for (int a = 0; a < z; ++a)
      if (eps[a] == -1) cols[zero_idx[a]] = ~cols[zero_idx[a]] & row_mask(n);
  } else {
    return false;
  }
  try {
    infer_form(DesignMatrix(n, k, std::move(cols)));
    return true;
  } catch (const FormError&) {
    return false;
  }
}

}  // namespace oa_detail

/**
 * Scans row deletions: one row for run sizes 1 mod 4, row pairs for run
 * sizes 2 mod 4. The first witness in ascending scan order is reported.
 * Accepts any design isomorphic to the optimal form; derivability does
 * not depend on which representative is scanned.
 */
inline OADerivability classify(const DesignMatrix& d) {
  if (!oa_detail::in_form_up_to_signs(d))
    throw FormError("design is not isomorphic to an optimal form");
  const int n = d.runs(), k = d.factors();
  std::vector<int> sums(k);
  std::vector<std::vector<int>> grams(k, std::vector<int>(k));
  for (int a = 0; a < k; ++a) {
    sums[a] = d.sum(a);
    for (int b = a + 1; b < k; ++b)
      grams[a][b] = d.gram(a, b);
  }

  auto leaves_oa = [&](int r, int s) {
    // s < 0 deletes a single row.
    for (int a = 0; a < k; ++a) {
      int v = sums[a] - d.entry(r, a);
      if (s >= 0) v -= d.entry(s, a);
      if (v != 0) return false;
    }
    for (int a = 0; a < k; ++a) {
      for (int b = a + 1; b < k; ++b) {
        int v = grams[a][b] - d.entry(r, a) * d.entry(r, b);
        if (s >= 0) v -= d.entry(s, a) * d.entry(s, b);
        if (v != 0) return false;
      }
    }
    return true;
  };

  OADerivability out;
  if (n % 4 == 1) {
    for (int r = 0; r < n; ++r) {
      if (leaves_oa(r, -1)) {
        out.derivable = true;
        out.witness_rows = {r};
        return out;
      }
    }
  } else {
    for (int r = 0; r < n; ++r) {
      for (int s = r + 1; s < n; ++s) {
        if (leaves_oa(r, s)) {
          out.derivable = true;
          out.witness_rows = {r, s};
          return out;
        }
      }
    }
  }
  return out;
}

/// Deletes the given rows, preserving the order of the remaining ones.
inline DesignMatrix delete_rows(const DesignMatrix& d,
                                const std::vector<int>& rows) {
  std::uint32_t kill = 0;
  for (int r : rows) kill |= std::uint32_t{1} << r;
  std::vector<std::uint32_t> cols(d.factors(), 0);
  int out_r = 0;
  for (int r = 0; r < d.runs(); ++r) {
    if ((kill >> r) & 1u) continue;
    for (int c = 0; c < d.factors(); ++c)
      if ((d.column(c) >> r) & 1u) cols[c] |= std::uint32_t{1} << out_r;
    ++out_r;
  }
  return DesignMatrix(d.runs() - static_cast<int>(rows.size()), d.factors(),
                      std::move(cols));
}

}  // namespace daopt
