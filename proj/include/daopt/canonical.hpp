#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "daopt/design.hpp"
#include "daopt/errors.hpp"

namespace daopt {

/// Version tag of the canonicalization algorithm, embedded in every key.
inline constexpr std::uint8_t kCanonScheme = 1;

/// One element of the isomorphism group: row permutation, column
/// permutation and per-column sign switch.
struct IsomorphismOp {
  std::vector<int> row_perm;  // length N
  std::vector<int> col_perm;  // length k
  std::vector<int> signs;     // length k, entries -1 or +1
};

/// result[r][c] = signs[c] * d[row_perm[r]][col_perm[c]]
inline DesignMatrix apply(const IsomorphismOp& op, const DesignMatrix& d) {
  const int n = d.runs(), k = d.factors();
  if (static_cast<int>(op.row_perm.size()) != n ||
      static_cast<int>(op.col_perm.size()) != k ||
      static_cast<int>(op.signs.size()) != k)
    throw ShapeError("operation does not match design dimensions");
  std::vector<std::uint32_t> cols(k, 0);
  for (int c = 0; c < k; ++c) {
    const std::uint32_t src = d.column(op.col_perm[c]);
    std::uint32_t out = 0;
    for (int r = 0; r < n; ++r)
      if ((src >> op.row_perm[r]) & 1u) out |= std::uint32_t{1} << r;
    if (op.signs[c] == -1) out = ~out & row_mask(n);
    cols[c] = out;
  }
  return DesignMatrix(n, k, std::move(cols));
}

/// Total-order representative of an isomorphism class. Two designs of the
/// same shape get equal bytes exactly when some row permutation, column
/// permutation and sign switch maps one onto the other.
struct CanonicalKey {
  std::string bytes;  // scheme byte + ceil(N/8) bytes per column

  bool operator==(const CanonicalKey& o) const { return bytes == o.bytes; }
  bool operator<(const CanonicalKey& o) const { return bytes < o.bytes; }

  std::string hex() const {
    static const char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char b : bytes) {
      out.push_back(digits[b >> 4]);
      out.push_back(digits[b & 0xf]);
    }
    return out;
  }
};

namespace detail {

// Branch-and-bound search for the minimal representative of a design
// under the full group. The objective reads the transformed matrix
// column-major with rows sorted lexicographically; positions are filled
// left to right, so the string contributed by column position p is fixed
// as soon as positions 0..p are chosen. Within refinement groups a
// column reads as zeros followed by ones, hence the per-group popcounts
// (w-vector) encode that string and compare bytewise.
class CanonicalSearch {
 public:
  CanonicalSearch(const DesignMatrix& d) : n_(d.runs()), k_(d.factors()) {
    full_ = row_mask(n_);
    for (int c = 0; c < k_; ++c) {
      pos_[c] = d.column(c);
      neg_[c] = ~d.column(c) & full_;
    }
  }

  CanonicalKey run() {
    group_count_[0] = 1;
    groups_[0][0] = full_;
    have_best_ = false;
    search(0, (1u << k_) - 1);
    return assemble();
  }

 private:
  static constexpr int kMaxK = 18;
  using WVec = std::array<std::uint8_t, kMaxRuns>;

  void search(int depth, std::uint32_t unused) {
    if (depth == k_) {
      // Tied leaves reproduce the incumbent bytes; strictly better paths
      // replaced it on the way down, so only first arrival records.
      if (!have_best_ || pending_better_) {
        std::memcpy(best_assign_, assign_, sizeof(int) * k_);
        have_best_ = true;
        pending_better_ = false;
        ++generation_;
      }
      return;
    }
    const int ng = group_count_[depth];
    const std::uint32_t* groups = groups_[depth];

    // Evaluate every unused signed column; keep only those achieving the
    // minimal w-vector, since any other candidate is dominated by them.
    WVec best_w;
    int ties[2 * kMaxK];
    int tie_count = 0;
    for (std::uint32_t rest = unused; rest;) {
      const int c = std::countr_zero(rest);
      rest &= rest - 1;
      for (int s = 0; s < 2; ++s) {
        const std::uint32_t m = s ? neg_[c] : pos_[c];
        WVec w;
        int cmp = tie_count == 0 ? -1 : 0;
        for (int g = 0; g < ng; ++g) {
          w[g] = static_cast<std::uint8_t>(std::popcount(m & groups[g]));
          if (cmp == 0) {
            if (w[g] < best_w[g])
              cmp = -1;
            else if (w[g] > best_w[g]) {
              cmp = 1;
              break;
            }
          }
        }
        if (cmp == 1) continue;
        if (cmp == -1) {
          best_w = w;
          tie_count = 0;
        }
        ties[tie_count++] = (c << 1) | s;
      }
    }

    // Compare this position's string against the incumbent's.
    const bool was_pending = pending_better_;
    if (have_best_ && !pending_better_) {
      const int cmp = std::memcmp(best_w.data(), best_w_[depth].data(),
                                  static_cast<std::size_t>(ng));
      if (cmp > 0) return;
      if (cmp < 0) pending_better_ = true;
    }
    best_w_[depth] = best_w;

    for (int t = 0; t < tie_count; ++t) {
      const int enc = ties[t];
      const int c = enc >> 1;
      const std::uint32_t m = (enc & 1) ? neg_[c] : pos_[c];
      // Refine: each group splits into its zero part then its one part.
      int child_ng = 0;
      std::uint32_t* child = groups_[depth + 1];
      for (int g = 0; g < ng; ++g) {
        const std::uint32_t ones = groups[g] & m;
        const std::uint32_t zeros = groups[g] & ~m;
        if (zeros) child[child_ng++] = zeros;
        if (ones) child[child_ng++] = ones;
      }
      group_count_[depth + 1] = child_ng;
      assign_[depth] = enc;

      const std::uint64_t gen = generation_;
      search(depth + 1, unused & ~(1u << c));
      if (generation_ != gen) {
        // The incumbent was replaced below this node, so the current
        // prefix now ties it exactly.
        pending_better_ = false;
      }
    }
    pending_better_ = was_pending;
  }

  CanonicalKey assemble() {
    // Rebuild the final row order from the winning assignment.
    std::vector<std::uint32_t> groups{full_};
    for (int p = 0; p < k_; ++p) {
      const std::uint32_t m = mask_of(best_assign_[p]);
      std::vector<std::uint32_t> next;
      next.reserve(groups.size() * 2);
      for (std::uint32_t g : groups) {
        if (const std::uint32_t zeros = g & ~m) next.push_back(zeros);
        if (const std::uint32_t ones = g & m) next.push_back(ones);
      }
      groups.swap(next);
    }
    std::vector<int> order;
    order.reserve(n_);
    for (std::uint32_t g : groups)
      for (std::uint32_t rest = g; rest; rest &= rest - 1)
        order.push_back(std::countr_zero(rest));

    const int col_bytes = (n_ + 7) / 8;
    CanonicalKey key;
    key.bytes.reserve(1 + static_cast<std::size_t>(col_bytes) * k_);
    key.bytes.push_back(static_cast<char>(kCanonScheme));
    for (int p = 0; p < k_; ++p) {
      const std::uint32_t m = mask_of(best_assign_[p]);
      std::uint32_t packed = 0;
      for (int i = 0; i < n_; ++i)
        if ((m >> order[i]) & 1u) packed |= std::uint32_t{1} << i;
      for (int b = 0; b < col_bytes; ++b)
        key.bytes.push_back(static_cast<char>((packed >> (8 * b)) & 0xff));
    }
    return key;
  }

  std::uint32_t mask_of(int enc) const {
    return (enc & 1) ? neg_[enc >> 1] : pos_[enc >> 1];
  }

  int n_, k_;
  std::uint32_t full_;
  std::uint32_t pos_[kMaxK], neg_[kMaxK];
  std::uint32_t groups_[kMaxK + 1][kMaxRuns];
  int group_count_[kMaxK + 1];
  int assign_[kMaxK];
  int best_assign_[kMaxK];
  WVec best_w_[kMaxK];
  bool have_best_ = false;
  bool pending_better_ = false;
  std::uint64_t generation_ = 0;
};

}  // namespace detail

/// Canonical key of the design's isomorphism class. Deterministic and
/// thread-safe; equal keys exactly characterize isomorphic designs.
inline CanonicalKey canonical_key(const DesignMatrix& d) {
  if (d.factors() > 18)
    throw ShapeError("canonicalization supports at most 18 factors");
  detail::CanonicalSearch search(d);
  return search.run();
}

namespace detail {

// Column-matching backtracker used as an oracle for canonical_key.
class IsoSearch {
 public:
  IsoSearch(const DesignMatrix& a, const DesignMatrix& b) : a_(a), b_(b) {
    n_ = a.runs();
    k_ = a.factors();
  }

  bool run() {
    // Per-column invariants: |sum| and the sorted multiset of |gram|
    // values against the other columns.
    auto signature = [this](const DesignMatrix& d, int c) {
      std::vector<int> sig;
      sig.push_back(std::abs(d.sum(c)));
      std::vector<int> ips;
      for (int o = 0; o < k_; ++o)
        if (o != c) ips.push_back(std::abs(d.gram(c, o)));
      std::sort(ips.begin(), ips.end());
      sig.insert(sig.end(), ips.begin(), ips.end());
      return sig;
    };
    std::vector<std::vector<int>> sig_a(k_), sig_b(k_);
    for (int c = 0; c < k_; ++c) {
      sig_a[c] = signature(a_, c);
      sig_b[c] = signature(b_, c);
    }
    {
      auto sa = sig_a, sb = sig_b;
      std::sort(sa.begin(), sa.end());
      std::sort(sb.begin(), sb.end());
      if (sa != sb) return false;
    }
    candidates_.assign(k_, {});
    for (int i = 0; i < k_; ++i)
      for (int j = 0; j < k_; ++j)
        if (sig_a[i] == sig_b[j]) candidates_[i].push_back(j);

    order_.resize(k_);
    for (int i = 0; i < k_; ++i) order_[i] = i;
    std::sort(order_.begin(), order_.end(), [this](int x, int y) {
      return candidates_[x].size() < candidates_[y].size();
    });
    image_.assign(k_, -1);
    sign_.assign(k_, 0);
    used_ = 0;
    return extend(0);
  }

 private:
  bool extend(int t) {
    if (t == k_) return rows_match();
    const int i = order_[t];
    for (int j : candidates_[i]) {
      if ((used_ >> j) & 1u) continue;
      for (int s = 1; s >= -1; s -= 2) {
        if (b_.sum(j) != s * a_.sum(i)) continue;
        bool ok = true;
        for (int u = 0; u < t && ok; ++u) {
          const int ip = order_[u];
          ok = b_.gram(j, image_[ip]) == s * sign_[ip] * a_.gram(i, ip);
        }
        if (!ok) continue;
        image_[i] = j;
        sign_[i] = s;
        used_ |= 1u << j;
        if (extend(t + 1)) return true;
        used_ &= ~(1u << j);
        image_[i] = -1;
        if (a_.sum(i) != 0) break;  // sign forced by the sums
      }
    }
    return false;
  }

  bool rows_match() const {
    // Build each transformed row of `a` as a k-bit word in b's column
    // order and compare multisets with b's rows.
    std::vector<std::uint32_t> ra(n_, 0), rb(n_, 0);
    for (int i = 0; i < k_; ++i) {
      std::uint32_t col = a_.column(i);
      if (sign_[i] == -1) col = ~col & row_mask(n_);
      for (int r = 0; r < n_; ++r)
        if ((col >> r) & 1u) ra[r] |= std::uint32_t{1} << image_[i];
    }
    for (int j = 0; j < k_; ++j)
      for (int r = 0; r < n_; ++r)
        if ((b_.column(j) >> r) & 1u) rb[r] |= std::uint32_t{1} << j;
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    return ra == rb;
  }

  const DesignMatrix& a_;
  const DesignMatrix& b_;
  int n_, k_;
  std::vector<std::vector<int>> candidates_;
  std::vector<int> order_, image_, sign_;
  std::uint32_t used_ = 0;
};

}  // namespace detail

/// Backtracking isomorphism test, independent of canonical_key.
inline bool are_isomorphic(const DesignMatrix& a, const DesignMatrix& b) {
  if (a.runs() != b.runs() || a.factors() != b.factors())
    throw ShapeError("designs differ in shape");
  detail::IsoSearch search(a, b);
  return search.run();
}

}  // namespace daopt
