#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "daopt/canonical.hpp"
#include "daopt/design.hpp"
#include "daopt/errors.hpp"

namespace daopt {

/// Unique two-factor design with information matrix of the two-block
/// (2,1) form, rows in a fixed order: the replicated points (1,-1) and
/// (1,1) first, then (-1,-1) and (-1,1).
inline DesignMatrix starting_design_n2(int runs) {
  if (runs % 4 != 2 || runs < 6)
    throw RunSizeResidueError("starting design needs runs = 2 mod 4, >= 6");
  const int hi = (runs + 2) / 4, lo = (runs - 2) / 4;
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(runs) * 2);
  for (int r = 0; r < hi; ++r) { rows.push_back(1); rows.push_back(-1); }
  for (int r = 0; r < hi; ++r) { rows.push_back(1); rows.push_back(1); }
  for (int r = 0; r < lo; ++r) { rows.push_back(-1); rows.push_back(-1); }
  for (int r = 0; r < lo; ++r) { rows.push_back(-1); rows.push_back(1); }
  return DesignMatrix::from_levels(runs, 2, rows);
}

/// Unique two-factor design with information matrix (N-1)I + J, rows in a
/// fixed order: (-1,-1), (-1,1), (1,-1) replicated (N-1)/4 times each,
/// then (1,1) replicated (N+3)/4 times.
inline DesignMatrix starting_design_n1(int runs) {
  if (runs % 4 != 1 || runs < 5)
    throw RunSizeResidueError("starting design needs runs = 1 mod 4, >= 5");
  const int q = (runs - 1) / 4;
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(runs) * 2);
  for (int r = 0; r < q; ++r) { rows.push_back(-1); rows.push_back(-1); }
  for (int r = 0; r < q; ++r) { rows.push_back(-1); rows.push_back(1); }
  for (int r = 0; r < q; ++r) { rows.push_back(1); rows.push_back(-1); }
  for (int r = 0; r < q + 1; ++r) { rows.push_back(1); rows.push_back(1); }
  return DesignMatrix::from_levels(runs, 2, rows);
}

enum class CandidateKind {
  Zeta1,      // columns summing to 1, inner product 1 with both start columns
  Zeta2Star,  // columns summing to 2, inner products (2, 0) with the start
  Zeta0Star,  // columns summing to 0, inner products (0, 2) with the start
};

inline std::string candidate_kind_name(CandidateKind kind) {
  switch (kind) {
    case CandidateKind::Zeta1: return "zeta1";
    case CandidateKind::Zeta2Star: return "zeta2*";
    case CandidateKind::Zeta0Star: return "zeta0*";
  }
  return "?";
}

/// Pool of packed candidate columns, in ascending packed-bit order.
struct CandidateSet {
  int run_size = 0;
  CandidateKind kind = CandidateKind::Zeta1;
  std::vector<std::uint32_t> columns;
};

/// Enumerates all columns of the required weight and keeps those passing
/// the inner-product conditions against the two starting-design columns.
inline CandidateSet build_candidate_set(int runs, CandidateKind kind) {
  int weight, need1, need2;
  DesignMatrix start = [&] {
    switch (kind) {
      case CandidateKind::Zeta1:
        weight = (runs + 1) / 2;
        need1 = need2 = 1;
        return starting_design_n1(runs);
      case CandidateKind::Zeta2Star:
        weight = (runs + 2) / 2;
        need1 = 2;
        need2 = 0;
        return starting_design_n2(runs);
      case CandidateKind::Zeta0Star:
        weight = runs / 2;
        need1 = 0;
        need2 = 2;
        return starting_design_n2(runs);
    }
    throw Error("unreachable");
  }();
  const std::uint32_t c1 = start.column(0), c2 = start.column(1);
  const std::uint32_t limit = std::uint32_t{1} << runs;

  CandidateSet set;
  set.run_size = runs;
  set.kind = kind;
  // Gosper's hack walks the fixed-weight masks in ascending order.
  std::uint32_t v = (std::uint32_t{1} << weight) - 1;
  while (v < limit) {
    if (inner_product(v, c1, runs) == need1 &&
        inner_product(v, c2, runs) == need2)
      set.columns.push_back(v);
    const std::uint32_t c = v & -v;
    const std::uint32_t r = v + c;
    v = (((r ^ v) >> 2) / c) | r;
  }
  return set;
}

/// Accumulator for one extension stage: the key set is the D1 database of
/// canonical forms, the design list is the D2 database of form-respecting
/// representatives (parent columns plus the appended candidate).
struct StageState {
  int factors = 0;
  FormSpec form;
  std::unordered_map<std::string, std::size_t> d1_keys;
  std::vector<DesignMatrix> d2_designs;

  bool insert(std::string key_bytes, DesignMatrix design) {
    auto [it, fresh] = d1_keys.emplace(std::move(key_bytes), d2_designs.size());
    if (fresh) d2_designs.push_back(std::move(design));
    return fresh;
  }

  /// Canonical key of each stored design, aligned with d2_designs.
  std::vector<std::string> keys_by_index() const {
    std::vector<std::string> keys(d2_designs.size());
    for (const auto& [key, index] : d1_keys) keys[index] = key;
    return keys;
  }
};

namespace detail {

// Column indices of the parent split by column sum; the sum-2 group is
// scanned first because its constraint rejects sooner.
struct ParentGroups {
  int sum2[kMaxRuns];
  int sum0[kMaxRuns];
  int n_sum2 = 0, n_sum0 = 0;

  explicit ParentGroups(const DesignMatrix& parent) {
    for (int c = 0; c < parent.factors(); ++c) {
      if (parent.sum(c) == 2)
        sum2[n_sum2++] = c;
      else
        sum0[n_sum0++] = c;
    }
  }
};

inline bool feasible(const DesignMatrix& parent, const ParentGroups& groups,
                     std::uint32_t cand, CandidateKind kind) {
  const int n = parent.runs();
  int need2 = 1, need0 = 1;
  switch (kind) {
    case CandidateKind::Zeta1: need2 = need0 = 1; break;
    case CandidateKind::Zeta2Star: need2 = 2; need0 = 0; break;
    case CandidateKind::Zeta0Star: need2 = 0; need0 = 2; break;
  }
  for (int i = 0; i < groups.n_sum2; ++i)
    if (inner_product(cand, parent.column(groups.sum2[i]), n) != need2)
      return false;
  for (int i = 0; i < groups.n_sum0; ++i)
    if (inner_product(cand, parent.column(groups.sum0[i]), n) != need0)
      return false;
  return true;
}

}  // namespace detail

/// Extends one parent with every feasible candidate column, inserting the
/// children into the stage databases keyed by canonical form.
inline void extend_one(const DesignMatrix& parent, const CandidateSet& candidates,
                       StageState& state) {
  detail::ParentGroups groups(parent);
  for (std::uint32_t cand : candidates.columns) {
    if (!detail::feasible(parent, groups, cand, candidates.kind)) continue;
    DesignMatrix child = parent.with_column(cand);
    CanonicalKey key = canonical_key(child);
    state.insert(std::move(key.bytes), std::move(child));
  }
}

struct EnumerationOptions {
  // 0 resolves to the DACAT_WORKERS environment variable, then to the
  // hardware concurrency.
  int workers = 0;
  // Retain per-stage results in the returned map. Turn off for long runs
  // that stream stages to disk through on_stage.
  bool retain_results = true;
  // Called once per completed (k, form) bucket, in stage order, with the
  // canonical keys aligned to the designs. Keys are empty for buckets
  // that came through preload.
  std::function<void(int, const FormSpec&, const std::vector<DesignMatrix>&,
                     const std::vector<std::string>&)>
      on_stage;
  // Resume hook: fill the bucket from storage and return true to skip
  // recomputation. Must behave consistently for all buckets of a stage.
  std::function<bool(int, const FormSpec&, std::vector<DesignMatrix>&)> preload;
};

inline int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("DACAT_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

namespace detail {

// Runs one extension stage over all parents. Parents are processed in
// chunks; chunk results are merged in chunk order, so the catalog is
// identical to a sequential first-wins run for any worker count.
inline StageState run_stage(const std::vector<DesignMatrix>& parents,
                            const CandidateSet& candidates, int child_factors,
                            const FormSpec& child_form, int workers) {
  StageState state;
  state.factors = child_factors;
  state.form = child_form;

  if (parents.empty()) return state;

  using ChunkResult = std::vector<std::pair<std::string, DesignMatrix>>;
  const int n_parents = static_cast<int>(parents.size());
  const int chunk_size =
      std::max(1, n_parents / (std::max(1, workers) * 8));
  const int n_chunks = (n_parents + chunk_size - 1) / chunk_size;
  std::vector<ChunkResult> results(n_chunks);

  auto process_chunk = [&](int chunk) {
    const int begin = chunk * chunk_size;
    const int end = std::min(n_parents, begin + chunk_size);
    // Local dedup only trims duplicates discovered within the chunk; the
    // authoritative merge happens below.
    std::unordered_map<std::string, std::size_t> seen;
    ChunkResult& out = results[chunk];
    for (int p = begin; p < end; ++p) {
      const DesignMatrix& parent = parents[p];
      ParentGroups groups(parent);
      for (std::uint32_t cand : candidates.columns) {
        if (!feasible(parent, groups, cand, candidates.kind)) continue;
        DesignMatrix child = parent.with_column(cand);
        CanonicalKey key = canonical_key(child);
        if (seen.emplace(key.bytes, out.size()).second)
          out.emplace_back(std::move(key.bytes), std::move(child));
      }
    }
  };

  auto merge_chunk = [&](int c) {
    for (auto& [key, design] : results[c])
      state.insert(std::move(key), std::move(design));
    results[c] = ChunkResult{};
  };

  if (workers <= 1 || n_chunks == 1) {
    for (int c = 0; c < n_chunks; ++c) {
      process_chunk(c);
      merge_chunk(c);
    }
  } else {
    // Workers pull chunks dynamically; the merge below still runs in
    // chunk order, so scheduling cannot change the catalog.
    std::atomic<int> next{0};
    std::vector<std::atomic<bool>> done(n_chunks);
    std::mutex mu;
    std::condition_variable cv;
    auto pull = [&] {
      for (;;) {
        const int c = next.fetch_add(1);
        if (c >= n_chunks) break;
        process_chunk(c);
        done[c].store(true);
        cv.notify_all();
      }
    };
    std::vector<std::thread> pool;
    const int n_threads = std::min(workers, n_chunks);
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(pull);
    for (int c = 0; c < n_chunks; ++c) {
      std::unique_lock<std::mutex> lock(mu);
      cv.wait(lock, [&] { return done[c].load(); });
      lock.unlock();
      merge_chunk(c);
    }
    for (auto& t : pool) t.join();
  }
  return state;
}

}  // namespace detail

struct BucketKey {
  int factors = 0;
  FormSpec form;

  bool operator<(const BucketKey& o) const {
    if (factors != o.factors) return factors < o.factors;
    return form < o.form;
  }
};

using Catalog = std::map<BucketKey, std::vector<DesignMatrix>>;

/**
 * Complete staged enumeration of the non-isomorphic optimal-form designs
 * for the given run size, from 3 factors up to max_factors. For run sizes
 * two more than a multiple of four, even factor counts produce the two
 * block forms as separate buckets; odd stages extend the (lambda,
 * lambda+1) family with the smaller sum-2 candidate pool.
 */
inline Catalog enumerate_catalog(int runs, int max_factors,
                                 const EnumerationOptions& options = {}) {
  if (runs > 18 || (runs % 4 != 1 && runs % 4 != 2))
    throw RunSizeResidueError(
        "enumeration supports runs <= 18 with residue 1 or 2 mod 4");
  if (max_factors < 3 || max_factors > runs - 1)
    throw ShapeError("max factors must lie in [3, runs - 1]");
  const int workers = resolve_workers(options.workers);

  Catalog catalog;
  // obtain() yields the bucket's designs and, for freshly computed
  // stages, their canonical keys; emit() forwards both downstream.
  struct StageResult {
    std::vector<DesignMatrix> designs;
    std::vector<std::string> keys;
  };
  auto emit = [&](int k, const FormSpec& form, const StageResult& result) {
    if (options.on_stage) options.on_stage(k, form, result.designs, result.keys);
    if (options.retain_results) catalog[BucketKey{k, form}] = result.designs;
  };
  auto obtain = [&](int k, const FormSpec& form,
                    const std::vector<DesignMatrix>& parents,
                    const CandidateSet& cands) {
    StageResult result;
    if (options.preload && options.preload(k, form, result.designs))
      return result;
    StageState state = detail::run_stage(parents, cands, k, form, workers);
    result.keys = state.keys_by_index();
    result.designs = std::move(state.d2_designs);
    return result;
  };

  if (runs % 4 == 1) {
    const CandidateSet zeta = build_candidate_set(runs, CandidateKind::Zeta1);
    std::vector<DesignMatrix> current{starting_design_n1(runs)};
    for (int k = 3; k <= max_factors; ++k) {
      StageResult stage = obtain(k, FormSpec::n1(), current, zeta);
      emit(k, FormSpec::n1(), stage);
      current = std::move(stage.designs);
    }
    return catalog;
  }

  const CandidateSet zeta2 = build_candidate_set(runs, CandidateKind::Zeta2Star);
  const CandidateSet zeta0 = build_candidate_set(runs, CandidateKind::Zeta0Star);
  // prev_odd holds the single bucket of the last odd stage; prev_lo the
  // (lambda, lambda+1) bucket of the last even stage.
  std::vector<DesignMatrix> prev_odd{starting_design_n2(runs)};
  std::vector<DesignMatrix> prev_lo;
  for (int k = 3; k <= max_factors; ++k) {
    if (k == 3) {
      const FormSpec form = FormSpec::n2(2, 2);
      StageResult stage = obtain(k, form, prev_odd, zeta0);
      emit(k, form, stage);
      prev_odd = std::move(stage.designs);
    } else if (k % 2 == 0) {
      const int lambda = k / 2;
      const FormSpec lo = FormSpec::n2(lambda, lambda + 1);
      const FormSpec hi = FormSpec::n2(lambda + 1, lambda);
      StageResult lo_stage = obtain(k, lo, prev_odd, zeta0);
      emit(k, lo, lo_stage);
      StageResult hi_stage = obtain(k, hi, prev_odd, zeta2);
      emit(k, hi, hi_stage);
      prev_lo = std::move(lo_stage.designs);
      prev_odd.clear();
    } else {
      const int lambda = (k - 1) / 2;
      const FormSpec form = FormSpec::n2(lambda + 1, lambda + 1);
      StageResult stage = obtain(k, form, prev_lo, zeta2);
      emit(k, form, stage);
      prev_odd = std::move(stage.designs);
      prev_lo.clear();
    }
  }
  return catalog;
}

/// Whether the saturated single-block form exists for this run size:
/// sqrt(2N - 1) must be an odd integer.
inline bool saturated_n1_form_exists(int runs) {
  const int target = 2 * runs - 1;
  for (int r = 1; r * r <= target; r += 2)
    if (r * r == target) return true;
  return false;
}

}  // namespace daopt
