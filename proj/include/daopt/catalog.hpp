#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "daopt/canonical.hpp"
#include "daopt/criteria.hpp"
#include "daopt/design.hpp"
#include "daopt/enumerate.hpp"
#include "daopt/errors.hpp"
#include "daopt/oa.hpp"

namespace daopt {

inline constexpr int kCatalogSchema = 1;

/// Persisted unit: a design with its form, canonical key and optional
/// characterization results.
struct CatalogRecord {
  DesignMatrix design;
  FormSpec form;
  std::string key_bytes;
  std::optional<AberrationProfile> profile;
  std::optional<bool> oa_derivable;
};

struct CatalogFile {
  int runs = 0;
  int factors = 0;
  FormSpec form;
  std::string note;
  std::vector<CatalogRecord> records;
};

inline std::string catalog_filename(int runs, int factors, const FormSpec& form) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "da_N%02d_k%02d_%s.cat", runs, factors,
                form.name().c_str());
  return buf;
}

namespace catalog_detail {

inline std::string to_hex(const std::string& bytes) {
  static const char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

inline std::string from_hex(const std::string& hex, int line) {
  if (hex.size() % 2 != 0) throw ParseError("odd-length hex string", line);
  auto nibble = [&](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    throw ParseError("invalid hex digit", line);
  };
  std::string out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2)
    out.push_back(static_cast<char>((nibble(hex[i]) << 4) | nibble(hex[i + 1])));
  return out;
}

inline FormSpec parse_form(const std::string& name, int line) {
  if (name == "n1") return FormSpec::n1();
  if (name.size() >= 4 && name[0] == 'g') {
    const auto x = name.find('x');
    if (x != std::string::npos && x > 1) {
      try {
        const int i = std::stoi(name.substr(1, x - 1));
        const int j = std::stoi(name.substr(x + 1));
        return FormSpec::n2(i, j);
      } catch (const std::exception&) {
      }
    }
  }
  throw ParseError("unrecognized form name: " + name, line);
}

inline std::string frequencies_str(const FrequencyVector& f) {
  if (f.entries.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < f.entries.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(f.entries[i].first) + ":" +
           std::to_string(f.entries[i].second);
  }
  return out;
}

inline FrequencyVector parse_frequencies(int order, const std::string& text,
                                         int line) {
  FrequencyVector f;
  f.order = order;
  if (text == "-") return f;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ParseError("malformed frequency entry: " + item, line);
    try {
      f.entries.emplace_back(std::stoi(item.substr(0, colon)),
                             std::stoi(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ParseError("malformed frequency entry: " + item, line);
    }
  }
  return f;
}

inline Fraction parse_fraction(const std::string& text, int line) {
  const auto slash = text.find('/');
  if (slash == std::string::npos)
    throw ParseError("malformed rational: " + text, line);
  try {
    return Fraction(std::stoll(text.substr(0, slash)),
                    std::stoll(text.substr(slash + 1)));
  } catch (const std::exception&) {
    throw ParseError("malformed rational: " + text, line);
  }
}

}  // namespace catalog_detail

/// Serializes a catalog deterministically: header, then records sorted by
/// canonical key, one run per line with '+'/'-' characters. The write is
/// atomic (temp file plus rename).
inline void write_catalog(const CatalogFile& file, const std::string& path) {
  for (const CatalogRecord& rec : file.records) {
    if (rec.design.runs() != file.runs || rec.design.factors() != file.factors)
      throw ShapeError("record does not match catalog dimensions");
    if (!(rec.form == file.form))
      throw SpecShapeError("record form differs from catalog form");
  }
  std::vector<const CatalogRecord*> order;
  order.reserve(file.records.size());
  for (const CatalogRecord& rec : file.records) order.push_back(&rec);
  std::sort(order.begin(), order.end(),
            [](const CatalogRecord* a, const CatalogRecord* b) {
              return a->key_bytes < b->key_bytes;
            });

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + tmp);
    out << "# schema=" << kCatalogSchema << "\n";
    out << "# runs=" << file.runs << "\n";
    out << "# factors=" << file.factors << "\n";
    out << "# form=" << file.form.name() << "\n";
    out << "# count=" << file.records.size() << "\n";
    out << "# canon-scheme=" << static_cast<int>(kCanonScheme) << "\n";
    if (!file.note.empty()) out << "# note=" << file.note << "\n";
    out << "\n";
    for (const CatalogRecord* rec : order) {
      out << "# key=" << catalog_detail::to_hex(rec->key_bytes) << "\n";
      if (rec->oa_derivable)
        out << "# oa=" << (*rec->oa_derivable ? 1 : 0) << "\n";
      if (rec->profile) {
        out << "# f3=" << catalog_detail::frequencies_str(rec->profile->f3)
            << "\n";
        out << "# f4=" << catalog_detail::frequencies_str(rec->profile->f4)
            << "\n";
        out << "# c2=" << rec->profile->c2.str() << "\n";
        out << "# c3=" << rec->profile->c3.str() << "\n";
      }
      for (int r = 0; r < file.runs; ++r) {
        for (int c = 0; c < file.factors; ++c)
          out.put(rec->design.entry(r, c) == 1 ? '+' : '-');
        out.put('\n');
      }
      out.put('\n');
    }
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline CatalogFile read_catalog(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingDataError("cannot open catalog: " + path);

  CatalogFile file;
  std::map<std::string, std::string> header;
  std::string line;
  int line_no = 0;

  // Header block up to the first blank line.
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) break;
    if (line.rfind("# ", 0) != 0)
      throw ParseError("expected '# key=value' header line", line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("missing '=' in header", line_no);
    header[line.substr(2, eq - 2)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) {
    auto it = header.find(key);
    if (it == header.end())
      throw ParseError("missing header field: " + key, line_no);
    return it->second;
  };
  if (need("schema") != std::to_string(kCatalogSchema))
    throw VersionError("unsupported catalog schema: " + header["schema"]);
  if (need("canon-scheme") != std::to_string(static_cast<int>(kCanonScheme)))
    throw VersionError("catalog uses a different canonicalization scheme");
  std::size_t count = 0;
  try {
    file.runs = std::stoi(need("runs"));
    file.factors = std::stoi(need("factors"));
    count = std::stoul(need("count"));
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError("malformed numeric header field", line_no);
  }
  if (file.runs < 2 || file.runs > kMaxRuns || file.factors < 1 ||
      file.factors > 18)
    throw ParseError("dimensions out of range", line_no);
  file.form = catalog_detail::parse_form(need("form"), line_no);
  if (auto it = header.find("note"); it != header.end()) file.note = it->second;

  // Records.
  std::map<std::string, std::string> meta;
  std::vector<std::string> rows;
  auto flush_record = [&](int at_line) {
    if (meta.empty() && rows.empty()) return;
    if (static_cast<int>(rows.size()) != file.runs)
      throw ParseError("record does not have one line per run", at_line);
    auto key_it = meta.find("key");
    if (key_it == meta.end()) throw ParseError("record lacks a key", at_line);
    CatalogRecord rec{DesignMatrix(file.runs, file.factors,
                                   std::vector<std::uint32_t>(file.factors, 0)),
                      file.form,
                      catalog_detail::from_hex(key_it->second, at_line),
                      std::nullopt,
                      std::nullopt};
    std::vector<std::uint32_t> cols(file.factors, 0);
    for (int r = 0; r < file.runs; ++r) {
      for (int c = 0; c < file.factors; ++c)
        if (rows[r][c] == '+') cols[c] |= std::uint32_t{1} << r;
    }
    rec.design = DesignMatrix(file.runs, file.factors, std::move(cols));
    if (auto it = meta.find("oa"); it != meta.end()) {
      if (it->second != "0" && it->second != "1")
        throw ParseError("oa flag must be 0 or 1", at_line);
      rec.oa_derivable = it->second == "1";
    }
    if (meta.count("f3") || meta.count("c2")) {
      for (const char* k : {"f3", "f4", "c2", "c3"})
        if (!meta.count(k))
          throw ParseError("partial characterization in record", at_line);
      AberrationProfile p;
      p.form = file.form;
      p.f3 = catalog_detail::parse_frequencies(3, meta["f3"], at_line);
      p.f4 = catalog_detail::parse_frequencies(4, meta["f4"], at_line);
      p.c2 = catalog_detail::parse_fraction(meta["c2"], at_line);
      p.c3 = catalog_detail::parse_fraction(meta["c3"], at_line);
      rec.profile = std::move(p);
    }
    if (!file.records.empty() &&
        !(file.records.back().key_bytes < rec.key_bytes))
      throw ParseError("records are not sorted by key", at_line);
    file.records.push_back(std::move(rec));
    meta.clear();
    rows.clear();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      flush_record(line_no);
      continue;
    }
    if (line.rfind("# ", 0) == 0) {
      if (!rows.empty())
        throw ParseError("metadata after design rows", line_no);
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ParseError("missing '=' in record metadata", line_no);
      meta[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (static_cast<int>(line.size()) != file.factors)
      throw ParseError("design row has wrong length", line_no);
    for (char ch : line)
      if (ch != '+' && ch != '-')
        throw ParseError("design rows may only contain '+' and '-'", line_no);
    rows.push_back(line);
  }
  flush_record(line_no);

  if (file.records.size() != count)
    throw ParseError("count header does not match record count", line_no);
  return file;
}

/// All catalog files directly inside a directory, sorted by name.
inline std::vector<std::string> list_catalogs(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  if (!fs::is_directory(dir))
    throw MissingDataError("not a directory: " + dir);
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".cat")
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty())
    throw MissingDataError("no catalog files in " + dir);
  return paths;
}

namespace catalog_detail {

template <typename Fn>
void parallel_over_records(std::size_t count, int workers, Fn&& fn) {
  workers = std::min<int>(workers, static_cast<int>(count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < count; i += workers) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace catalog_detail

/// Fills in the aberration profile of every record, rewriting in place.
inline void characterize_catalog_file(const std::string& path, int workers = 0) {
  CatalogFile file = read_catalog(path);
  const int w = resolve_workers(workers);
  catalog_detail::parallel_over_records(
      file.records.size(), w, [&](std::size_t i) {
        CatalogRecord& rec = file.records[i];
        rec.profile = characterize_design(rec.design, rec.form);
      });
  write_catalog(file, path);
}

/// Fills in the orthogonal-array derivability flag of every record.
inline void classify_catalog_file(const std::string& path, int workers = 0) {
  CatalogFile file = read_catalog(path);
  const int w = resolve_workers(workers);
  catalog_detail::parallel_over_records(
      file.records.size(), w, [&](std::size_t i) {
        CatalogRecord& rec = file.records[i];
        rec.oa_derivable = classify(rec.design).derivable;
      });
  write_catalog(file, path);
}

/// Outcome of a checkpointed enumeration into a directory.
struct DirectoryEnumeration {
  double compute_seconds = 0.0;  // excludes stages resumed from disk
  bool resumed_any = false;
  bool computed_any = false;
};

/**
 * Runs the staged enumeration with one catalog file per (k, form) bucket
 * under `dir`. Buckets already on disk are loaded instead of recomputed,
 * so an interrupted run resumes from its last completed stage.
 */
inline DirectoryEnumeration enumerate_to_directory(int runs, int max_factors,
                                                   const std::string& dir,
                                                   int workers = 0,
                                                   bool verbose = false) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  DirectoryEnumeration result;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  EnumerationOptions options;
  options.workers = workers;
  options.retain_results = false;
  options.preload = [&](int k, const FormSpec& form,
                        std::vector<DesignMatrix>& out) {
    const std::string path =
        (fs::path(dir) / catalog_filename(runs, k, form)).string();
    if (!fs::exists(path)) return false;
    const CatalogFile file = read_catalog(path);
    out.reserve(file.records.size());
    for (const auto& rec : file.records) out.push_back(rec.design);
    result.resumed_any = true;
    if (verbose) {
      std::printf("  k=%-2d %-6s %8zu designs (resumed)\n", k,
                  form.name().c_str(), out.size());
      std::fflush(stdout);
    }
    return true;
  };
  options.on_stage = [&](int k, const FormSpec& form,
                         const std::vector<DesignMatrix>& designs,
                         const std::vector<std::string>& keys) {
    const std::string path =
        (fs::path(dir) / catalog_filename(runs, k, form)).string();
    if (fs::exists(path)) return;  // reached through preload
    result.computed_any = true;
    CatalogFile file;
    file.runs = runs;
    file.factors = k;
    file.form = form;
    if (designs.empty() && runs % 4 == 1 && k == runs - 1 &&
        !saturated_n1_form_exists(runs)) {
      file.note =
          "saturated case: the target information-matrix form requires "
          "sqrt(2N-1) to be an odd integer, which fails for N=" +
          std::to_string(runs) + "; the catalog is exactly empty";
      if (verbose) std::printf("  note: %s\n", file.note.c_str());
    }
    const bool have_keys = keys.size() == designs.size();
    file.records.reserve(designs.size());
    for (std::size_t i = 0; i < designs.size(); ++i) {
      std::string key =
          have_keys ? keys[i] : canonical_key(designs[i]).bytes;
      file.records.push_back(CatalogRecord{designs[i], form, std::move(key),
                                           std::nullopt, std::nullopt});
    }
    write_catalog(file, path);
    if (verbose) {
      std::printf("  k=%-2d %-6s %8zu designs  %8.2f s\n", k,
                  form.name().c_str(), designs.size(), elapsed());
      std::fflush(stdout);
    }
  };
  enumerate_catalog(runs, max_factors, options);
  result.compute_seconds = elapsed();
  return result;
}

struct CountRow {
  int runs = 0;
  int factors = 0;
  FormSpec form;
  std::size_t total = 0;
  std::optional<std::size_t> not_derivable;
};

/// Per-(N, k, form) totals T and, when classified, T_no.
inline std::vector<CountRow> report_counts(const std::string& dir) {
  std::vector<CountRow> rows;
  for (const std::string& path : list_catalogs(dir)) {
    const CatalogFile file = read_catalog(path);
    CountRow row;
    row.runs = file.runs;
    row.factors = file.factors;
    row.form = file.form;
    row.total = file.records.size();
    bool all_flagged = true;
    std::size_t not_derivable = 0;
    for (const CatalogRecord& rec : file.records) {
      if (!rec.oa_derivable) {
        all_flagged = false;
        break;
      }
      not_derivable += *rec.oa_derivable ? 0 : 1;
    }
    if (all_flagged) row.not_derivable = not_derivable;
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const CountRow& a, const CountRow& b) {
    if (a.runs != b.runs) return a.runs < b.runs;
    if (a.factors != b.factors) return a.factors < b.factors;
    return a.form < b.form;
  });
  return rows;
}

enum class RankCriterion { G, G2 };

struct BestRow {
  int runs = 0;
  int factors = 0;
  FormSpec form;
  std::string key_bytes;
  std::pair<int, int> j3;  // (max J3 value, frequency)
  std::optional<std::pair<int, int>> j4;
  Fraction c2{0, 1};
  Fraction c3{0, 1};
  std::optional<bool> oa_derivable;
};

/// Winner per (N, k, form) bucket under the chosen aberration criterion.
inline std::vector<BestRow> report_best(const std::string& dir,
                                        RankCriterion criterion) {
  std::vector<BestRow> rows;
  for (const std::string& path : list_catalogs(dir)) {
    const CatalogFile file = read_catalog(path);
    if (file.records.empty()) continue;
    std::vector<CharacterizedDesign> designs;
    designs.reserve(file.records.size());
    for (const CatalogRecord& rec : file.records) {
      if (!rec.profile)
        throw MissingDataError("uncharacterized catalog: " + path);
      designs.push_back(
          CharacterizedDesign{rec.design, *rec.profile, rec.key_bytes});
    }
    const std::vector<std::size_t> order =
        criterion == RankCriterion::G ? rank_g(designs) : rank_g2(designs);
    const std::size_t win = order.front();
    const CatalogRecord& rec = file.records[win];

    BestRow row;
    row.runs = file.runs;
    row.factors = file.factors;
    row.form = file.form;
    row.key_bytes = rec.key_bytes;
    const AberrationProfile& p = *rec.profile;
    row.j3 = p.f3.entries.front();
    if (!p.f4.entries.empty()) row.j4 = p.f4.entries.front();
    row.c2 = p.c2;
    row.c3 = p.c3;
    row.oa_derivable = rec.oa_derivable;
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const BestRow& a, const BestRow& b) {
    if (a.runs != b.runs) return a.runs < b.runs;
    if (a.factors != b.factors) return a.factors < b.factors;
    return a.form < b.form;
  });
  return rows;
}

inline std::string key_hex(const std::string& key_bytes) {
  return catalog_detail::to_hex(key_bytes);
}

namespace catalog_detail {

inline std::string fixed3(const Fraction& f) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3f", f.value());
  return buf;
}

}  // namespace catalog_detail

/// Aligned text table of counts, mirroring the per-run-size catalogs.
inline std::string render_counts_text(const std::vector<CountRow>& rows) {
  std::ostringstream out;
  out << "runs  k   form   T        T_no\n";
  for (const CountRow& row : rows) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%-5d %-3d %-6s %-8zu %s\n", row.runs,
                  row.factors, row.form.name().c_str(), row.total,
                  row.not_derivable ? std::to_string(*row.not_derivable).c_str()
                                    : "-");
    out << buf;
  }
  return out.str();
}

/// Tab-separated counts table; the machine-readable surface.
inline std::string render_counts_machine(const std::vector<CountRow>& rows) {
  std::ostringstream out;
  out << "runs\tfactors\tform\tT\tT_no\n";
  for (const CountRow& row : rows) {
    out << row.runs << '\t' << row.factors << '\t' << row.form.name() << '\t'
        << row.total << '\t'
        << (row.not_derivable ? std::to_string(*row.not_derivable) : "-")
        << '\n';
  }
  return out.str();
}

inline std::string render_best_text(const std::vector<BestRow>& rows) {
  std::ostringstream out;
  out << "runs  k   form   (J3max, f)   (J4max, f)   C2        C3        nOA  design\n";
  for (const BestRow& row : rows) {
    char j3[24], j4[24];
    std::snprintf(j3, sizeof(j3), "(%d, %d)", row.j3.first, row.j3.second);
    if (row.j4)
      std::snprintf(j4, sizeof(j4), "(%d, %d)", row.j4->first, row.j4->second);
    else
      std::snprintf(j4, sizeof(j4), "-");
    const char* noa = "-";
    if (row.oa_derivable) noa = *row.oa_derivable ? "" : "x";
    char buf[224];
    std::snprintf(buf, sizeof(buf), "%-5d %-3d %-6s %-12s %-12s %-9s %-9s %-4s %.12s\n",
                  row.runs, row.factors, row.form.name().c_str(), j3, j4,
                  catalog_detail::fixed3(row.c2).c_str(),
                  catalog_detail::fixed3(row.c3).c_str(), noa,
                  key_hex(row.key_bytes).c_str());
    out << buf;
  }
  return out.str();
}

inline std::string render_best_machine(const std::vector<BestRow>& rows) {
  std::ostringstream out;
  out << "runs\tfactors\tform\tj3max\tj3f\tj4max\tj4f\tc2\tc3\tnoa\tkey\n";
  for (const BestRow& row : rows) {
    out << row.runs << '\t' << row.factors << '\t' << row.form.name() << '\t'
        << row.j3.first << '\t' << row.j3.second << '\t';
    if (row.j4)
      out << row.j4->first << '\t' << row.j4->second << '\t';
    else
      out << "-\t-\t";
    out << catalog_detail::fixed3(row.c2) << '\t'
        << catalog_detail::fixed3(row.c3) << '\t';
    if (row.oa_derivable)
      out << (*row.oa_derivable ? "0" : "1");
    else
      out << "-";
    out << '\t' << key_hex(row.key_bytes) << '\n';
  }
  return out.str();
}

}  // namespace daopt
