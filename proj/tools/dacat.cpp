// Command-line driver for enumerating, characterizing, ranking and
// verifying catalogs of two-level D- and A-optimal main-effects designs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "daopt/catalog.hpp"
#include "daopt/oracle.hpp"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int run_enumerate(int runs, int max_factors, const std::string& out_dir,
                  bool allow_long) {
  if (runs == 18 && max_factors >= 9 && !allow_long) {
    std::cerr << "error: 18-run catalogs beyond 8 factors take days; "
                 "pass --allow-long to proceed (stages checkpoint to --out "
                 "and the run resumes from the last completed stage)\n";
    return 2;
  }
  std::printf("enumerating N=%d up to k=%d (workers: %d)\n", runs, max_factors,
              daopt::resolve_workers(0));
  const daopt::DirectoryEnumeration result =
      daopt::enumerate_to_directory(runs, max_factors, out_dir, 0, true);
  std::printf("done in %.2f s\n", result.compute_seconds);
  return 0;
}

int run_characterize(const std::string& dir) {
  for (const std::string& path : daopt::list_catalogs(dir)) {
    auto t0 = Clock::now();
    daopt::characterize_catalog_file(path);
    std::printf("  %s characterized (%.2f s)\n", path.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return 0;
}

int run_classify(const std::string& dir) {
  for (const std::string& path : daopt::list_catalogs(dir)) {
    auto t0 = Clock::now();
    daopt::classify_catalog_file(path);
    std::printf("  %s classified (%.2f s)\n", path.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return 0;
}

int run_rank(const std::string& dir, const std::string& criterion) {
  const bool g2 = criterion == "g2";
  for (const std::string& path : daopt::list_catalogs(dir)) {
    const daopt::CatalogFile file = daopt::read_catalog(path);
    if (file.records.empty()) {
      std::printf("N=%d k=%d %s: empty catalog\n", file.runs, file.factors,
                  file.form.name().c_str());
      continue;
    }
    std::vector<daopt::CharacterizedDesign> designs;
    designs.reserve(file.records.size());
    for (const auto& rec : file.records) {
      if (!rec.profile)
        throw daopt::MissingDataError("uncharacterized catalog: " + path);
      designs.push_back(
          daopt::CharacterizedDesign{rec.design, *rec.profile, rec.key_bytes});
    }
    const auto order = g2 ? daopt::rank_g2(designs) : daopt::rank_g(designs);
    std::printf("N=%d k=%d %s (%s):\n", file.runs, file.factors,
                file.form.name().c_str(), g2 ? "g2" : "g");
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const auto& d = designs[order[pos]];
      const auto& j3 = d.profile.f3.entries.front();
      std::printf("  %4zu  (%2d,%4d)", pos + 1, j3.first, j3.second);
      if (!d.profile.f4.entries.empty()) {
        const auto& j4 = d.profile.f4.entries.front();
        std::printf("  (%2d,%4d)", j4.first, j4.second);
      } else {
        std::printf("  %9s", "-");
      }
      std::printf("  %9.3f  %9.3f  %s\n", d.profile.c2_value(),
                  d.profile.c3_value(),
                  daopt::key_hex(d.key_bytes).substr(0, 16).c_str());
    }
  }
  return 0;
}

int run_report(const std::string& what, const std::string& dir,
               const std::string& criterion) {
  if (what == "counts") {
    const auto rows = daopt::report_counts(dir);
    std::cout << daopt::render_counts_text(rows) << "\n";
    std::cout << daopt::render_counts_machine(rows);
    return 0;
  }
  const auto crit = criterion == "g2" ? daopt::RankCriterion::G2
                                      : daopt::RankCriterion::G;
  const auto rows = daopt::report_best(dir, crit);
  std::cout << daopt::render_best_text(rows) << "\n";
  std::cout << daopt::render_best_machine(rows);
  return 0;
}

int run_verify(int runs, int factors) {
  std::printf("verifying N=%d k=%d against the brute-force reference\n", runs,
              factors);
  const daopt::OracleCatalog oracle = daopt::brute_force_catalog(runs, factors);
  const daopt::Catalog catalog = daopt::enumerate_catalog(runs, factors);
  bool ok = true;
  for (const auto& [form, classes] : oracle.by_form) {
    const auto it = catalog.find(daopt::BucketKey{factors, form});
    const std::vector<daopt::DesignMatrix> empty;
    const auto& mine = it == catalog.end() ? empty : it->second;
    bool bucket_ok = mine.size() == classes.size();
    if (bucket_ok) {
      std::vector<bool> used(mine.size(), false);
      for (const auto& ref : classes) {
        bool matched = false;
        for (std::size_t i = 0; i < mine.size(); ++i) {
          if (!used[i] && daopt::are_isomorphic(ref, mine[i])) {
            used[i] = true;
            matched = true;
            break;
          }
        }
        if (!matched) {
          bucket_ok = false;
          break;
        }
      }
    }
    std::printf("  form %-6s oracle=%zu enumerated=%zu %s\n",
                form.name().c_str(), classes.size(), mine.size(),
                bucket_ok ? "bijective" : "MISMATCH");
    ok = ok && bucket_ok;
  }
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dacat: catalogs of two-level D- and A-optimal main-effects designs\n"
      "Worker count comes from the DACAT_WORKERS environment variable\n"
      "(default: all available cores)."};
  app.require_subcommand(1);

  int runs = 0, max_factors = 0, factors = 0;
  std::string out_dir, in_dir, criterion = "g", what;
  bool allow_long = false, with_oracle = false;

  CLI::App* enumerate = app.add_subcommand("enumerate", "Enumerate catalogs");
  enumerate->add_option("--runs", runs, "Run size (residue 1 or 2 mod 4)")
      ->required();
  enumerate->add_option("--max-factors", max_factors, "Largest factor count")
      ->required();
  enumerate->add_option("--out", out_dir, "Output directory")->required();
  enumerate->add_flag("--allow-long", allow_long,
                      "Permit multi-day 18-run stages (k >= 9)");

  CLI::App* characterize =
      app.add_subcommand("characterize", "Compute aberration profiles");
  characterize->add_option("--in", in_dir, "Catalog directory")->required();

  CLI::App* classify = app.add_subcommand(
      "classify-oa", "Flag designs derivable from orthogonal arrays");
  classify->add_option("--in", in_dir, "Catalog directory")->required();

  CLI::App* rank = app.add_subcommand("rank", "Rank designs by aberration");
  rank->add_option("--criterion", criterion, "g or g2")
      ->check(CLI::IsMember({"g", "g2"}));
  rank->add_option("--in", in_dir, "Catalog directory")->required();

  CLI::App* report = app.add_subcommand("report", "Tabulate catalogs");
  report->add_option("what", what, "counts or best")
      ->required()
      ->check(CLI::IsMember({"counts", "best"}));
  report->add_option("--in", in_dir, "Catalog directory")->required();
  report->add_option("--criterion", criterion, "g or g2 (for best)")
      ->check(CLI::IsMember({"g", "g2"}));

  CLI::App* verify =
      app.add_subcommand("verify", "Cross-check against the brute-force oracle");
  verify->add_flag("--oracle", with_oracle, "Compare with the oracle catalog");
  verify->add_option("--runs", runs, "Run size")->required();
  verify->add_option("--factors", factors, "Factor count")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (enumerate->parsed())
      return run_enumerate(runs, max_factors, out_dir, allow_long);
    if (characterize->parsed()) return run_characterize(in_dir);
    if (classify->parsed()) return run_classify(in_dir);
    if (rank->parsed()) return run_rank(in_dir, criterion);
    if (report->parsed()) return run_report(what, in_dir, criterion);
    if (verify->parsed()) {
      if (!with_oracle) {
        std::cerr << "error: verify requires --oracle\n";
        return 2;
      }
      return run_verify(runs, factors);
    }
  } catch (const daopt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
