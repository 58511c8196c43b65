#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "daopt/catalog.hpp"
#include "daopt/enumerate.hpp"

using namespace daopt;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("daopt_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string str() const { return path.string(); }
};

CatalogFile make_catalog(int runs, int k, const FormSpec& form,
                         const std::vector<DesignMatrix>& designs,
                         bool with_profile, bool with_oa) {
  CatalogFile file;
  file.runs = runs;
  file.factors = k;
  file.form = form;
  for (const DesignMatrix& d : designs) {
    CatalogRecord rec{d, form, canonical_key(d).bytes, std::nullopt,
                      std::nullopt};
    if (with_profile) rec.profile = characterize_design(d, form);
    if (with_oa) rec.oa_derivable = classify(d).derivable;
    file.records.push_back(std::move(rec));
  }
  std::sort(file.records.begin(), file.records.end(),
            [](const CatalogRecord& a, const CatalogRecord& b) {
              return a.key_bytes < b.key_bytes;
            });
  return file;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void patch_file(const std::string& path, const std::string& from,
                const std::string& to) {
  std::string text = slurp(path);
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, from.size(), to);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("catalog files round-trip") {
  TempDir dir;
  const Catalog cat = enumerate_catalog(10, 5);
  const FormSpec form = FormSpec::n2(3, 3);
  const CatalogFile file =
      make_catalog(10, 5, form, cat.at(BucketKey{5, form}), true, true);
  const std::string path = dir.str() + "/" + catalog_filename(10, 5, form);
  write_catalog(file, path);

  const CatalogFile back = read_catalog(path);
  CHECK(back.runs == 10);
  CHECK(back.factors == 5);
  CHECK(back.form == form);
  REQUIRE(back.records.size() == file.records.size());
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    const CatalogRecord& a = back.records[i];
    CHECK(a.design == file.records[i].design);
    CHECK(a.key_bytes == file.records[i].key_bytes);
    REQUIRE(a.profile.has_value());
    CHECK(a.profile->f3.entries == file.records[i].profile->f3.entries);
    CHECK(a.profile->f4.entries == file.records[i].profile->f4.entries);
    CHECK(a.profile->c2 == file.records[i].profile->c2);
    CHECK(a.profile->c3 == file.records[i].profile->c3);
    CHECK(a.oa_derivable == file.records[i].oa_derivable);
  }

  SECTION("written bytes are deterministic") {
    const std::string again = dir.str() + "/again.cat";
    write_catalog(back, again);
    CHECK(slurp(path) == slurp(again));
  }

  SECTION("records re-validate against their stored key and form") {
    for (const CatalogRecord& rec : back.records) {
      CHECK(matches_n2_form(rec.design, back.form));
      CHECK(canonical_key(rec.design).bytes == rec.key_bytes);
      const AberrationProfile fresh =
          characterize_design(rec.design, back.form);
      CHECK(fresh.c2 == rec.profile->c2);
      CHECK(fresh.c3 == rec.profile->c3);
      CHECK(classify(rec.design).derivable == *rec.oa_derivable);
    }
  }
}

TEST_CASE("parse failures carry line numbers") {
  TempDir dir;
  const Catalog cat = enumerate_catalog(6, 4);
  const FormSpec form = FormSpec::n2(2, 3);
  const CatalogFile file =
      make_catalog(6, 4, form, cat.at(BucketKey{4, form}), false, false);
  const std::string path = dir.str() + "/t.cat";

  SECTION("zero character in a row") {
    write_catalog(file, path);
    patch_file(path, "\n+", "\n0");
    try {
      read_catalog(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line_number > 0);
      CHECK(std::string(e.what()).find("'+' and '-'") != std::string::npos);
    }
  }
  SECTION("wrong schema") {
    write_catalog(file, path);
    patch_file(path, "schema=1", "schema=2");
    CHECK_THROWS_AS(read_catalog(path), VersionError);
  }
  SECTION("foreign canonicalization scheme") {
    write_catalog(file, path);
    patch_file(path, "canon-scheme=1", "canon-scheme=9");
    CHECK_THROWS_AS(read_catalog(path), VersionError);
  }
  SECTION("count mismatch") {
    write_catalog(file, path);
    patch_file(path, "count=1", "count=7");
    CHECK_THROWS_AS(read_catalog(path), ParseError);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(read_catalog(dir.str() + "/nope.cat"), MissingDataError);
  }
}

TEST_CASE("unsorted records are rejected") {
  TempDir dir;
  const Catalog cat = enumerate_catalog(6, 3);
  const FormSpec form = FormSpec::n2(2, 2);
  const auto& designs = cat.at(BucketKey{3, form});
  REQUIRE(designs.size() == 2);
  CatalogFile file = make_catalog(6, 3, form, designs, false, false);
  const std::string path = dir.str() + "/t.cat";
  write_catalog(file, path);

  // Swap the two design blocks but keep the keys: keys then mismatch the
  // sort order.
  std::string text = slurp(path);
  const auto first_key = text.find("# key=");
  const auto second_key = text.find("# key=", first_key + 1);
  REQUIRE(second_key != std::string::npos);
  const std::string block1 = text.substr(first_key, second_key - first_key);
  const std::string block2 = text.substr(second_key);
  std::ofstream(path, std::ios::binary | std::ios::trunc)
      << text.substr(0, first_key) << block2 << block1;
  CHECK_THROWS_AS(read_catalog(path), ParseError);
}

TEST_CASE("saturated catalog for thirteen runs has one record") {
  TempDir dir;
  const Catalog cat = enumerate_catalog(13, 12);
  const CatalogFile file = make_catalog(
      13, 12, FormSpec::n1(), cat.at(BucketKey{12, FormSpec::n1()}), false,
      false);
  const std::string path =
      dir.str() + "/" + catalog_filename(13, 12, FormSpec::n1());
  write_catalog(file, path);
  CHECK(read_catalog(path).records.size() == 1);
}

TEST_CASE("count reports") {
  TempDir dir;
  SECTION("missing data") {
    CHECK_THROWS_AS(report_counts(dir.str()), MissingDataError);
  }
  SECTION("totals per bucket, with and without classification") {
    const Catalog cat = enumerate_catalog(6, 5);
    for (const auto& [bucket, designs] : cat) {
      const bool classified = bucket.factors != 3;
      const CatalogFile file = make_catalog(6, bucket.factors, bucket.form,
                                            designs, false, classified);
      write_catalog(file, dir.str() + "/" +
                              catalog_filename(6, bucket.factors, bucket.form));
    }
    const auto rows = report_counts(dir.str());
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].factors == 3);
    CHECK(rows[0].total == 2);
    CHECK_FALSE(rows[0].not_derivable.has_value());
    CHECK(rows[1].form == FormSpec::n2(2, 3));
    CHECK(rows[1].total == 1);
    CHECK(rows[1].not_derivable == 1);
    CHECK(rows[3].factors == 5);
    CHECK(rows[3].total == 1);
    CHECK(rows[3].not_derivable == 1);
    const std::string machine = render_counts_machine(rows);
    CHECK(machine.find("6\t3\tg2x2\t2\t-") != std::string::npos);
    CHECK(machine.find("6\t5\tg3x3\t1\t1") != std::string::npos);
  }
}

TEST_CASE("best reports") {
  TempDir dir;
  const Catalog cat = enumerate_catalog(10, 5);
  const FormSpec form = FormSpec::n2(3, 3);
  SECTION("uncharacterized catalogs are refused") {
    write_catalog(
        make_catalog(10, 5, form, cat.at(BucketKey{5, form}), false, false),
        dir.str() + "/" + catalog_filename(10, 5, form));
    CHECK_THROWS_AS(report_best(dir.str(), RankCriterion::G), MissingDataError);
  }
  SECTION("winners carry the table columns") {
    write_catalog(
        make_catalog(10, 5, form, cat.at(BucketKey{5, form}), true, true),
        dir.str() + "/" + catalog_filename(10, 5, form));
    for (const RankCriterion crit : {RankCriterion::G, RankCriterion::G2}) {
      const auto rows = report_best(dir.str(), crit);
      REQUIRE(rows.size() == 1);
      CHECK(rows[0].runs == 10);
      CHECK(rows[0].factors == 5);
      CHECK(rows[0].j3.first >= 0);
      REQUIRE(rows[0].j4.has_value());
      CHECK(rows[0].oa_derivable.has_value());
      CHECK(!key_hex(rows[0].key_bytes).empty());
    }
    const auto rows = report_best(dir.str(), RankCriterion::G);
    const std::string machine = render_best_machine(rows);
    CHECK(machine.find("10\t5\tg3x3\t") != std::string::npos);
  }
}

TEST_CASE("corrupted headers fail as parse errors") {
  TempDir dir;
  const Catalog cat = enumerate_catalog(6, 3);
  const FormSpec form = FormSpec::n2(2, 2);
  const CatalogFile file =
      make_catalog(6, 3, form, cat.at(BucketKey{3, form}), false, false);
  const std::string path = dir.str() + "/t.cat";

  SECTION("non-numeric run size") {
    write_catalog(file, path);
    patch_file(path, "runs=6", "runs=six");
    CHECK_THROWS_AS(read_catalog(path), ParseError);
  }
  SECTION("out-of-range dimensions") {
    write_catalog(file, path);
    patch_file(path, "runs=6", "runs=99");
    CHECK_THROWS_AS(read_catalog(path), ParseError);
  }
  SECTION("unknown form name") {
    write_catalog(file, path);
    patch_file(path, "form=g2x2", "form=q9");
    CHECK_THROWS_AS(read_catalog(path), ParseError);
  }
}
