#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <regex>
#include <string>

#include <sys/wait.h>

#include "sgeval/io.hpp"
#include "support/temp_dir.hpp"

using namespace sg;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = SG_SOURCE_DIR;
const fs::path kFixtures = kSource / "fixtures";

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI with `args` under /bin/sh; `env` is prepended verbatim.
Run sgeval(const std::string& args, const std::string& env = "") {
  static test_support::TempDir scratch;
  const fs::path err = scratch.path() / "stderr";
  const std::string cmd = env + " " + quote(SG_CLI) + " " + args + " 2>" + quote(err.string());
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int st = ::pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  r.err = read_file(err);
  return r;
}

// Small raw-text corpus from the shipped fixture sentences plus filler.
fs::path write_corpus(const fs::path& dir) {
  std::string text;
  for (int i = 0; i < 40; ++i) {
    text += "The farmer near the clerks knows many people.\n";
    text += "The farmers know the city and the clerk likes it.\n";
    text += "As the ship crossed the waters, the people remained calm.\n";
  }
  const fs::path p = dir / "corpus.txt";
  write_file(p, text);
  return p;
}

}  // namespace

TEST_CASE("validate: shipped fixtures pass") {
  const auto r = sgeval("validate " + quote(kFixtures.string()));
  CHECK(r.status == 0);
  const auto v1 = sgeval("validate " + quote((kFixtures / "v1").string()));
  CHECK(v1.status == 0);
}

TEST_CASE("validate: a broken file fails and is named") {
  test_support::TempDir dir;
  fs::copy(kFixtures / "v1", dir.path(), fs::copy_options::recursive);
  std::string doc = read_file(dir.path() / "mvrr.suite.json");
  doc.replace(doc.find("\"Garden-Path Effects\""), 21, "\"Gardening\"");
  write_file(dir.path() / "mvrr.suite.json", doc);
  const auto r = sgeval("validate " + quote(dir.path().string()));
  CHECK(r.status == 1);
  CHECK(r.err.find("mvrr.suite.json") != std::string::npos);
}

TEST_CASE("validate: empty directory is a warning, not an error") {
  test_support::TempDir dir;
  const auto r = sgeval("validate " + quote(dir.path().string()));
  CHECK(r.status == 0);
  CHECK(r.err.find("warning") != std::string::npos);
}

TEST_CASE("usage errors exit 2") {
  CHECK(sgeval("").status == 2);
  CHECK(sgeval("eval").status == 2);
  CHECK(sgeval("frobnicate").status == 2);
  CHECK(sgeval("ngram train --corpus x --out y --order 0").status == 2);
  CHECK(sgeval("--help").status == 0);
}

TEST_CASE("ngram train then ppl") {
  test_support::TempDir dir;
  const auto corpus = write_corpus(dir.path());
  const auto model = dir.path() / "m.arpa";
  const auto t = sgeval("ngram train --tokenize --min-count 1 --corpus " + quote(corpus.string()) + " --out " +
                        quote(model.string()));
  REQUIRE(t.status == 0);
  const std::string arpa = read_file(model);
  CHECK(arpa.find("\\5-grams:") != std::string::npos);  // default order
  CHECK(arpa.find("\\6-grams:") == std::string::npos);
  const auto p = sgeval("ngram ppl --tokenize --model " + quote(model.string()) + " --corpus " + quote(corpus.string()));
  REQUIRE(p.status == 0);
  CHECK(std::regex_match(p.out, std::regex("[0-9]+\\.[0-9]{4}\n")));
  const double ppl = std::stod(p.out);
  CHECK(std::isfinite(ppl));
  CHECK(ppl > 1.0);
  CHECK(sgeval("ngram ppl --model " + quote((dir.path() / "absent.arpa").string()) + " --corpus " +
               quote(corpus.string()))
            .status == 1);
}

TEST_CASE("eval: rows, determinism, seeds, jobs") {
  test_support::TempDir dir;
  const std::string suites = " --suites " + quote(kFixtures.string());
  const std::string fast = " --bootstrap 200 --chance-samples 2000";
  auto eval = [&](const std::string& out, const std::string& extra, const std::string& env = "") {
    return sgeval("eval" + suites + fast + " --out " + quote((dir.path() / out).string()) + extra, env);
  };
  const auto a = eval("a", " --model random:7");
  REQUIRE(a.status == 0);
  CHECK(std::regex_match(a.out, std::regex("random:7\tsg_score=0\\.[0-9]{6}\n")));
  const auto rows = split_lines(read_file(dir.path() / "a" / "suites.csv"));
  CHECK(rows.size() == 35);
  for (const char* f : {"suites.csv", "report.json", "summary.md", "sg_vs_perplexity.csv"}) {
    CHECK(fs::exists(dir.path() / "a" / f));
  }

  REQUIRE(eval("b", " --model random:7").status == 0);
  REQUIRE(eval("c", " --model random:7 --jobs 3").status == 0);
  for (const char* f : {"suites.csv", "report.json", "summary.md"}) {
    CHECK(read_file(dir.path() / "a" / f) == read_file(dir.path() / "b" / f));
    CHECK(read_file(dir.path() / "a" / f) == read_file(dir.path() / "c" / f));
  }

  REQUIRE(eval("env", " --model random:7", "SG_SEED=99").status == 0);
  REQUIRE(eval("flag", " --model random:7 --seed 99").status == 0);
  CHECK(read_file(dir.path() / "env" / "report.json") == read_file(dir.path() / "flag" / "report.json"));
  CHECK(read_file(dir.path() / "env" / "report.json") != read_file(dir.path() / "a" / "report.json"));

  // a record file written by one run scores the same through the file handle
  const auto req = sgeval("requests" + suites + " --out " + quote((dir.path() / "req.jsonl").string()));
  REQUIRE(req.status == 0);
  const std::string records_cmd = "sh -c " + quote(quote(SG_ECHO_ADAPTER) + " < " +
                                                   quote((dir.path() / "req.jsonl").string()) + " > " +
                                                   quote((dir.path() / "rec.jsonl").string()));
  REQUIRE(std::system(records_cmd.c_str()) == 0);
  const auto viafile = eval("file", " --model surprisals:" + quote((dir.path() / "rec.jsonl").string()) +
                                        " --label echo");
  const auto viaadapter = eval("adapter", " --model " + quote("adapter:" + std::string(SG_ECHO_ADAPTER)) +
                                              " --label echo");
  REQUIRE(viafile.status == 0);
  REQUIRE(viaadapter.status == 0);
  CHECK(viafile.out == viaadapter.out);
  CHECK(read_file(dir.path() / "file" / "suites.csv") == read_file(dir.path() / "adapter" / "suites.csv"));

  const auto failing = eval("fail", " --model " + quote("adapter:" + std::string(SG_ECHO_ADAPTER) + " --fail-after 3"));
  CHECK(failing.status == 1);
  CHECK(failing.err.find("error") != std::string::npos);
  CHECK(eval("dup", " --model random:1 --model random:2 --label x --label x").status != 0);
}

TEST_CASE("chance: one row per prediction, plus the conjunction") {
  const auto r = sgeval("chance --samples 20000 " + quote((kFixtures / "v1" / "mvrr.suite.json").string()) + " " +
                        quote((kFixtures / "v1" / "center_embed.suite.json").string()));
  REQUIRE(r.status == 0);
  const auto lines = split_lines(r.out);
  REQUIRE(lines.size() == 1 + 1 + 4);
  CHECK(lines[0] == "suite\tprediction\tmethod\tmean\tstderr\tsamples");
  CHECK(lines[1].rfind("center_embed\t", 0) == 0);
  CHECK(lines[1].find("\tenumeration\t0.5000\t") != std::string::npos);
  CHECK(lines[5].rfind("mvrr\tall\tmonte_carlo\t", 0) == 0);
}

TEST_CASE("report: deltas across runs, grouping, single run") {
  test_support::TempDir dir;
  const std::string base = "eval --suites " + quote(kFixtures.string()) + " --bootstrap 200 --chance-samples 2000";
  REQUIRE(sgeval(base + " --model random:1 --tag size=xs --out " + quote((dir.path() / "r1").string())).status == 0);
  REQUIRE(sgeval(base + " --model random:2 --tag size=lg --out " + quote((dir.path() / "r2").string())).status == 0);
  REQUIRE(sgeval(base + " --model uniform:50 --tag size=lg --out " + quote((dir.path() / "r3").string())).status == 0);

  const auto out = dir.path() / "combined";
  const auto r = sgeval("report --group-by size --out " + quote(out.string()) + " " + quote((dir.path() / "r1").string()) +
                        " " + quote((dir.path() / "r2" / "report.json").string()) + " " +
                        quote((dir.path() / "r3").string()));
  REQUIRE(r.status == 0);
  const auto deltas = split_lines(read_file(out / "deltas.csv"));
  CHECK(deltas.size() == 1 + 34 * 3);
  const std::string groups = read_file(out / "delta_groups.csv");
  CHECK(groups.find("size,xs,") != std::string::npos);
  CHECK(groups.find("size,lg,") != std::string::npos);
  CHECK(fs::exists(out / "circuits.csv"));
  CHECK(fs::exists(out / "stability.csv"));
  CHECK(split_lines(read_file(out / "suites.csv")).size() == 1 + 34 * 3);

  const auto single = dir.path() / "single";
  REQUIRE(sgeval("report --out " + quote(single.string()) + " " + quote((dir.path() / "r1").string())).status == 0);
  CHECK(split_lines(read_file(single / "sg_vs_perplexity.csv")).size() == 2);
  CHECK_FALSE(fs::exists(single / "deltas.csv"));
  CHECK(sgeval("report " + quote((dir.path() / "absent").string())).status == 1);
}
