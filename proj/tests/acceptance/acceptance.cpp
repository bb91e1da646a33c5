// Acceptance checks: one PASS/FAIL line per criterion, exit 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <json.hpp>

#include "sgeval/fixtures.hpp"
#include "sgeval/io.hpp"
#include "sgeval/lm_interface.hpp"
#include "sgeval/ngram.hpp"
#include "sgeval/prediction.hpp"
#include "sgeval/rng.hpp"
#include "sgeval/scoring.hpp"
#include "sgeval/suite.hpp"
#include "sgeval/token_align.hpp"
#include "support/kn_reference.hpp"
#include "support/temp_dir.hpp"

using namespace sg;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = SG_SOURCE_DIR;
const fs::path kFixtures = kSource / "fixtures" / "v1";
const fs::path kDeskCorpus = kSource / "data" / "desk_corpus.txt.gz";

// Tolerances and budgets.
constexpr double kChanceRuntime = 10.0;         // s
constexpr double kCatalogLow = 0.15, kCatalogHigh = 0.35;
constexpr double kCatalogRuntime = 60.0;        // s
constexpr std::size_t kLongSpan = 5;            // tokens
constexpr double kBlindLevel = 0.99;
constexpr std::size_t kMinDeskTokens = 1000000;
constexpr std::size_t kOracleSentences = 200;
constexpr double kOracleBits = 1e-4;
constexpr int kNormContexts = 100;
constexpr double kNormTol = 1e-6;
constexpr double kOracleRuntime = 60.0;         // s
constexpr int kRandomSeeds = 200;
constexpr double kRandomSigmas = 3.0;
constexpr double kRandomRuntime = 300.0;        // s
constexpr double kZeroSum = 1e-12;
constexpr std::uint64_t kChanceSamples = 100000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<Prediction> parsed(const TestSuite& s) {
  std::vector<Prediction> out;
  for (const auto& p : s.predictions) out.push_back(Prediction::parse(p));
  return out;
}

const TestSuite& by_name(const std::vector<TestSuite>& suites, const std::string& name) {
  for (const auto& s : suites) {
    if (s.name == name) return s;
  }
  throw std::runtime_error("missing fixture " + name);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<std::vector<std::string>> tokenized_lines(const std::string& text, std::size_t limit = SIZE_MAX) {
  std::vector<std::vector<std::string>> out;
  for (const auto& line : split_lines(text)) {
    if (out.size() >= limit) break;
    std::vector<std::string> words;
    for (const auto& t : tokenize_words(line)) words.push_back(t.text);
    if (!words.empty()) out.push_back(std::move(words));
  }
  return out;
}

// Smallest k with P(X <= k) >= q for X ~ Binomial(n, p).
int binomial_quantile(int n, double p, double q) {
  double cdf = 0.0;
  for (int k = 0; k <= n; ++k) {
    cdf += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                    (k > 0 ? k * std::log(p) : 0.0) + (n - k > 0 ? (n - k) * std::log1p(-p) : 0.0));
    if (cdf >= q - 1e-12) return k;
  }
  return n;
}

int shell(const std::string& cmd) {
  const int st = std::system(cmd.c_str());
  return st == -1 ? -1 : WEXITSTATUS(st);
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

Outcome chance_values() {
  const auto suites = load_suite_set(kFixtures);
  struct Want {
    const char* suite;
    double value;
  };
  const Want exact[] = {{"number_prep", 0.25}, {"reflexive_prep_fem", 0.25}, {"center_embed", 0.5}, {"cleft", 0.5}};
  bool ok = true;
  std::string detail;
  for (const auto& w : exact) {
    const auto c = chance_accuracy(parsed(by_name(suites, w.suite)), kChanceSamples, 0);
    const bool good = c.method == ChanceMethod::Enumeration && c.mean == w.value;
    ok = ok && good;
    detail += std::string(w.suite) + "=" + fmt("%.4f", c.mean) + "(" + std::string(chance_method_name(c.method)) + ") ";
  }
  const auto mvrr = chance_accuracy(parsed(by_name(suites, "mvrr")), kChanceSamples, 0);
  const bool below = mvrr.method == ChanceMethod::MonteCarlo && mvrr.samples == kChanceSamples && mvrr.mean < 0.25;
  detail += "mvrr=" + fmt("%.4f", mvrr.mean) + "+-" + fmt("%.4f", mvrr.std_error) + " (need < 0.25)";
  return {ok && below, detail};
}

Outcome catalog_chance() {
  const auto suites = load_suite_set(kFixtures);
  double sum = 0.0;
  for (const auto& s : suites) sum += monte_carlo_chance(parsed(s), kChanceSamples, derive_seed(0, s.name)).mean;
  const double mean = sum / static_cast<double>(suites.size());
  return {suites.size() == 34 && mean >= kCatalogLow && mean <= kCatalogHigh,
          std::to_string(suites.size()) + " suites, mean chance " + fmt("%.4f", mean)};
}

Outcome ngram_blindness() {
  const auto corpus = tokenized_lines(read_file(kDeskCorpus));
  std::size_t tokens = 0;
  for (const auto& s : corpus) tokens += s.size();
  if (tokens < kMinDeskTokens) return {false, "desk corpus has only " + std::to_string(tokens) + " tokens"};
  const auto model = NGramModel::train(corpus, 5, 2);
  const auto suites = load_suite_set(kFixtures);
  const auto recs = score_ngram(model, make_requests(suites));
  const auto tables = build_surprisal_tables(recs, suites);
  bool ok = true;
  std::size_t checked = 0;
  std::string outside;
  for (const auto& s : suites) {
    if (critical_dependency_span(s) < kLongSpan) continue;
    ++checked;
    const auto r = score_suite(s, tables.at(s.name), "ngram");
    const double c = chance_accuracy(parsed(s), kChanceSamples, derive_seed(0, "chance:" + s.name)).mean;
    const int n = static_cast<int>(r.n_items());
    const double lo = binomial_quantile(n, c, (1.0 - kBlindLevel) / 2) / static_cast<double>(n);
    const double hi = binomial_quantile(n, c, 1.0 - (1.0 - kBlindLevel) / 2) / static_cast<double>(n);
    if (r.accuracy < lo || r.accuracy > hi) {
      ok = false;
      outside += " " + s.name + "=" + fmt("%.3f", r.accuracy) + "[" + fmt("%.3f", lo) + "," + fmt("%.3f", hi) + "]";
    }
  }
  if (checked == 0) ok = false;
  return {ok, std::to_string(tokens) + " tokens, " + std::to_string(checked) + " long-span suites" +
                  (outside.empty() ? ", all inside" : ", outside:" + outside)};
}

Outcome kn_oracle() {
  const auto corpus = tokenized_lines(read_file(kDeskCorpus), kOracleSentences);
  const int order = 5, min_count = 2;
  const auto model = NGramModel::train(corpus, order, min_count);
  const kn_ref::Reference ref(corpus, order, min_count);
  double worst = 0.0;
  std::size_t scored = 0;
  for (const auto& s : corpus) {
    std::vector<std::string> mapped;
    for (std::size_t i = 0; i < s.size(); ++i) mapped.push_back(ref.map(s[i], i == 0));
    mapped.push_back("</s>");
    std::vector<std::string> ctx{"<s>"};
    for (const auto& w : mapped) {
      worst = std::max(worst, std::abs(model.log_prob(w, ctx) - ref.log2_prob(w, ctx)));
      ctx.push_back(w);
      ++scored;
    }
  }
  // contexts: half drawn from the corpus, half random vocabulary strings
  std::mt19937_64 rng(4);
  const auto vocab = model.vocabulary();
  double worst_norm = 0.0;
  for (int k = 0; k < kNormContexts; ++k) {
    std::vector<std::string> ctx;
    if (k % 2 == 0) {
      const auto& s = corpus[rng() % corpus.size()];
      ctx.push_back("<s>");
      for (std::size_t i = 0, n = rng() % (s.size() + 1); i < n; ++i) ctx.push_back(model.map_word(s[i], i == 0));
    } else {
      for (std::size_t i = 0, n = rng() % order; i < n; ++i) ctx.push_back(vocab[rng() % vocab.size()]);
    }
    double total = 0.0;
    for (const auto& w : vocab) {
      if (w != "<s>") total += std::exp2(model.log_prob(w, ctx));
    }
    worst_norm = std::max(worst_norm, std::abs(total - 1.0));
  }
  return {worst <= kOracleBits && worst_norm <= kNormTol,
          std::to_string(corpus.size()) + " sentences, " + std::to_string(scored) + " tokens, max |diff| " +
              fmt("%.2e", worst) + " bits, max |sum-1| " + fmt("%.2e", worst_norm)};
}

Outcome random_convergence() {
  const auto suites = load_suite_set(kFixtures);
  const auto reqs = make_requests(suites);
  std::map<std::string, double> acc_sum;
  for (int seed = 1; seed <= kRandomSeeds; ++seed) {
    const auto recs = score_random(static_cast<std::uint64_t>(seed), reqs);
    const auto tables = build_surprisal_tables(recs, suites);
    for (const auto& s : suites) acc_sum[s.name] += score_suite(s, tables.at(s.name)).accuracy;
  }
  bool ok = true;
  std::string outside;
  double mean_acc = 0.0, mean_chance = 0.0, var_mean = 0.0;
  for (const auto& s : suites) {
    const auto c = chance_accuracy(parsed(s), kChanceSamples, derive_seed(0, "chance:" + s.name));
    const double acc = acc_sum[s.name] / kRandomSeeds;
    const double n = static_cast<double>(s.items.size()) * kRandomSeeds;
    const double se = std::sqrt(c.mean * (1 - c.mean) / n + c.std_error * c.std_error);
    mean_acc += acc;
    mean_chance += c.mean;
    var_mean += se * se;
    if (std::abs(acc - c.mean) > kRandomSigmas * se) {
      ok = false;
      outside += " " + s.name + "=" + fmt("%.4f", acc) + "/" + fmt("%.4f", c.mean) + "(" +
                 fmt("%.1f", (acc - c.mean) / se) + "se)";
    }
  }
  const double k = static_cast<double>(suites.size());
  const double z = (mean_acc - mean_chance) / std::sqrt(var_mean);
  if (std::abs(z) > kRandomSigmas) ok = false;
  return {ok, std::to_string(kRandomSeeds) + " seeds, mean accuracy " + fmt("%.4f", mean_acc / k) + " vs chance " +
                  fmt("%.4f", mean_chance / k) + " (" + fmt("%.2f", z) + " se)" +
                  (outside.empty() ? ", every suite within 3 se" : ", outside:" + outside)};
}

Outcome worked_example() {
  const auto p = Prediction::parse("s(A;V) > s(B;V) & s(A;V) > s(C;V) & s(A;V) - s(B;V) > s(C;V) - s(D;V)");
  SurprisalTable t;
  t.set(1, "A", "V", 10);
  t.set(1, "B", "V", 6);
  t.set(1, "C", "V", 7);
  t.set(1, "D", "V", 5);
  const bool base = evaluate_prediction(p, 1, t);
  t.set(1, "C", "V", 9.5);  // (10-6) > (9.5-5) no longer holds
  const bool perturbed = evaluate_prediction(p, 1, t);
  return {base && !perturbed, std::string("10,6,7,5 -> ") + (base ? "pass" : "fail") + "; C=9.5 -> " +
                                  (perturbed ? "pass" : "fail")};
}

Outcome delta_zero_sum(const fs::path& dir) {
  const std::string base = q(SG_CLI) + " eval --suites " + q(kFixtures) + " --bootstrap 200 --chance-samples 20000";
  for (const char* m : {"random:1", "random:2", "uniform:64"}) {
    if (shell(base + " --model " + m + " --out " + q(dir / m) + " >/dev/null") != 0) return {false, "eval failed"};
  }
  const auto out = dir / "combined";
  if (shell(q(SG_CLI) + " report --out " + q(out) + " " + q(dir / "random:1") + " " + q(dir / "random:2") + " " +
            q(dir / "uniform:64") + " >/dev/null") != 0) {
    return {false, "report failed"};
  }
  const auto doc = nlohmann::json::parse(read_file(out / "report.json"));
  std::map<std::string, double> sums;
  std::size_t rows = 0;
  for (const auto& r : doc.at("deltas")) {
    sums[r.at("suite").get<std::string>()] += r.at("delta").get<double>();
    ++rows;
  }
  double worst = 0.0;
  for (const auto& [s, v] : sums) worst = std::max(worst, std::abs(v));
  return {sums.size() == 34 && rows == 3 * 34 && worst <= kZeroSum,
          std::to_string(rows) + " delta rows over " + std::to_string(sums.size()) + " suites, max |sum| " +
              fmt("%.2e", worst)};
}

Outcome determinism(const fs::path& dir) {
  const auto corpus = dir / "corpus.txt";
  std::string text;
  for (const auto& line : split_lines(read_file(kDeskCorpus))) {
    text += line + "\n";
    if (text.size() > 400000) break;
  }
  write_file(corpus, text);
  const auto arpa = dir / "m.arpa";
  if (shell(q(SG_CLI) + " ngram train --tokenize --order 3 --corpus " + q(corpus) + " --out " + q(arpa) +
            " 2>/dev/null") != 0) {
    return {false, "train failed"};
  }
  const std::string cmd = q(SG_CLI) + " eval --suites " + q(kFixtures) + " --model random:7 --model ngram:" + q(arpa) +
                          " --ppl-corpus " + q(corpus) + " --tokenize --analysis --seed 11 --out ";
  if (shell(cmd + q(dir / "a") + " >/dev/null") != 0 || shell(cmd + q(dir / "b") + " --jobs 2 >/dev/null") != 0) {
    return {false, "eval failed"};
  }
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    const auto other = dir / "b" / e.path().filename();
    if (!fs::exists(other) || read_file(e.path()) != read_file(other)) {
      return {false, e.path().filename().string() + " differs"};
    }
    ++files;
  }
  return {files >= 6, std::to_string(files) + " output files byte-identical"};
}

}  // namespace

int main() {
  test_support::TempDir scratch;
  struct Criterion {
    const char* name;
    double budget;  // seconds, 0 for none
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"chance values", kChanceRuntime, chance_values},
      {"catalog chance", kCatalogRuntime, catalog_chance},
      {"n-gram blindness", 0, ngram_blindness},
      {"KN oracle equivalence", kOracleRuntime, kn_oracle},
      {"random-model convergence", kRandomRuntime, random_convergence},
      {"worked example", 0, worked_example},
      {"delta zero-sum", 0, [&] { return delta_zero_sum(scratch.path() / "deltas"); }},
      {"determinism", 0, [&] { return determinism(scratch.path() / "determinism"); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget > 0 && secs > c.budget) {
      o.pass = false;
      o.detail += "; over the " + fmt("%.0f", c.budget) + " s budget";
    }
    std::printf("%s  %-26s %7.2fs  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
