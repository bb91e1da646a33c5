#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "sgeval/error.hpp"
#include "sgeval/io.hpp"
#include "sgeval/suite.hpp"
#include "support/temp_dir.hpp"

using namespace sg;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"J({
  "name": "minimal",
  "circuit": "Agreement",
  "regions": ["crit"],
  "conditions": ["A", "B"],
  "predictions": ["s(A;crit) > s(B;crit)"],
  "modifier_base": null,
  "items": [{"item_number": 1, "content": {"A": {"crit": "knows"}, "B": {"crit": "know"}}}]
})J";

TestSuite minimal() { return parse_suite(kMinimal); }

std::size_t count(const std::vector<SuiteDiagnostic>& ds, Severity s) {
  std::size_t n = 0;
  for (const auto& d : ds) n += d.severity == s ? 1 : 0;
  return n;
}

const fs::path kFixtures = fs::path(SG_SOURCE_DIR) / "fixtures" / "v1";

// Random but valid suite: 1-3 regions, 1-4 conditions, 1-5 items, texts
// drawn from a small word list (some empty).
TestSuite random_suite(std::mt19937_64& rng) {
  static const char* words[] = {"the", "farmer", "knows", "\"quoted\"", "many", "people.", "caf\xc3\xa9", "it's"};
  TestSuite s;
  s.name = "gen" + std::to_string(rng() % 1000);
  s.circuit = kAllCircuits[rng() % 6];
  for (std::size_t r = 0, n = 1 + rng() % 3; r < n; ++r) s.region_names.push_back("r" + std::to_string(r));
  for (std::size_t c = 0, n = 1 + rng() % 4; c < n; ++c) s.condition_names.push_back("c" + std::to_string(c));
  s.predictions.push_back("s(" + s.condition_names[0] + ";" + s.region_names[0] + ") > " +
                          std::to_string(rng() % 5));
  if (rng() % 2) s.modifier_base = "base" + std::to_string(rng() % 10);
  for (std::size_t i = 0, n = 1 + rng() % 5; i < n; ++i) {
    Item item;
    item.item_number = static_cast<int>(i) * 2 + 1;
    for (const auto& c : s.condition_names) {
      for (const auto& r : s.region_names) {
        std::string text;
        for (std::size_t w = 0, k = rng() % 3; w < k; ++w) text += (w ? " " : "") + std::string(words[rng() % 8]);
        item.content[c][r] = text;
      }
    }
    s.items.push_back(item);
  }
  return s;
}

}  // namespace

TEST_CASE("minimal document parses") {
  const auto s = minimal();
  CHECK(s.name == "minimal");
  CHECK(s.circuit == Circuit::Agreement);
  CHECK(s.items.size() == 1);
  CHECK(s.condition_names.size() == 2);
  CHECK(s.items[0].text("B", "crit") == "know");
  CHECK_FALSE(s.modifier_base.has_value());
  CHECK(validate_suite(s).empty());
}

TEST_CASE("missing region text names item, condition and region") {
  std::string doc = kMinimal;
  doc.replace(doc.find(R"("B": {"crit": "know"})"), 21, R"("B": {})");
  try {
    parse_suite(doc);
    FAIL("expected an error");
  } catch (const SuiteError& e) {
    CHECK(e.path() == "items[0].content.B.crit");
  }
}

TEST_CASE("malformed documents and unknown keys") {
  CHECK_THROWS_AS(parse_suite("{\"name\": "), SuiteError);
  CHECK_THROWS_AS(parse_suite("[]"), SuiteError);
  std::string doc = kMinimal;
  doc.insert(1, "\"extra\": 1,");
  try {
    parse_suite(doc);
    FAIL("expected an error");
  } catch (const SuiteError& e) {
    CHECK(e.path() == "extra");
  }
  doc = kMinimal;
  doc.replace(doc.find("Agreement"), 9, "Semantics");
  CHECK_THROWS_WITH_AS(parse_suite(doc), doctest::Contains("circuit"), SuiteError);
  doc = kMinimal;
  doc.replace(doc.find("\"item_number\": 1"), 16, "\"item_number\": \"1\"");
  CHECK_THROWS_AS(parse_suite(doc), SuiteError);
}

TEST_CASE("circuit labels round-trip") {
  for (Circuit c : kAllCircuits) CHECK(circuit_from_label(circuit_label(c)) == c);
  CHECK(circuit_label(Circuit::GardenPath) == "Garden-Path Effects");
  CHECK_FALSE(circuit_from_label("garden-path effects").has_value());
}

TEST_CASE("undeclared condition in a prediction is one error") {
  auto s = minimal();
  s.predictions = {"s(X;crit) > s(B;crit)"};
  const auto ds = validate_suite(s);
  CHECK(count(ds, Severity::Error) == 1);
  CHECK(ds[0].message.find("X") != std::string::npos);
}

TEST_CASE("referenced region empty in one condition is one warning") {
  auto s = minimal();
  s.items[0].content["B"]["crit"] = "";
  const auto ds = validate_suite(s);
  CHECK(count(ds, Severity::Error) == 0);
  CHECK(count(ds, Severity::Warning) == 1);
  CHECK_FALSE(has_errors(ds));
}

TEST_CASE("type invariants") {
  auto s = minimal();
  s.modifier_base = "minimal";
  CHECK(has_errors(validate_suite(s)));

  s = minimal();
  s.region_names.push_back("crit");
  CHECK(has_errors(validate_suite(s)));

  s = minimal();
  s.items.push_back(s.items[0]);
  CHECK(has_errors(validate_suite(s)));

  s = minimal();
  s.items[0].item_number = 0;
  CHECK(has_errors(validate_suite(s)));

  s = minimal();
  s.items[0].content["A"]["crit"] = " knows";
  CHECK(has_errors(validate_suite(s)));
  s.items[0].content["A"]["crit"] = "knows  well";
  CHECK(has_errors(validate_suite(s)));

  s = minimal();
  s.predictions.clear();
  CHECK(has_errors(validate_suite(s)));
  s = minimal();
  s.items.clear();
  CHECK(has_errors(validate_suite(s)));
  s = minimal();
  s.predictions = {"s(A;crit) >"};
  CHECK(has_errors(validate_suite(s)));
}

TEST_CASE("diagnostic locations render as paths") {
  DiagnosticLocation loc{"s", 3, "A", "crit"};
  CHECK(loc.to_string().find("s") == 0);
  CHECK(loc.to_string().find("3") != std::string::npos);
  CHECK(loc.to_string().find("crit") != std::string::npos);
}

TEST_CASE("shipped center-embedding fixture: two conditions, one inequality") {
  const auto s = load_suite_file(kFixtures / "center_embed.suite.json");
  CHECK(s.condition_names.size() == 2);
  REQUIRE(s.predictions.size() == 1);
  CHECK(s.predictions[0].find('&') == std::string::npos);
  CHECK(s.circuit == Circuit::CenterEmbedding);
}

TEST_CASE("fixture directory loads 34 valid suites in name order") {
  const auto suites = load_suite_set(kFixtures);
  CHECK(suites.size() == 34);
  for (std::size_t i = 1; i < suites.size(); ++i) CHECK(suites[i - 1].name < suites[i].name);
  for (const auto& s : suites) CHECK_MESSAGE(!has_errors(validate_suite(s)), s.name);
  const auto again = load_suite_set(kFixtures);
  CHECK(again == suites);
}

TEST_CASE("load_suite_set: empty directory, duplicates, missing directory") {
  test_support::TempDir dir;
  CHECK(load_suite_set(dir.path()).empty());
  write_file(dir.path() / "a.suite.json", kMinimal);
  write_file(dir.path() / "b.suite.json", kMinimal);
  write_file(dir.path() / "notes.txt", "ignored");
  CHECK_THROWS_WITH_AS(load_suite_set(dir.path()), doctest::Contains("minimal"), SuiteError);
  CHECK_THROWS_AS(load_suite_set(dir.path() / "absent"), SuiteError);
  write_file(dir.path() / "b.suite.json", "{broken");
  CHECK_THROWS_WITH_AS(load_suite_set(dir.path()), doctest::Contains("b.suite.json"), SuiteError);
}

TEST_CASE("property: parse . serialize . parse is the identity") {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 200; ++round) {
    const auto s = random_suite(rng);
    const std::string text = serialize_suite(s);
    const auto back = parse_suite(text);
    CHECK(back == s);
    CHECK(serialize_suite(back) == text);
  }
  for (const auto& s : load_suite_set(kFixtures)) CHECK(parse_suite(serialize_suite(s)) == s);
}

TEST_CASE("property: shipped fixture files are in canonical form") {
  for (const auto& e : fs::directory_iterator(kFixtures)) {
    const std::string text = read_file(e.path());
    CHECK_MESSAGE(serialize_suite(parse_suite(text)) == text, e.path().string());
  }
}
