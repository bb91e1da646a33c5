#pragma once

// Test-suite data model: items realized in several conditions, each condition
// an ordered list of named regions of text, plus the prediction formulas that
// a syntactically competent model should satisfy on every item.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sg {

enum class Circuit {
  Agreement,
  Licensing,
  GardenPath,
  GrossSyntacticExpectation,
  CenterEmbedding,
  LongDistanceDependencies,
};

inline constexpr Circuit kAllCircuits[] = {
    Circuit::Agreement,       Circuit::Licensing,
    Circuit::GardenPath,      Circuit::GrossSyntacticExpectation,
    Circuit::CenterEmbedding, Circuit::LongDistanceDependencies,
};

/// Verbatim label used in suite files ("Garden-Path Effects", ...).
std::string_view circuit_label(Circuit c);
std::optional<Circuit> circuit_from_label(std::string_view label);

struct Item {
  int item_number = 0;
  /// condition -> region -> text. Empty text is legal.
  std::map<std::string, std::map<std::string, std::string>> content;

  /// Text of one region; throws std::out_of_range when absent.
  const std::string& text(const std::string& condition, const std::string& region) const {
    return content.at(condition).at(region);
  }
  bool operator==(const Item&) const = default;
};

struct TestSuite {
  std::string name;
  Circuit circuit = Circuit::Agreement;
  std::vector<std::string> region_names;
  std::vector<std::string> condition_names;
  std::vector<std::string> predictions;
  std::vector<Item> items;
  std::optional<std::string> modifier_base;

  bool operator==(const TestSuite&) const = default;
};

enum class Severity { Error, Warning };

struct DiagnosticLocation {
  std::string suite;
  std::optional<int> item;
  std::string condition;
  std::string region;
  std::string to_string() const;
};

struct SuiteDiagnostic {
  Severity severity = Severity::Error;
  DiagnosticLocation location;
  std::string message;
  std::string to_string() const;
};

/// Parses one suite document (JSON). Throws SuiteError naming the offending
/// field path on malformed input, unknown keys, an unknown circuit label, or
/// item content that does not cover every (condition, region).
TestSuite parse_suite(std::string_view document);

/// Canonical pretty-printed document; keys in schema order.
std::string serialize_suite(const TestSuite& suite);

/// Checks type invariants and prediction references. Never throws.
std::vector<SuiteDiagnostic> validate_suite(const TestSuite& suite);

bool has_errors(const std::vector<SuiteDiagnostic>& diagnostics);

/// Reads every `*.suite.json` in `directory` (non-recursive), ordered by
/// suite name. Duplicate names and unreadable files throw SuiteError.
std::vector<TestSuite> load_suite_set(const std::filesystem::path& directory);

/// Single suite file; the path is prefixed to error messages.
TestSuite load_suite_file(const std::filesystem::path& file);

}  // namespace sg
