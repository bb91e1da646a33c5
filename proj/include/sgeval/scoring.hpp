#pragma once

// Item and suite scoring, SG scores, deltas across models, circuit and
// modifier breakdowns, bootstrap intervals, and the report files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgeval/prediction.hpp"
#include "sgeval/suite.hpp"

namespace sg {

struct SuiteResult {
  std::string suite;
  std::string model;
  Circuit circuit = Circuit::Agreement;
  std::optional<std::string> modifier_base;
  std::map<int, bool> item_results;
  double accuracy = 0.0;
  std::size_t n_items() const { return item_results.size(); }
};

/// An item passes iff every prediction holds. Evaluation errors are
/// rethrown with the suite and item prepended.
SuiteResult score_suite(const TestSuite& suite, const SurprisalTable& table, const std::string& model = "");

/// Unweighted mean of suite accuracies. Throws Error on duplicate suites or
/// an empty list.
double sg_score(std::span<const SuiteResult> results);

/// Mean accuracy per circuit, over circuits that have at least one suite.
std::map<Circuit, double> circuit_scores(std::span<const SuiteResult> results);
std::map<Circuit, double> circuit_scores(std::span<const SuiteResult> results, std::span<const TestSuite> suites);

struct StabilityRow {
  std::string base;
  std::string modified;
  double base_accuracy = 0.0;
  double modified_accuracy = 0.0;
  double difference = 0.0;  // modified - base
};

/// One row per suite with a modifier_base, sorted by modified suite name.
/// Throws Error when the base suite is not among the results.
std::vector<StabilityRow> modifier_stability(std::span<const SuiteResult> results);
std::vector<StabilityRow> modifier_stability(std::span<const SuiteResult> results, std::span<const TestSuite> suites);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Percentile interval of the mean from B resamples with replacement.
/// Endpoints are the order statistics floor(B*(1-level)/2) and its mirror.
/// Throws std::invalid_argument for empty values or B < 100.
Interval bootstrap_ci(std::span<const double> values, int B, std::uint64_t seed, double level = 0.95);

struct SuiteSummary {
  SuiteResult result;
  ChanceEstimate chance;
  Interval ci;  // item-level bootstrap of accuracy
};

struct EvaluationReport {
  std::string model;
  std::map<std::string, std::string> labels;  // grouping metadata, e.g. size=xs
  std::uint64_t seed = 0;
  int bootstrap = 2000;
  std::vector<SuiteSummary> suites;  // sorted by suite name
  double sg_score = 0.0;
  Interval sg_ci;  // suite-level bootstrap
  std::map<Circuit, double> circuits;
  std::optional<double> perplexity;
};

struct ReportOptions {
  int bootstrap = 2000;
  std::uint64_t seed = 0;
  std::uint64_t chance_samples = 100000;
};

/// Chance per suite is for the conjunction of its predictions.
EvaluationReport make_report(const std::string& model, std::span<const TestSuite> suites,
                             std::span<const SuiteResult> results, const ReportOptions& options,
                             std::optional<double> perplexity = std::nullopt,
                             std::map<std::string, std::string> labels = {});

struct DeltaRow {
  std::string model;
  std::string suite;
  double accuracy = 0.0;
  double delta = 0.0;
};

struct DeltaGroupRow {
  std::string key;    // label name, e.g. "size"
  std::string value;  // label value, e.g. "xs"
  std::string suite;  // "*" for the mean across suites
  std::size_t models = 0;
  double mean_delta = 0.0;
};

struct DeltaReport {
  std::vector<DeltaRow> rows;  // by suite, then model in run order
  std::vector<DeltaGroupRow> groups;
};

/// delta = accuracy - mean accuracy of all runs on that suite. Throws Error
/// for fewer than two runs or differing suite sets.
DeltaReport score_deltas(std::span<const EvaluationReport> runs, std::span<const std::string> group_by = {});

/// report.json content for a set of runs (readable by parse_runs).
std::string report_json(std::span<const EvaluationReport> runs, const DeltaReport* deltas = nullptr);
std::vector<EvaluationReport> parse_runs(std::string_view report_json_text);

std::string suites_csv(std::span<const EvaluationReport> runs);
std::string sg_vs_perplexity_csv(std::span<const EvaluationReport> runs);
std::string summary_markdown(std::span<const EvaluationReport> runs, const DeltaReport* deltas);
std::string deltas_csv(const DeltaReport& deltas);
std::string delta_groups_csv(const DeltaReport& deltas);
std::string circuits_csv(std::span<const EvaluationReport> runs);
std::string stability_csv(std::span<const EvaluationReport> runs);

inline constexpr const char* kReportFiles[] = {"suites.csv", "report.json", "summary.md", "sg_vs_perplexity.csv"};

/// Writes the four kReportFiles into `dir`. With `analysis_tables`, also
/// circuits.csv and stability.csv; with `deltas`, also deltas.csv and
/// delta_groups.csv.
void emit_report(std::span<const EvaluationReport> runs, const DeltaReport* deltas, const std::filesystem::path& dir,
                 bool analysis_tables = false);

}  // namespace sg
