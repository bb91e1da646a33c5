#pragma once

// Getting per-token surprisals out of a model, and turning them into region
// totals. Every model kind goes through the same request/record pair:
//
//   request  {"suite","item","condition","sentence","regions":[{"name","start","end"}]}
//   record   {"suite","item","condition","tokens":[{"text","start","end","surprisal"}]}
//
// one JSON object per line, surprisal in bits.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sgeval/ngram.hpp"
#include "sgeval/prediction.hpp"
#include "sgeval/suite.hpp"
#include "sgeval/token_align.hpp"

namespace sg {

struct RequestKey {
  std::string suite;
  int item = 0;
  std::string condition;
  auto operator<=>(const RequestKey&) const = default;
  std::string to_string() const;
};

struct ScoringRequest {
  std::string suite;
  int item = 0;
  std::string condition;
  std::string sentence;
  std::vector<RegionOffset> regions;
  RequestKey key() const { return {suite, item, condition}; }
  bool operator==(const ScoringRequest&) const = default;
};

struct ScoredToken {
  std::string text;
  std::size_t start = 0;
  std::size_t end = 0;
  double surprisal = 0.0;
  bool operator==(const ScoredToken&) const = default;
};

struct TokenScoreRecord {
  std::string suite;
  int item = 0;
  std::string condition;
  std::vector<ScoredToken> tokens;
  RequestKey key() const { return {suite, item, condition}; }
  bool operator==(const TokenScoreRecord&) const = default;
};

/// One request per (suite, item, condition), suites in the given order,
/// items in file order, conditions in declared order.
std::vector<ScoringRequest> make_requests(std::span<const TestSuite> suites);

std::string request_line(const ScoringRequest& r);
std::string record_line(const TokenScoreRecord& r);
/// Throw InterfaceError on malformed lines.
ScoringRequest parse_request_line(std::string_view line);
TokenScoreRecord parse_record_line(std::string_view line);

/// Newline-terminated JSON Lines documents.
std::string write_requests(std::span<const TestSuite> suites);
std::string serialize_requests(std::span<const ScoringRequest> requests);
std::string serialize_records(std::span<const TokenScoreRecord> records);
std::vector<ScoringRequest> parse_requests(std::string_view text);
std::vector<TokenScoreRecord> parse_records(std::string_view text);

enum class ModelKind { NGram, SurprisalFile, Adapter, Random, Uniform };

struct ModelHandle {
  ModelKind kind = ModelKind::Uniform;
  std::string locator;          // path or command line
  std::uint64_t seed = 0;       // random
  std::uint64_t vocab_size = 0; // uniform

  /// "ngram:PATH", "surprisals:PATH", "adapter:COMMAND", "random:SEED",
  /// "uniform:N". Throws InterfaceError otherwise.
  static ModelHandle parse(std::string_view text);
  std::string to_string() const;
};

struct ScoreOptions {
  int jobs = 1;  // worker threads or adapter processes; never changes results
};

/// One record per request, in request order. Checks every record against
/// its request before returning (see check_records).
std::vector<TokenScoreRecord> score(const ModelHandle& handle, std::span<const ScoringRequest> requests,
                                    const ScoreOptions& options = {});

std::vector<TokenScoreRecord> score_ngram(const NGramModel& model, std::span<const ScoringRequest> requests,
                                          const ScoreOptions& options = {});
std::vector<TokenScoreRecord> score_uniform(std::uint64_t vocab_size, std::span<const ScoringRequest> requests);
std::vector<TokenScoreRecord> score_random(std::uint64_t seed, std::span<const ScoringRequest> requests);
/// Picks the records matching `requests` out of a precomputed set, in request
/// order; missing and unrequested records are errors.
std::vector<TokenScoreRecord> select_records(std::span<const TokenScoreRecord> available,
                                             std::span<const ScoringRequest> requests);
/// Runs `command` under /bin/sh, streams request lines to its stdin and reads
/// one record line per request from its stdout. With jobs > 1 the requests
/// are split into contiguous shards, one process each.
std::vector<TokenScoreRecord> run_adapter(const std::string& command, std::span<const ScoringRequest> requests,
                                          const ScoreOptions& options = {});

/// Record i must carry the key of request i, and its tokens must be ordered,
/// non-overlapping, non-empty spans inside the sentence with finite,
/// non-negative surprisals. Throws InterfaceError naming the record.
void check_records(std::span<const ScoringRequest> requests, std::span<const TokenScoreRecord> records);

/// Region totals for one suite. Empty regions are marked empty; a record
/// must exist for every (item, condition).
SurprisalTable build_surprisal_table(std::span<const TokenScoreRecord> records, const TestSuite& suite);
std::map<std::string, SurprisalTable> build_surprisal_tables(std::span<const TokenScoreRecord> records,
                                                             std::span<const TestSuite> suites);

}  // namespace sg
