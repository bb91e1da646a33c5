#pragma once

// Interpolated modified Kneser-Ney n-gram model with ARPA persistence.
//
// Sentences are padded with one "<s>" (context only, never predicted) and
// one "</s>" (a vocabulary item). Words seen fewer than min_count times in
// training are replaced by their unk_signature class; every class is part of
// the vocabulary whether observed or not. The interpolation bottoms out in a
// uniform distribution over the vocabulary without "<s>".

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sg {

inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";

struct CorpusStats {
  std::uint64_t sentence_count = 0;
  std::uint64_t token_count = 0;    // words, excluding sentence markers
  std::uint64_t type_count = 0;     // distinct surface words
  std::uint64_t unk_type_count = 0; // of those, replaced by a signature class
  bool operator==(const CorpusStats&) const = default;
};

CorpusStats corpus_stats(std::span<const std::vector<std::string>> sentences, int min_count);

/// Discounts for adjusted counts 1, 2 and 3+ at one order.
struct Discounts {
  double d1 = 0.75, d2 = 0.75, d3 = 0.75;
  std::array<std::uint64_t, 4> count_of_counts{};  // n1..n4
  bool fallback = false;                           // 0.75 used because the estimate was undefined
};

/// Modified-KN discounts from counts-of-counts n1..n4; falls back to 0.75
/// for all three when any estimate is undefined or outside [0, k].
Discounts estimate_discounts(const std::array<std::uint64_t, 4>& n);

class NGramModel {
 public:
  static constexpr int kMaxOrder = 8;

  /// Throws ModelError on an empty corpus or order outside [1, kMaxOrder].
  static NGramModel train(std::span<const std::vector<std::string>> sentences, int order = 5, int min_count = 2);

  /// Parses ARPA text. Throws ModelError naming the section on malformed
  /// input, and when expected_order is given and differs.
  static NGramModel from_arpa(std::string_view text, std::optional<int> expected_order = std::nullopt);

  /// ARPA text: log10 probabilities and backoff weights, %.17g.
  std::string to_arpa() const;

  int order() const noexcept { return order_; }
  std::size_t vocabulary_size() const noexcept { return words_.size(); }  // including "<s>"
  const std::vector<std::string>& vocabulary() const noexcept { return words_; }
  bool contains(std::string_view word) const;

  /// Vocabulary item used for `word`: itself when known, else its signature.
  std::string map_word(std::string_view word, bool sentence_initial) const;
  /// map_word over a sentence; position 0 is sentence-initial.
  std::vector<std::string> map_sentence(std::span<const std::string> words) const;

  /// log2 p(word | context) for already-mapped vocabulary items. Only the
  /// last order-1 context words are used; context may begin with "<s>".
  /// Throws ModelError when an item is not in the vocabulary.
  double log_prob(std::string_view word, std::span<const std::string> context) const;

  /// Surprisal in bits of each word of a raw sentence, left to right after
  /// "<s>". With include_eos, one extra entry for "</s>" is appended.
  std::vector<double> sentence_surprisals(std::span<const std::string> words, bool include_eos) const;

  /// 2^(mean bits per token), "</s>" scored and "<s>" not. Throws ModelError
  /// on an empty corpus.
  double perplexity(std::span<const std::vector<std::string>> sentences) const;

  /// Training-time information; absent for models loaded from ARPA.
  const std::optional<CorpusStats>& stats() const noexcept { return stats_; }
  const std::vector<Discounts>& discounts() const noexcept { return discounts_; }

  std::size_t ngram_count(int n) const;

 private:
  struct Table {
    std::vector<std::uint64_t> keys;  // (prefix index << 32) | last word, sorted
    std::vector<double> log10_prob;
    std::vector<double> log10_bow;  // 0 when the entry never serves as a context
    std::vector<char> has_bow;
  };

  std::uint32_t id_of(std::string_view word) const;
  std::optional<std::size_t> find_entry(std::span<const std::uint32_t> ids) const;
  double log10_prob_ids(std::span<const std::uint32_t> ids) const;
  void index_vocabulary();

  int order_ = 0;
  std::vector<std::string> words_;  // sorted; index = id
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::uint32_t bos_ = 0, eos_ = 0;
  std::vector<Table> tables_;  // tables_[n-1] holds n-grams; unigram key = word id
  std::optional<CorpusStats> stats_;
  std::vector<Discounts> discounts_;
};

}  // namespace sg
