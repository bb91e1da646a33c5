#pragma once

// Word tokenization, rare-word signatures, and attribution of token scores to
// the regions of a joined sentence.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sgeval/suite.hpp"

namespace sg {

struct Token {
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;  // exclusive
  bool operator==(const Token&) const = default;
};

struct CharSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  bool operator==(const CharSpan&) const = default;
};

struct RegionOffset {
  std::string name;
  CharSpan span;
  bool operator==(const RegionOffset&) const = default;
};

struct JoinedSentence {
  std::string sentence;
  std::vector<RegionOffset> regions;  // in region order
};

/// Joins non-empty region texts with single spaces. An empty region gets a
/// zero-width span at the position where the next text would start.
JoinedSentence join_regions(std::span<const std::pair<std::string, std::string>> named_texts);
JoinedSentence join_regions(const TestSuite& suite, const Item& item, const std::string& condition);

/// Whitespace split, then trailing . , ; : ? ! detached one by one, then a
/// clitic ('s n't 're 've 'll 'd 'm) split off the remaining word.
std::vector<Token> tokenize_words(std::string_view sentence);

/// Signature class for an out-of-vocabulary word. `word` is not checked
/// against any vocabulary here; callers decide when to apply it.
std::string unk_signature(std::string_view word, bool sentence_initial);

/// Every class unk_signature can return, sorted.
const std::vector<std::string>& unk_class_inventory();

/// Maps words outside `vocabulary` to their signatures.
std::vector<std::string> map_unknown(std::span<const std::string> words,
                                     const std::unordered_set<std::string>& vocabulary);

struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool operator==(const TokenRange&) const = default;
};

struct Alignment {
  std::vector<std::pair<std::string, TokenRange>> spans;  // in region order
  const TokenRange* find(std::string_view region) const;
};

/// Each token goes to the region whose span contains its char_start. A token
/// starting on a joining space (sub-word pieces that carry their leading
/// space) goes to the next non-empty region.
/// Throws InterfaceError for tokens that are out of order, overlapping or
/// outside the sentence.
Alignment align(std::span<const Token> tokens, std::span<const RegionOffset> regions,
                std::size_t sentence_length);

/// Region totals in bits; empty regions are absent from the result.
std::map<std::string, double> region_surprisals(std::span<const double> token_bits, const Alignment& alignment);

/// 2^(total_bits / word_count); throws std::invalid_argument when word_count == 0.
double word_normalized_perplexity(double total_bits, std::size_t word_count);

}  // namespace sg
