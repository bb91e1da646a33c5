#include "sgeval/token_align.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "sgeval/error.hpp"

namespace sg {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_detachable(char c) {
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '?' || c == '!';
}

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool ends_with_ci(std::string_view word, std::string_view suffix) {
  if (word.size() < suffix.size()) return false;
  const auto tail = word.substr(word.size() - suffix.size());
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    if (lower(tail[i]) != suffix[i]) return false;
  }
  return true;
}

constexpr std::string_view kClitics[] = {"n't", "'ll", "'re", "'ve", "'s", "'d", "'m"};

constexpr std::string_view kSuffixes[] = {"ed", "ing", "ion", "er", "est", "ly", "ity", "y", "al", "s"};

// Splits one whitespace-delimited chunk starting at `offset`.
void split_chunk(std::string_view chunk, std::size_t offset, std::vector<Token>& out) {
  std::size_t stem_end = chunk.size();
  while (stem_end > 0 && is_detachable(chunk[stem_end - 1])) --stem_end;
  // a chunk made only of punctuation still yields one token per mark
  std::size_t word_end = stem_end;
  std::optional<std::size_t> clitic_at;
  for (std::string_view c : kClitics) {
    if (word_end > c.size() && ends_with_ci(chunk.substr(0, word_end), c)) {
      clitic_at = word_end - c.size();
      break;
    }
  }
  auto emit = [&](std::size_t b, std::size_t e) {
    if (e > b) out.push_back({std::string(chunk.substr(b, e - b)), offset + b, offset + e});
  };
  if (clitic_at) {
    emit(0, *clitic_at);
    emit(*clitic_at, word_end);
  } else {
    emit(0, word_end);
  }
  for (std::size_t i = stem_end; i < chunk.size(); ++i) emit(i, i + 1);
}

}  // namespace

JoinedSentence join_regions(std::span<const std::pair<std::string, std::string>> named_texts) {
  JoinedSentence out;
  for (const auto& [name, text] : named_texts) {
    if (text.empty()) {
      const std::size_t at = out.sentence.empty() ? 0 : out.sentence.size() + 1;
      out.regions.push_back({name, {at, at}});
      continue;
    }
    if (!out.sentence.empty()) out.sentence += ' ';
    const std::size_t start = out.sentence.size();
    out.sentence += text;
    out.regions.push_back({name, {start, out.sentence.size()}});
  }
  // trailing empty regions must not point past the sentence
  for (auto& r : out.regions) {
    if (r.span.start > out.sentence.size()) r.span = {out.sentence.size(), out.sentence.size()};
  }
  return out;
}

JoinedSentence join_regions(const TestSuite& suite, const Item& item, const std::string& condition) {
  std::vector<std::pair<std::string, std::string>> texts;
  texts.reserve(suite.region_names.size());
  const auto& regions = item.content.at(condition);
  for (const auto& r : suite.region_names) texts.emplace_back(r, regions.at(r));
  return join_regions(texts);
}

std::vector<Token> tokenize_words(std::string_view sentence) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && is_space(sentence[i])) ++i;
    const std::size_t start = i;
    while (i < sentence.size() && !is_space(sentence[i])) ++i;
    if (i > start) split_chunk(sentence.substr(start, i - start), start, out);
  }
  return out;
}

std::string unk_signature(std::string_view word, bool sentence_initial) {
  bool letters = false, upper = false, lowercase = false, digit = false, dash = false;
  for (char ch : word) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalpha(c)) {
      letters = true;
      if (std::isupper(c)) upper = true;
      else lowercase = true;
    }
    if (std::isdigit(c)) digit = true;
    if (ch == '-') dash = true;
  }
  std::string sig = "UNK";
  if (letters && upper && !lowercase) {
    sig += "-CAPS";
  } else if (letters && std::isupper(static_cast<unsigned char>(word.front())) && !sentence_initial) {
    sig += "-INITC";
  } else if (letters) {
    sig += "-LC";
  }
  if (digit) sig += "-NUM";
  if (dash) sig += "-DASH";
  if (word.size() > 3) {
    for (std::string_view s : kSuffixes) {
      if (ends_with_ci(word, s)) {
        sig += '-';
        sig += s;
        break;
      }
    }
  }
  return sig;
}

const std::vector<std::string>& unk_class_inventory() {
  static const std::vector<std::string> inventory = [] {
    std::vector<std::string> v;
    for (std::string_view c : {"", "-CAPS", "-INITC", "-LC"}) {
      for (std::string_view n : {"", "-NUM"}) {
        for (std::string_view d : {"", "-DASH"}) {
          std::string base = "UNK" + std::string(c) + std::string(n) + std::string(d);
          v.push_back(base);
          for (std::string_view s : kSuffixes) v.push_back(base + "-" + std::string(s));
        }
      }
    }
    std::sort(v.begin(), v.end());
    return v;
  }();
  return inventory;
}

std::vector<std::string> map_unknown(std::span<const std::string> words,
                                     const std::unordered_set<std::string>& vocabulary) {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (vocabulary.contains(words[i]) || words[i].empty()) {
      out.push_back(words[i]);
    } else {
      out.push_back(unk_signature(words[i], i == 0));
    }
  }
  return out;
}

const TokenRange* Alignment::find(std::string_view region) const {
  for (const auto& [name, range] : spans) {
    if (name == region) return &range;
  }
  return nullptr;
}

Alignment align(std::span<const Token> tokens, std::span<const RegionOffset> regions,
                std::size_t sentence_length) {
  Alignment out;
  out.spans.reserve(regions.size());
  for (const auto& r : regions) out.spans.push_back({r.name, {0, 0}});

  std::vector<std::size_t> owner(tokens.size());
  std::size_t prev_end = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const Token& tok = tokens[t];
    if (tok.char_start >= tok.char_end) {
      throw InterfaceError("token " + std::to_string(t) + " '" + tok.text + "' has an empty or inverted span");
    }
    if (tok.char_end > sentence_length) {
      throw InterfaceError("token " + std::to_string(t) + " '" + tok.text + "' extends past the sentence end");
    }
    if (tok.char_start < prev_end) {
      throw InterfaceError("token " + std::to_string(t) + " '" + tok.text + "' overlaps or precedes token " +
                           std::to_string(t - 1));
    }
    prev_end = tok.char_end;

    std::optional<std::size_t> found;
    for (std::size_t r = 0; r < regions.size(); ++r) {
      const auto& sp = regions[r].span;
      if (sp.start == sp.end) continue;
      if (tok.char_start < sp.start) {
        found = r;  // in the gap before this region
        break;
      }
      if (tok.char_start < sp.end) {
        found = r;
        break;
      }
    }
    if (!found) {
      throw InterfaceError("token " + std::to_string(t) + " '" + tok.text + "' starts after every region");
    }
    owner[t] = *found;
  }

  std::size_t t = 0;
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const std::size_t begin = t;
    while (t < tokens.size() && owner[t] == r) ++t;
    out.spans[r].second = {begin, t};
  }
  return out;
}

std::map<std::string, double> region_surprisals(std::span<const double> token_bits, const Alignment& alignment) {
  std::map<std::string, double> out;
  for (const auto& [name, range] : alignment.spans) {
    if (range.empty()) continue;
    if (range.end > token_bits.size()) {
      throw InterfaceError("region '" + name + "' has tokens without scores");
    }
    double total = 0.0;
    for (std::size_t i = range.begin; i < range.end; ++i) {
      if (!std::isfinite(token_bits[i])) {
        throw InterfaceError("token " + std::to_string(i) + " has a non-finite surprisal");
      }
      total += token_bits[i];
    }
    out[name] = total;
  }
  return out;
}

double word_normalized_perplexity(double total_bits, std::size_t word_count) {
  if (word_count == 0) throw std::invalid_argument("word_normalized_perplexity: word_count must be at least 1");
  return std::exp2(total_bits / static_cast<double>(word_count));
}

}  // namespace sg
