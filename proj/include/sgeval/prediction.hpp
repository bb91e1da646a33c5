#pragma once

// Prediction formulas over region surprisals.
//
//   pred  := or
//   or    := and { "|" and }
//   and   := cmp { "&" cmp }
//   cmp   := arith ("<" | ">") arith | "[" or "]"
//   arith := term { ("+" | "-") term }
//   term  := NUMBER | "s" "(" name ";" name ")" | "(" arith ")"
//
// `s(COND;REGION)` is the total surprisal (bits) of REGION in condition COND.
// Names are bare identifiers or double-quoted strings. Comparisons are strict.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sg {

struct Term {
  std::string condition;
  std::string region;
  auto operator<=>(const Term&) const = default;
  std::string to_string() const;
};

enum class NodeKind { Or, And, Less, Greater, Add, Sub, Const, Surprisal };

struct Node {
  NodeKind kind = NodeKind::Const;
  std::vector<std::size_t> children;  // indices into Prediction::nodes()
  double value = 0.0;                 // Const
  std::size_t term = 0;               // Surprisal: index into Prediction::terms()
};

class Prediction {
 public:
  /// Throws PredictionError (with 1-based column) on syntax and type errors.
  static Prediction parse(std::string_view source);

  const std::string& source() const noexcept { return source_; }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  const Node& root() const { return nodes_.at(root_); }
  std::size_t root_index() const noexcept { return root_; }

  /// Distinct surprisal terms in order of first appearance.
  const std::vector<Term>& terms() const noexcept { return terms_; }

  /// True when any Add, Sub or Const node appears.
  bool has_arithmetic() const;

  /// Evaluates with `values[i]` bound to terms()[i]. Every node is visited,
  /// so the result never depends on evaluation order.
  bool evaluate(std::span<const double> values) const;

  /// Fully bracketed canonical rendering; parses back to an equal AST.
  std::string canonical() const;

 private:
  friend class PredictionParser;
  std::string source_;
  std::vector<Node> nodes_;
  std::vector<Term> terms_;
  std::size_t root_ = 0;
};

inline Prediction parse_prediction(std::string_view source) { return Prediction::parse(source); }

std::set<Term> free_terms(const Prediction& p);

/// Region surprisals of one suite keyed by (item, condition, region).
/// Regions whose text is empty are recorded separately so evaluation can
/// tell "empty" apart from "missing".
class SurprisalTable {
 public:
  struct Key {
    int item = 0;
    std::string condition;
    std::string region;
    auto operator<=>(const Key&) const = default;
  };

  /// Throws EvaluationError for negative or non-finite values.
  void set(int item, const std::string& condition, const std::string& region, double bits);
  void mark_empty(int item, const std::string& condition, const std::string& region);

  const double* find(int item, const std::string& condition, const std::string& region) const;
  bool is_empty(int item, const std::string& condition, const std::string& region) const;

  const std::map<Key, double>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::map<Key, double> entries_;
  std::set<Key> empty_;
};

/// Throws EvaluationError naming the term when an entry is missing or the
/// region is empty for that item.
bool evaluate_prediction(const Prediction& p, int item, const SurprisalTable& table);

enum class ChanceMethod { Enumeration, MonteCarlo };
std::string_view chance_method_name(ChanceMethod m);

struct ChanceEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  ChanceMethod method = ChanceMethod::MonteCarlo;
  std::uint64_t samples = 0;  // orderings enumerated, or Monte Carlo draws
  std::uint64_t seed = 0;
};

/// Largest number of free terms handled by exhaustive enumeration.
inline constexpr std::size_t kMaxEnumeratedTerms = 7;

/// True when pass frequency over all orderings of the free terms is the exact
/// chance rate: rank-only formulas, and single comparisons between equally
/// sized sums of disjoint terms (swapping the sides negates the outcome).
bool chance_is_exactly_enumerable(const Prediction& p);

/// Pass rate of `p` when every free term is an independent standard-uniform
/// surprisal. Exact enumeration when chance_is_exactly_enumerable(p) and
/// there are at most kMaxEnumeratedTerms terms; Monte Carlo otherwise.
ChanceEstimate chance_accuracy(const Prediction& p, std::uint64_t samples, std::uint64_t seed);

/// Same, for a conjunction of several predictions over shared terms.
ChanceEstimate chance_accuracy(std::span<const Prediction> conjuncts, std::uint64_t samples,
                               std::uint64_t seed);

/// Monte Carlo only; used by the convergence property and the catalog mean.
ChanceEstimate monte_carlo_chance(std::span<const Prediction> conjuncts, std::uint64_t samples,
                                  std::uint64_t seed);

}  // namespace sg
