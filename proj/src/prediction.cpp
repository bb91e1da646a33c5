#include "sgeval/prediction.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sgeval/error.hpp"
#include "sgeval/rng.hpp"

namespace sg {

namespace {

bool is_bare_name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

std::string render_name(const std::string& name) {
  const bool bare = !name.empty() && std::all_of(name.begin(), name.end(), is_bare_name_char);
  if (bare) return name;
  std::string out = "\"";
  for (char c : name) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string Term::to_string() const {
  return "s(" + render_name(condition) + ";" + render_name(region) + ")";
}

// Recursive-descent parser; one member per grammar rule.
class PredictionParser {
 public:
  explicit PredictionParser(std::string_view src) : src_(src) {}

  Prediction run() {
    Prediction p;
    p.source_ = std::string(src_);
    out_ = &p;
    p.root_ = parse_or();
    skip_ws();
    if (pos_ < src_.size()) {
      const char c = src_[pos_];
      if (c == '<' || c == '>') fail("chained comparison; group boolean terms with [...]");
      if (c == ')') fail("unbalanced ')'");
      if (c == ']') fail("unbalanced ']'");
      fail(std::string("unexpected '") + c + "'");
    }
    if (p.terms_.empty()) {
      pos_ = 0;
      fail("prediction mentions no surprisal term");
    }
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw PredictionError(pos_ + 1, msg); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }

  void expect(char c, const char* what) {
    if (peek() != c) {
      fail(std::string("expected '") + c + "' " + what +
           (pos_ < src_.size() ? std::string(", found '") + src_[pos_] + "'" : ", found end of input"));
    }
    ++pos_;
  }

  std::size_t add(Node n) {
    out_->nodes_.push_back(std::move(n));
    return out_->nodes_.size() - 1;
  }

  std::size_t parse_or() {
    std::vector<std::size_t> parts{parse_and()};
    while (peek() == '|') {
      ++pos_;
      parts.push_back(parse_and());
    }
    if (parts.size() == 1) return parts.front();
    return add(Node{NodeKind::Or, std::move(parts)});
  }

  std::size_t parse_and() {
    std::vector<std::size_t> parts{parse_cmp()};
    while (peek() == '&') {
      ++pos_;
      parts.push_back(parse_cmp());
    }
    if (parts.size() == 1) return parts.front();
    return add(Node{NodeKind::And, std::move(parts)});
  }

  std::size_t parse_cmp() {
    const char c = peek();
    if (c == '[') {
      ++pos_;
      const std::size_t inner = parse_or();
      expect(']', "to close boolean group");
      return inner;
    }
    if (c == '\0') fail("expected a comparison, found end of input");
    const std::size_t lhs = parse_arith();
    const char op = peek();
    if (op != '<' && op != '>') {
      if (op == '\0' || op == '&' || op == '|' || op == ']') {
        fail("arithmetic expression used as a condition; expected '<' or '>'");
      }
      if (op == '=') fail("only strict comparisons '<' and '>' are supported");
      fail(std::string("expected '<' or '>', found '") + op + "'");
    }
    ++pos_;
    if (peek() == '=') fail("only strict comparisons '<' and '>' are supported");
    if (peek() == '[') fail("comparison against a boolean expression");
    const std::size_t rhs = parse_arith();
    return add(Node{op == '<' ? NodeKind::Less : NodeKind::Greater, {lhs, rhs}});
  }

  std::size_t parse_arith() {
    std::size_t acc = parse_term();
    for (;;) {
      const char c = peek();
      if (c != '+' && c != '-') break;
      ++pos_;
      const std::size_t rhs = parse_term();
      acc = add(Node{c == '+' ? NodeKind::Add : NodeKind::Sub, {acc, rhs}});
    }
    return acc;
  }

  std::size_t parse_term() {
    const char c = peek();
    if (c == '(') {
      ++pos_;
      const std::size_t inner = parse_arith();
      const char close = peek();
      if (close == '<' || close == '>') fail("arithmetic over a comparison; use [...] for boolean grouping");
      expect(')', "to close arithmetic group");
      return inner;
    }
    if (c == '[') fail("boolean expression used as an arithmetic operand");
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (c == 's' && pos_ + 1 < src_.size()) {
      std::size_t look = pos_ + 1;
      while (look < src_.size() && std::isspace(static_cast<unsigned char>(src_[look]))) ++look;
      if (look < src_.size() && src_[look] == '(') {
        pos_ = look + 1;
        Term t;
        t.condition = parse_name("condition");
        expect(';', "between condition and region");
        t.region = parse_name("region");
        expect(')', "to close surprisal term");
        return add(Node{NodeKind::Surprisal, {}, 0.0, intern(std::move(t))});
      }
    }
    if (c == '\0') fail("expected a surprisal term or number, found end of input");
    fail(std::string("expected a surprisal term s(COND;REGION) or number, found '") + c + "'");
  }

  std::size_t parse_number() {
    const std::size_t start = pos_;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), v);
    if (ec != std::errc{} || !std::isfinite(v)) fail("malformed number");
    pos_ = static_cast<std::size_t>(ptr - src_.data());
    if (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      pos_ = start;
      fail("malformed number");
    }
    return add(Node{NodeKind::Const, {}, v});
  }

  std::string parse_name(const char* what) {
    const char c = peek();
    std::string name;
    if (c == '"') {
      ++pos_;
      while (pos_ < src_.size() && src_[pos_] != '"') {
        if (src_[pos_] == '\\' && pos_ + 1 < src_.size()) ++pos_;
        name += src_[pos_++];
      }
      if (pos_ >= src_.size()) fail("unterminated quoted name");
      ++pos_;
    } else {
      while (pos_ < src_.size() && is_bare_name_char(src_[pos_])) name += src_[pos_++];
    }
    if (name.empty()) fail(std::string("expected ") + what + " name");
    return name;
  }

  std::size_t intern(Term t) {
    auto& terms = out_->terms_;
    auto it = std::find(terms.begin(), terms.end(), t);
    if (it != terms.end()) return static_cast<std::size_t>(it - terms.begin());
    terms.push_back(std::move(t));
    return terms.size() - 1;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  Prediction* out_ = nullptr;
};

Prediction Prediction::parse(std::string_view source) { return PredictionParser(source).run(); }

bool Prediction::has_arithmetic() const {
  return std::any_of(nodes_.begin(), nodes_.end(), [](const Node& n) {
    return n.kind == NodeKind::Add || n.kind == NodeKind::Sub || n.kind == NodeKind::Const;
  });
}

namespace {

double eval_number(std::span<const Node> nodes, std::size_t i, std::span<const double> values) {
  const Node& n = nodes[i];
  switch (n.kind) {
    case NodeKind::Const:
      return n.value;
    case NodeKind::Surprisal:
      return values[n.term];
    case NodeKind::Add:
      return eval_number(nodes, n.children[0], values) + eval_number(nodes, n.children[1], values);
    case NodeKind::Sub:
      return eval_number(nodes, n.children[0], values) - eval_number(nodes, n.children[1], values);
    default:
      throw EvaluationError("boolean node in arithmetic position");
  }
}

bool eval_bool(std::span<const Node> nodes, std::size_t i, std::span<const double> values) {
  const Node& n = nodes[i];
  switch (n.kind) {
    case NodeKind::Less:
      return eval_number(nodes, n.children[0], values) < eval_number(nodes, n.children[1], values);
    case NodeKind::Greater:
      return eval_number(nodes, n.children[0], values) > eval_number(nodes, n.children[1], values);
    case NodeKind::And: {
      bool all = true;
      for (std::size_t c : n.children) all = eval_bool(nodes, c, values) && all;
      return all;
    }
    case NodeKind::Or: {
      bool any = false;
      for (std::size_t c : n.children) any = eval_bool(nodes, c, values) || any;
      return any;
    }
    default:
      throw EvaluationError("arithmetic node in boolean position");
  }
}

void render(const Prediction& p, std::size_t i, std::string& out) {
  const Node& n = p.nodes()[i];
  switch (n.kind) {
    case NodeKind::Or:
    case NodeKind::And: {
      out += '[';
      for (std::size_t k = 0; k < n.children.size(); ++k) {
        if (k) out += n.kind == NodeKind::Or ? " | " : " & ";
        render(p, n.children[k], out);
      }
      out += ']';
      return;
    }
    case NodeKind::Less:
    case NodeKind::Greater:
      render(p, n.children[0], out);
      out += n.kind == NodeKind::Less ? " < " : " > ";
      render(p, n.children[1], out);
      return;
    case NodeKind::Add:
    case NodeKind::Sub:
      out += '(';
      render(p, n.children[0], out);
      out += n.kind == NodeKind::Add ? " + " : " - ";
      render(p, n.children[1], out);
      out += ')';
      return;
    case NodeKind::Const: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", n.value);
      out += buf;
      return;
    }
    case NodeKind::Surprisal:
      out += p.terms()[n.term].to_string();
      return;
  }
}

}  // namespace

bool Prediction::evaluate(std::span<const double> values) const {
  if (values.size() != terms_.size()) {
    throw EvaluationError("prediction '" + source_ + "' expects " + std::to_string(terms_.size()) +
                          " term values, got " + std::to_string(values.size()));
  }
  return eval_bool(nodes_, root_, values);
}

std::string Prediction::canonical() const {
  std::string out;
  render(*this, root_, out);
  return out;
}

std::set<Term> free_terms(const Prediction& p) { return {p.terms().begin(), p.terms().end()}; }

void SurprisalTable::set(int item, const std::string& condition, const std::string& region, double bits) {
  if (!std::isfinite(bits) || bits < 0.0) {
    throw EvaluationError("surprisal for item " + std::to_string(item) + " " +
                          Term{condition, region}.to_string() + " must be finite and >= 0");
  }
  Key k{item, condition, region};
  empty_.erase(k);
  entries_[std::move(k)] = bits;
}

void SurprisalTable::mark_empty(int item, const std::string& condition, const std::string& region) {
  Key k{item, condition, region};
  entries_.erase(k);
  empty_.insert(std::move(k));
}

const double* SurprisalTable::find(int item, const std::string& condition, const std::string& region) const {
  auto it = entries_.find(Key{item, condition, region});
  return it == entries_.end() ? nullptr : &it->second;
}

bool SurprisalTable::is_empty(int item, const std::string& condition, const std::string& region) const {
  return empty_.contains(Key{item, condition, region});
}

bool evaluate_prediction(const Prediction& p, int item, const SurprisalTable& table) {
  std::vector<double> values;
  values.reserve(p.terms().size());
  for (const Term& t : p.terms()) {
    const double* v = table.find(item, t.condition, t.region);
    if (!v) {
      if (table.is_empty(item, t.condition, t.region)) {
        throw EvaluationError("item " + std::to_string(item) + ": term " + t.to_string() +
                              " refers to an empty region");
      }
      throw EvaluationError("item " + std::to_string(item) + ": no surprisal for term " + t.to_string());
    }
    values.push_back(*v);
  }
  return p.evaluate(values);
}

std::string_view chance_method_name(ChanceMethod m) {
  return m == ChanceMethod::Enumeration ? "enumeration" : "monte_carlo";
}

namespace {

// Is node i a sum (Add-only tree) of surprisal leaves? Collects the leaves.
bool collect_sum(const Prediction& p, std::size_t i, std::vector<std::size_t>& terms) {
  const Node& n = p.nodes()[i];
  if (n.kind == NodeKind::Surprisal) {
    terms.push_back(n.term);
    return true;
  }
  if (n.kind == NodeKind::Add) return collect_sum(p, n.children[0], terms) && collect_sum(p, n.children[1], terms);
  return false;
}

bool is_balanced_sum_comparison(const Prediction& p) {
  const Node& root = p.root();
  if (root.kind != NodeKind::Less && root.kind != NodeKind::Greater) return false;
  std::vector<std::size_t> lhs, rhs;
  if (!collect_sum(p, root.children[0], lhs) || !collect_sum(p, root.children[1], rhs)) return false;
  if (lhs.size() != rhs.size()) return false;
  std::vector<std::size_t> all(lhs);
  all.insert(all.end(), rhs.begin(), rhs.end());
  std::sort(all.begin(), all.end());
  return std::adjacent_find(all.begin(), all.end()) == all.end();
}

// Conjunction of predictions evaluated over a shared term universe.
struct Conjunction {
  std::vector<Term> universe;
  std::vector<std::vector<std::size_t>> index;  // per prediction: local term -> universe slot

  explicit Conjunction(std::span<const Prediction> preds) {
    for (const Prediction& p : preds) {
      std::vector<std::size_t> map;
      for (const Term& t : p.terms()) {
        auto it = std::find(universe.begin(), universe.end(), t);
        if (it == universe.end()) {
          universe.push_back(t);
          map.push_back(universe.size() - 1);
        } else {
          map.push_back(static_cast<std::size_t>(it - universe.begin()));
        }
      }
      index.push_back(std::move(map));
    }
  }

  bool evaluate(std::span<const Prediction> preds, std::span<const double> values,
                std::vector<double>& scratch) const {
    bool all = true;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      scratch.resize(index[k].size());
      for (std::size_t j = 0; j < index[k].size(); ++j) scratch[j] = values[index[k][j]];
      all = preds[k].evaluate(scratch) && all;
    }
    return all;
  }
};

bool exactly_enumerable(std::span<const Prediction> preds, std::size_t universe_size) {
  if (universe_size > kMaxEnumeratedTerms || preds.empty()) return false;
  const bool rank_only =
      std::none_of(preds.begin(), preds.end(), [](const Prediction& p) { return p.has_arithmetic(); });
  if (rank_only) return true;
  return preds.size() == 1 && is_balanced_sum_comparison(preds.front());
}

ChanceEstimate enumerate_orderings(std::span<const Prediction> preds, const Conjunction& conj) {
  // Powers of two: all values distinct and all subset sums distinct, so no
  // relabeling produces a tie.
  const std::size_t n = conj.universe.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> values(n), scratch;
  std::uint64_t total = 0, passed = 0;
  do {
    for (std::size_t i = 0; i < n; ++i) values[i] = std::ldexp(1.0, static_cast<int>(perm[i]));
    ++total;
    if (conj.evaluate(preds, values, scratch)) ++passed;
  } while (std::next_permutation(perm.begin(), perm.end()));
  ChanceEstimate est;
  est.mean = static_cast<double>(passed) / static_cast<double>(total);
  est.std_error = 0.0;
  est.method = ChanceMethod::Enumeration;
  est.samples = total;
  return est;
}

}  // namespace

bool chance_is_exactly_enumerable(const Prediction& p) {
  return exactly_enumerable(std::span(&p, 1), p.terms().size());
}

ChanceEstimate monte_carlo_chance(std::span<const Prediction> preds, std::uint64_t samples, std::uint64_t seed) {
  if (samples == 0) throw Error("chance estimation needs at least one sample");
  const Conjunction conj(preds);
  Engine engine(seed);
  std::vector<double> values(conj.universe.size()), scratch;
  std::uint64_t passed = 0;
  for (std::uint64_t s = 0; s < samples; ++s) {
    for (double& v : values) v = uniform01(engine);
    if (conj.evaluate(preds, values, scratch)) ++passed;
  }
  ChanceEstimate est;
  est.mean = static_cast<double>(passed) / static_cast<double>(samples);
  est.std_error = std::sqrt(est.mean * (1.0 - est.mean) / static_cast<double>(samples));
  est.method = ChanceMethod::MonteCarlo;
  est.samples = samples;
  est.seed = seed;
  return est;
}

ChanceEstimate chance_accuracy(std::span<const Prediction> preds, std::uint64_t samples, std::uint64_t seed) {
  if (samples == 0) throw Error("chance estimation needs at least one sample");
  const Conjunction conj(preds);
  if (exactly_enumerable(preds, conj.universe.size())) {
    ChanceEstimate est = enumerate_orderings(preds, conj);
    est.seed = seed;
    return est;
  }
  return monte_carlo_chance(preds, samples, seed);
}

ChanceEstimate chance_accuracy(const Prediction& p, std::uint64_t samples, std::uint64_t seed) {
  return chance_accuracy(std::span(&p, 1), samples, seed);
}

}  // namespace sg
