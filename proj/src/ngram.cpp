#include "sgeval/ngram.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "sgeval/error.hpp"
#include "sgeval/io.hpp"
#include "sgeval/token_align.hpp"

namespace sg {

namespace {

constexpr double kLog2Of10 = 3.32192809488736234787031942948939017586483139;
constexpr double kArpaFloor = -99.0;

std::uint64_t make_key(std::uint64_t prefix, std::uint32_t word) { return (prefix << 32) | word; }
std::uint64_t key_prefix(std::uint64_t key) { return key >> 32; }
std::uint32_t key_word(std::uint64_t key) { return static_cast<std::uint32_t>(key & 0xffffffffULL); }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double discount_for(const Discounts& d, std::uint64_t count) {
  if (count == 0) return 0.0;
  if (count == 1) return d.d1;
  if (count == 2) return d.d2;
  return d.d3;
}

}  // namespace

Discounts estimate_discounts(const std::array<std::uint64_t, 4>& n) {
  Discounts d;
  d.count_of_counts = n;
  const double n1 = static_cast<double>(n[0]), n2 = static_cast<double>(n[1]);
  const double n3 = static_cast<double>(n[2]), n4 = static_cast<double>(n[3]);
  if (n[0] == 0 || n[1] == 0 || n[2] == 0) {
    d.fallback = true;
    return d;
  }
  const double y = n1 / (n1 + 2.0 * n2);
  const double d1 = 1.0 - 2.0 * y * n2 / n1;
  const double d2 = 2.0 - 3.0 * y * n3 / n2;
  const double d3 = 3.0 - 4.0 * y * n4 / n3;
  if (!(d1 > 0.0 && d1 <= 1.0) || !(d2 > 0.0 && d2 <= 2.0) || !(d3 > 0.0 && d3 <= 3.0)) {
    d.fallback = true;
    return d;
  }
  d.d1 = d1;
  d.d2 = d2;
  d.d3 = d3;
  return d;
}

CorpusStats corpus_stats(std::span<const std::vector<std::string>> sentences, int min_count) {
  CorpusStats s;
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& sent : sentences) {
    ++s.sentence_count;
    s.token_count += sent.size();
    for (const auto& w : sent) ++counts[w];
  }
  s.type_count = counts.size();
  for (const auto& [w, c] : counts) {
    if (c < static_cast<std::uint64_t>(std::max(min_count, 0))) ++s.unk_type_count;
  }
  return s;
}

void NGramModel::index_vocabulary() {
  ids_.clear();
  ids_.reserve(words_.size());
  for (std::uint32_t i = 0; i < words_.size(); ++i) ids_.emplace(words_[i], i);
}

bool NGramModel::contains(std::string_view word) const { return ids_.contains(std::string(word)); }

std::uint32_t NGramModel::id_of(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  if (it == ids_.end()) throw ModelError("'" + std::string(word) + "' is not in the model vocabulary");
  return it->second;
}

std::string NGramModel::map_word(std::string_view word, bool sentence_initial) const {
  if (contains(word)) return std::string(word);
  std::string sig = unk_signature(word, sentence_initial);
  if (contains(sig)) return sig;
  if (contains("<unk>")) return "<unk>";
  return sig;
}

std::vector<std::string> NGramModel::map_sentence(std::span<const std::string> words) const {
  std::vector<std::string> out;
  out.reserve(words.size());
  for (std::size_t i = 0; i < words.size(); ++i) out.push_back(map_word(words[i], i == 0));
  return out;
}

NGramModel NGramModel::train(std::span<const std::vector<std::string>> sentences, int order, int min_count) {
  if (order < 1 || order > kMaxOrder) {
    throw ModelError("order must be between 1 and " + std::to_string(kMaxOrder) + ", got " + std::to_string(order));
  }
  if (sentences.empty()) throw ModelError("cannot train on an empty corpus");

  NGramModel m;
  m.order_ = order;
  m.stats_ = corpus_stats(sentences, min_count);

  std::unordered_map<std::string, std::uint64_t> raw;
  for (const auto& sent : sentences) {
    for (const auto& w : sent) ++raw[w];
  }
  std::set<std::string> vocab(unk_class_inventory().begin(), unk_class_inventory().end());
  vocab.emplace(kBos);
  vocab.emplace(kEos);
  for (const auto& [w, c] : raw) {
    if (c >= static_cast<std::uint64_t>(std::max(min_count, 0))) vocab.insert(w);
  }
  m.words_.assign(vocab.begin(), vocab.end());
  m.index_vocabulary();
  m.bos_ = m.ids_.at(std::string(kBos));
  m.eos_ = m.ids_.at(std::string(kEos));
  const std::size_t V = m.words_.size();

  // flat corpus: <s> w1 .. wn </s> per sentence; off[i] = distance from <s>
  std::vector<std::uint32_t> seq;
  std::vector<std::uint32_t> off;
  for (const auto& sent : sentences) {
    const auto mapped = m.map_sentence(sent);
    seq.push_back(m.bos_);
    off.push_back(0);
    for (std::size_t i = 0; i < mapped.size(); ++i) {
      seq.push_back(m.ids_.at(mapped[i]));
      off.push_back(static_cast<std::uint32_t>(i + 1));
    }
    seq.push_back(m.eos_);
    off.push_back(static_cast<std::uint32_t>(mapped.size() + 1));
  }
  const std::size_t P = seq.size();

  struct Level {
    std::vector<std::uint64_t> keys;
    std::vector<std::uint64_t> raw;
    std::vector<std::uint64_t> cont;
    std::vector<std::uint32_t> suffix;  // index of the (n-1)-gram without the first word
    std::vector<char> starts_bos;
  };
  std::vector<Level> lv(static_cast<std::size_t>(order));

  // unigrams are indexed by word id
  std::vector<std::uint32_t> idx(P), prev_idx;
  {
    Level& u = lv[0];
    u.keys.resize(V);
    for (std::uint32_t i = 0; i < V; ++i) u.keys[i] = i;
    u.raw.assign(V, 0);
    u.cont.assign(V, 0);
    u.suffix.assign(V, 0);
    u.starts_bos.assign(V, 0);
    u.starts_bos[m.bos_] = 1;
    for (std::size_t i = 0; i < P; ++i) {
      ++u.raw[seq[i]];
      idx[i] = seq[i];
    }
  }

  for (int n = 2; n <= order; ++n) {
    prev_idx.swap(idx);
    idx.assign(P, UINT32_MAX);
    Level& cur = lv[static_cast<std::size_t>(n - 1)];
    Level& low = lv[static_cast<std::size_t>(n - 2)];
    std::vector<std::uint64_t> occ;
    occ.reserve(P);
    for (std::size_t i = 0; i < P; ++i) {
      if (off[i] >= static_cast<std::uint32_t>(n - 1)) occ.push_back(make_key(prev_idx[i - 1], seq[i]));
    }
    std::sort(occ.begin(), occ.end());
    for (std::size_t j = 0; j < occ.size();) {
      std::size_t k = j;
      while (k < occ.size() && occ[k] == occ[j]) ++k;
      cur.keys.push_back(occ[j]);
      cur.raw.push_back(k - j);
      j = k;
    }
    const std::size_t E = cur.keys.size();
    cur.cont.assign(E, 0);
    cur.suffix.assign(E, UINT32_MAX);
    cur.starts_bos.assign(E, 0);
    for (std::size_t e = 0; e < E; ++e) cur.starts_bos[e] = low.starts_bos[key_prefix(cur.keys[e])];
    for (std::size_t i = 0; i < P; ++i) {
      if (off[i] < static_cast<std::uint32_t>(n - 1)) continue;
      const auto key = make_key(prev_idx[i - 1], seq[i]);
      const auto e = static_cast<std::uint32_t>(std::lower_bound(cur.keys.begin(), cur.keys.end(), key) -
                                                cur.keys.begin());
      idx[i] = e;
      if (cur.suffix[e] == UINT32_MAX) {
        cur.suffix[e] = prev_idx[i];
        ++low.cont[prev_idx[i]];
      }
    }
  }

  // adjusted counts: raw at the top order and for n-grams opening at <s>
  std::vector<std::vector<std::uint64_t>> adj(static_cast<std::size_t>(order));
  for (int n = 1; n <= order; ++n) {
    const Level& L = lv[static_cast<std::size_t>(n - 1)];
    auto& a = adj[static_cast<std::size_t>(n - 1)];
    a.resize(L.keys.size());
    for (std::size_t e = 0; e < L.keys.size(); ++e) {
      a[e] = (n == order || L.starts_bos[e]) ? L.raw[e] : L.cont[e];
    }
    if (n == 1) a[m.bos_] = 0;
    std::array<std::uint64_t, 4> coc{};
    for (auto c : a) {
      if (c >= 1 && c <= 4) ++coc[c - 1];
    }
    m.discounts_.push_back(estimate_discounts(coc));
  }

  m.tables_.resize(static_cast<std::size_t>(order));
  std::vector<double> lower_prob;
  for (int n = 1; n <= order; ++n) {
    const Level& L = lv[static_cast<std::size_t>(n - 1)];
    const auto& a = adj[static_cast<std::size_t>(n - 1)];
    const Discounts& D = m.discounts_[static_cast<std::size_t>(n - 1)];
    Table& t = m.tables_[static_cast<std::size_t>(n - 1)];
    const std::size_t E = L.keys.size();
    t.keys = L.keys;
    t.log10_prob.assign(E, 0.0);
    t.log10_bow.assign(E, 0.0);
    t.has_bow.assign(E, 0);
    std::vector<double> prob(E, 0.0);

    // entries sharing a context are contiguous because keys sort by prefix
    for (std::size_t j = 0; j < E;) {
      std::size_t k = j;
      const std::uint64_t ctx = n == 1 ? 0 : key_prefix(L.keys[j]);
      if (n == 1) {
        k = E;
      } else {
        while (k < E && key_prefix(L.keys[k]) == ctx) ++k;
      }
      double total = 0.0;
      double mass = 0.0;
      for (std::size_t e = j; e < k; ++e) {
        total += static_cast<double>(a[e]);
        mass += discount_for(D, a[e]);
      }
      const double gamma = total > 0.0 ? mass / total : 1.0;
      for (std::size_t e = j; e < k; ++e) {
        const double lower = n == 1 ? 1.0 / static_cast<double>(V - 1) : lower_prob[L.suffix[e]];
        const double own = total > 0.0 ? (static_cast<double>(a[e]) - discount_for(D, a[e])) / total : 0.0;
        prob[e] = std::max(own, 0.0) + gamma * lower;
      }
      if (n > 1) {
        Table& up = m.tables_[static_cast<std::size_t>(n - 2)];
        up.log10_bow[ctx] = std::log10(gamma);
        up.has_bow[ctx] = 1;
      }
      j = k;
    }
    for (std::size_t e = 0; e < E; ++e) t.log10_prob[e] = std::log10(prob[e]);
    if (n == 1) t.log10_prob[m.bos_] = kArpaFloor;
    lower_prob.swap(prob);
  }
  return m;
}

std::optional<std::size_t> NGramModel::find_entry(std::span<const std::uint32_t> ids) const {
  if (ids.empty() || ids.size() > tables_.size()) return std::nullopt;
  std::uint64_t index = ids[0];
  if (index >= words_.size()) return std::nullopt;
  for (std::size_t j = 1; j < ids.size(); ++j) {
    const auto& keys = tables_[j].keys;
    const auto key = make_key(index, ids[j]);
    auto it = std::lower_bound(keys.begin(), keys.end(), key);
    if (it == keys.end() || *it != key) return std::nullopt;
    index = static_cast<std::uint64_t>(it - keys.begin());
  }
  return static_cast<std::size_t>(index);
}

double NGramModel::log10_prob_ids(std::span<const std::uint32_t> ids) const {
  double acc = 0.0;
  while (ids.size() > 1) {
    if (auto e = find_entry(ids)) return acc + tables_[ids.size() - 1].log10_prob[*e];
    if (auto h = find_entry(ids.first(ids.size() - 1)); h && tables_[ids.size() - 2].has_bow[*h]) {
      acc += tables_[ids.size() - 2].log10_bow[*h];
    }
    ids = ids.subspan(1);
  }
  return acc + tables_[0].log10_prob[ids[0]];
}

double NGramModel::log_prob(std::string_view word, std::span<const std::string> context) const {
  const std::uint32_t w = id_of(word);
  if (w == bos_) throw ModelError("'<s>' is context-only and has no probability");
  const std::size_t keep = std::min(context.size(), static_cast<std::size_t>(order_ - 1));
  std::vector<std::uint32_t> ids;
  ids.reserve(keep + 1);
  for (std::size_t i = context.size() - keep; i < context.size(); ++i) ids.push_back(id_of(context[i]));
  ids.push_back(w);
  return log10_prob_ids(ids) * kLog2Of10;
}

std::vector<double> NGramModel::sentence_surprisals(std::span<const std::string> words, bool include_eos) const {
  const auto mapped = map_sentence(words);
  std::vector<std::uint32_t> ids;
  ids.reserve(mapped.size() + 2);
  ids.push_back(bos_);
  for (const auto& w : mapped) ids.push_back(id_of(w));
  if (include_eos) ids.push_back(eos_);
  std::vector<double> out;
  out.reserve(ids.size() - 1);
  const auto span = std::span<const std::uint32_t>(ids);
  for (std::size_t i = 1; i < ids.size(); ++i) {
    const std::size_t begin = i + 1 >= static_cast<std::size_t>(order_) ? i + 1 - static_cast<std::size_t>(order_) : 0;
    out.push_back(-log10_prob_ids(span.subspan(begin, i + 1 - begin)) * kLog2Of10);
  }
  return out;
}

double NGramModel::perplexity(std::span<const std::vector<std::string>> sentences) const {
  double bits = 0.0;
  std::uint64_t n = 0;
  for (const auto& s : sentences) {
    for (double b : sentence_surprisals(s, true)) {
      bits += b;
      ++n;
    }
  }
  if (n == 0) throw ModelError("perplexity of an empty corpus is undefined");
  return std::exp2(bits / static_cast<double>(n));
}

std::size_t NGramModel::ngram_count(int n) const {
  if (n < 1 || n > order_) return 0;
  return tables_[static_cast<std::size_t>(n - 1)].keys.size();
}

std::string NGramModel::to_arpa() const {
  std::string out = "\\data\\\n";
  for (int n = 1; n <= order_; ++n) {
    out += "ngram " + std::to_string(n) + "=" + std::to_string(ngram_count(n)) + "\n";
  }
  std::vector<std::uint32_t> ids;
  for (int n = 1; n <= order_; ++n) {
    out += "\n\\" + std::to_string(n) + "-grams:\n";
    const Table& t = tables_[static_cast<std::size_t>(n - 1)];
    for (std::size_t e = 0; e < t.keys.size(); ++e) {
      ids.assign(static_cast<std::size_t>(n), 0);
      std::uint64_t index = e;
      for (int j = n - 1; j >= 1; --j) {
        const std::uint64_t key = tables_[static_cast<std::size_t>(j)].keys[index];
        ids[static_cast<std::size_t>(j)] = key_word(key);
        index = key_prefix(key);
      }
      ids[0] = static_cast<std::uint32_t>(index);
      out += format_double(t.log10_prob[e]);
      out += '\t';
      for (int j = 0; j < n; ++j) {
        if (j) out += ' ';
        out += words_[ids[static_cast<std::size_t>(j)]];
      }
      if (t.has_bow[e]) {
        out += '\t';
        out += format_double(t.log10_bow[e]);
      }
      out += '\n';
    }
  }
  out += "\n\\end\\\n";
  return out;
}

NGramModel NGramModel::from_arpa(std::string_view text, std::optional<int> expected_order) {
  const auto lines = split_lines(text);
  std::size_t li = 0;
  auto skip_blank = [&] {
    while (li < lines.size() && split_whitespace(lines[li]).empty()) ++li;
  };
  skip_blank();
  if (li >= lines.size() || lines[li] != "\\data\\") throw ModelError("ARPA: missing \\data\\ header");
  ++li;
  std::map<int, std::size_t> declared;
  while (li < lines.size() && lines[li].rfind("ngram ", 0) == 0) {
    const std::string& l = lines[li];
    const auto eq = l.find('=');
    int n = 0;
    std::size_t c = 0;
    if (eq == std::string::npos ||
        std::from_chars(l.data() + 6, l.data() + eq, n).ec != std::errc{} ||
        std::from_chars(l.data() + eq + 1, l.data() + l.size(), c).ec != std::errc{} || n < 1 ||
        n > kMaxOrder || declared.contains(n)) {
      throw ModelError("ARPA \\data\\ section: bad line '" + l + "'");
    }
    declared[n] = c;
    ++li;
  }
  if (declared.empty()) throw ModelError("ARPA \\data\\ section: no ngram counts");
  const int order = declared.rbegin()->first;
  for (int n = 1; n <= order; ++n) {
    if (!declared.contains(n)) throw ModelError("ARPA \\data\\ section: missing count for order " + std::to_string(n));
  }
  if (expected_order && *expected_order != order) {
    throw ModelError("ARPA: model order " + std::to_string(order) + " does not match expected order " +
                     std::to_string(*expected_order));
  }

  struct Row {
    double prob;
    std::vector<std::string> words;
    std::optional<double> bow;
  };
  auto parse_number = [](const std::string& s, double& v) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (*b == '+') ++b;
    auto r = std::from_chars(b, e, v);
    return r.ec == std::errc{} && r.ptr == e;
  };

  NGramModel m;
  m.order_ = order;
  m.tables_.resize(static_cast<std::size_t>(order));
  for (int n = 1; n <= order; ++n) {
    const std::string section = "\\" + std::to_string(n) + "-grams:";
    skip_blank();
    if (li >= lines.size()) throw ModelError("ARPA " + section + " section: file truncated before section header");
    if (lines[li] != section) throw ModelError("ARPA: expected '" + section + "', found '" + lines[li] + "'");
    ++li;
    std::vector<Row> rows;
    rows.reserve(declared[n]);
    while (li < lines.size() && !lines[li].empty() && lines[li][0] != '\\') {
      const auto f = split_whitespace(lines[li]);
      Row r;
      if (f.size() != static_cast<std::size_t>(n) + 1 && f.size() != static_cast<std::size_t>(n) + 2) {
        throw ModelError("ARPA " + section + " section: line " + std::to_string(li + 1) + " has " +
                         std::to_string(f.size()) + " fields");
      }
      if (!parse_number(f[0], r.prob)) {
        throw ModelError("ARPA " + section + " section: line " + std::to_string(li + 1) + ": bad probability");
      }
      r.words.assign(f.begin() + 1, f.begin() + 1 + n);
      if (f.size() == static_cast<std::size_t>(n) + 2) {
        double b = 0;
        if (!parse_number(f.back(), b)) {
          throw ModelError("ARPA " + section + " section: line " + std::to_string(li + 1) + ": bad backoff weight");
        }
        r.bow = b;
      }
      rows.push_back(std::move(r));
      ++li;
    }
    if (rows.size() != declared[n]) {
      throw ModelError("ARPA " + section + " section: expected " + std::to_string(declared[n]) + " entries, found " +
                       std::to_string(rows.size()) + (li >= lines.size() ? " (file truncated)" : ""));
    }

    Table& t = m.tables_[static_cast<std::size_t>(n - 1)];
    if (n == 1) {
      std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.words[0] < b.words[0]; });
      for (const Row& r : rows) m.words_.push_back(r.words[0]);
      if (std::adjacent_find(m.words_.begin(), m.words_.end()) != m.words_.end()) {
        throw ModelError("ARPA " + section + " section: duplicate unigram");
      }
      m.index_vocabulary();
      if (!m.contains(kBos) || !m.contains(kEos)) {
        throw ModelError("ARPA " + section + " section: '<s>' and '</s>' must both be listed");
      }
      m.bos_ = m.ids_.at(std::string(kBos));
      m.eos_ = m.ids_.at(std::string(kEos));
      for (std::uint32_t i = 0; i < rows.size(); ++i) {
        t.keys.push_back(i);
        t.log10_prob.push_back(rows[i].prob);
        t.log10_bow.push_back(rows[i].bow.value_or(0.0));
        t.has_bow.push_back(rows[i].bow.has_value());
      }
      continue;
    }
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(rows.size());
    std::vector<std::uint32_t> ids;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      ids.clear();
      for (const auto& w : rows[r].words) {
        auto it = m.ids_.find(w);
        if (it == m.ids_.end()) {
          throw ModelError("ARPA " + section + " section: word '" + w + "' missing from unigrams");
        }
        ids.push_back(it->second);
      }
      auto prefix = m.find_entry(std::span<const std::uint32_t>(ids).first(ids.size() - 1));
      if (!prefix) throw ModelError("ARPA " + section + " section: an n-gram's prefix is not listed");
      keyed.emplace_back(make_key(*prefix, ids.back()), r);
    }
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < keyed.size(); ++i) {
      if (i && keyed[i].first == keyed[i - 1].first) throw ModelError("ARPA " + section + " section: duplicate n-gram");
      const Row& r = rows[keyed[i].second];
      t.keys.push_back(keyed[i].first);
      t.log10_prob.push_back(r.prob);
      t.log10_bow.push_back(r.bow.value_or(0.0));
      t.has_bow.push_back(r.bow.has_value());
    }
  }
  skip_blank();
  if (li >= lines.size() || lines[li] != "\\end\\") throw ModelError("ARPA: missing \\end\\ marker (file truncated?)");
  return m;
}

}  // namespace sg
