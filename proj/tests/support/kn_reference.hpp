#pragma once

// Slow textbook interpolated modified Kneser-Ney, keyed by word strings and
// evaluated recursively. Shares nothing with the library model except the
// signature function used to spell rare words.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sgeval/token_align.hpp"

namespace kn_ref {

using Gram = std::vector<std::string>;

class Reference {
 public:
  Reference(const std::vector<std::vector<std::string>>& sentences, int order, int min_count) : order_(order) {
    std::map<std::string, int> freq;
    for (const auto& s : sentences) {
      for (const auto& w : s) ++freq[w];
    }
    for (const auto& c : sg::unk_class_inventory()) vocab_.insert(c);
    vocab_.insert("<s>");
    vocab_.insert("</s>");
    for (const auto& [w, c] : freq) {
      if (c >= min_count) vocab_.insert(w);
    }
    for (const auto& s : sentences) {
      Gram padded{"<s>"};
      for (std::size_t i = 0; i < s.size(); ++i) padded.push_back(map(s[i], i == 0));
      padded.push_back("</s>");
      for (std::size_t end = 1; end <= padded.size(); ++end) {
        for (int n = 1; n <= order; ++n) {
          if (static_cast<int>(end) < n) break;
          raw_[Gram(padded.begin() + static_cast<long>(end) - n, padded.begin() + static_cast<long>(end))]++;
        }
      }
    }
    // left extensions of every n-gram
    for (const auto& [g, c] : raw_) {
      if (g.size() >= 2) left_[Gram(g.begin() + 1, g.end())].insert(g[0]);
    }
    for (const auto& [g, c] : raw_) {
      const double a = adjusted(g);
      if (g == Gram{"<s>"}) continue;
      if (a >= 1 && a <= 4) coc_[g.size()][static_cast<int>(a)]++;
    }
    for (int n = 1; n <= order; ++n) discounts_[n] = discounts(coc_[n]);
  }

  std::string map(const std::string& w, bool initial) const {
    if (vocab_.count(w)) return w;
    return sg::unk_signature(w, initial);
  }

  /// log2 p(w | context) for mapped words.
  double log2_prob(const std::string& w, Gram context) const {
    if (static_cast<int>(context.size()) > order_ - 1) {
      context.erase(context.begin(), context.end() - (order_ - 1));
    }
    return std::log2(prob(w, context));
  }

  double prob(const std::string& w, const Gram& h) const {
    const std::size_t n = h.size() + 1;
    if (n == 1) {
      double total = 0, mass = 0;
      for (const auto& v : vocab_) {
        if (v == "<s>") continue;
        const double a = adjusted(Gram{v});
        total += a;
        mass += disc(1, a);
      }
      const double a = adjusted(Gram{w});
      return std::max(a - disc(1, a), 0.0) / total + (mass / total) / static_cast<double>(vocab_.size() - 1);
    }
    const Gram lower_h(h.begin() + 1, h.end());
    double total = 0, mass = 0;
    for (const auto& v : vocab_) {
      Gram g = h;
      g.push_back(v);
      if (!raw_.count(g)) continue;
      const double a = adjusted(g);
      total += a;
      mass += disc(n, a);
    }
    if (total == 0) return prob(w, lower_h);
    Gram g = h;
    g.push_back(w);
    const double a = raw_.count(g) ? adjusted(g) : 0.0;
    return std::max(a - disc(n, a), 0.0) / total + (mass / total) * prob(w, lower_h);
  }

  std::size_t vocabulary_size() const { return vocab_.size(); }
  const std::set<std::string>& vocabulary() const { return vocab_; }
  std::vector<double> discount_triple(int n) const { return discounts_.at(n); }

 private:
  double adjusted(const Gram& g) const {
    if (static_cast<int>(g.size()) == order_ || g[0] == "<s>") {
      auto it = raw_.find(g);
      return it == raw_.end() ? 0.0 : static_cast<double>(it->second);
    }
    auto it = left_.find(g);
    return it == left_.end() ? 0.0 : static_cast<double>(it->second.size());
  }

  static std::vector<double> discounts(const std::map<int, double>& coc) {
    auto n = [&](int k) {
      auto it = coc.find(k);
      return it == coc.end() ? 0.0 : it->second;
    };
    const std::vector<double> fallback{0.75, 0.75, 0.75};
    if (n(1) == 0 || n(2) == 0 || n(3) == 0) return fallback;
    const double y = n(1) / (n(1) + 2 * n(2));
    std::vector<double> d{1 - 2 * y * n(2) / n(1), 2 - 3 * y * n(3) / n(2), 3 - 4 * y * n(4) / n(3)};
    for (int k = 0; k < 3; ++k) {
      if (!(d[k] > 0 && d[k] <= k + 1)) return fallback;
    }
    return d;
  }

  double disc(std::size_t n, double a) const {
    if (a <= 0) return 0;
    const auto& d = discounts_.at(static_cast<int>(n));
    return a < 2 ? d[0] : a < 3 ? d[1] : d[2];
  }

  int order_;
  std::set<std::string> vocab_;
  std::map<Gram, long> raw_;
  std::map<Gram, std::set<std::string>> left_;
  std::map<std::size_t, std::map<int, double>> coc_;
  std::map<int, std::vector<double>> discounts_;
};

}  // namespace kn_ref
