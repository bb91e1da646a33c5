#include "sgeval/fixtures.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <optional>
#include <set>

#include <json.hpp>

#include "sgeval/error.hpp"
#include "sgeval/io.hpp"
#include "sgeval/prediction.hpp"
#include "sgeval/token_align.hpp"

#ifndef SGEVAL_TEMPLATE_DIR
#define SGEVAL_TEMPLATE_DIR "fixtures/templates"
#endif

namespace sg {

using json = nlohmann::json;

namespace {

std::string collapse_spaces(const std::string& s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = !out.empty();
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  return out;
}

using Choice = std::map<std::string, const std::vector<std::string>*>;

std::string fill(const std::string& text, const Choice& choice, const std::string& where) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '{') {
      out += text[i++];
      continue;
    }
    const std::size_t close = text.find('}', i);
    if (close == std::string::npos) throw SuiteError(where, "unterminated placeholder");
    const std::string ref = text.substr(i + 1, close - i - 1);
    std::string slot = ref;
    std::size_t form = 0;
    if (const auto dot = ref.find('.'); dot != std::string::npos) {
      slot = ref.substr(0, dot);
      const std::string num = ref.substr(dot + 1);
      if (num.empty() || !std::all_of(num.begin(), num.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
        throw SuiteError(where, "bad form index in placeholder '{" + ref + "}'");
      }
      form = std::stoul(num);
    }
    auto it = choice.find(slot);
    if (it == choice.end()) throw SuiteError(where, "placeholder '{" + ref + "}' names no declared slot");
    if (form >= it->second->size()) {
      throw SuiteError(where, "placeholder '{" + ref + "}' asks for form " + std::to_string(form) + " but the filler has " +
                                  std::to_string(it->second->size()));
    }
    out += (*it->second)[form];
    i = close + 1;
  }
  return collapse_spaces(out);
}

}  // namespace

SuiteTemplate parse_template(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SuiteError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SuiteError("", "template must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (key == "items") throw SuiteError("items", "templates declare items through 'slots' and 'frame'");
  }
  json skeleton = doc;
  for (const char* k : {"slots", "frame"}) {
    if (!doc.contains(k)) throw SuiteError("", std::string("missing required key '") + k + "'");
    skeleton.erase(k);
  }
  skeleton["items"] = json::array();

  SuiteTemplate t;
  t.skeleton = parse_suite(skeleton.dump());

  const json& slots = doc["slots"];
  if (!slots.is_object()) throw SuiteError("slots", "expected an object");
  for (const auto& [name, fillers] : slots.items()) {
    const std::string path = "slots." + name;
    if (name.empty() || name.find_first_of(".{}") != std::string::npos) throw SuiteError(path, "bad slot name");
    if (!fillers.is_array() || fillers.empty()) throw SuiteError(path, "expected a non-empty array of fillers");
    auto& list = t.slots[name];
    for (std::size_t i = 0; i < fillers.size(); ++i) {
      const std::string fpath = path + "[" + std::to_string(i) + "]";
      std::vector<std::string> forms;
      if (fillers[i].is_string()) {
        forms.push_back(fillers[i].get<std::string>());
      } else if (fillers[i].is_array() && !fillers[i].empty()) {
        for (const auto& f : fillers[i]) {
          if (!f.is_string()) throw SuiteError(fpath, "forms must be strings");
          forms.push_back(f.get<std::string>());
        }
      } else {
        throw SuiteError(fpath, "a filler is a string or a non-empty array of strings");
      }
      list.push_back(std::move(forms));
    }
  }

  const json& frame = doc["frame"];
  if (!frame.is_object()) throw SuiteError("frame", "expected an object");
  for (const auto& [cond, regions] : frame.items()) {
    const std::string path = "frame." + cond;
    const auto& conds = t.skeleton.condition_names;
    if (std::find(conds.begin(), conds.end(), cond) == conds.end()) throw SuiteError(path, "undeclared condition");
    if (!regions.is_object()) throw SuiteError(path, "expected an object");
    for (const auto& [region, text] : regions.items()) {
      const auto& rs = t.skeleton.region_names;
      if (std::find(rs.begin(), rs.end(), region) == rs.end()) throw SuiteError(path + "." + region, "undeclared region");
      if (!text.is_string()) throw SuiteError(path + "." + region, "expected a string");
      t.frame[cond][region] = text.get<std::string>();
    }
  }
  for (const auto& cond : t.skeleton.condition_names) {
    for (const auto& region : t.skeleton.region_names) {
      if (!t.frame.contains(cond) || !t.frame[cond].contains(region)) {
        throw SuiteError("frame." + cond + "." + region, "missing frame text");
      }
    }
  }
  return t;
}

TestSuite expand(const SuiteTemplate& tmpl, std::size_t limit) {
  TestSuite suite = tmpl.skeleton;
  suite.items.clear();
  std::vector<std::pair<std::string, const std::vector<std::vector<std::string>>*>> slots;
  for (const auto& [name, fillers] : tmpl.slots) {
    if (fillers.empty()) throw SuiteError("slots." + name, "slot has no fillers");
    slots.emplace_back(name, &fillers);
  }
  std::vector<std::size_t> pos(slots.size(), 0);
  while (suite.items.size() < limit) {
    Choice choice;
    for (std::size_t s = 0; s < slots.size(); ++s) choice[slots[s].first] = &(*slots[s].second)[pos[s]];
    Item item;
    item.item_number = static_cast<int>(suite.items.size()) + 1;
    for (const auto& cond : suite.condition_names) {
      for (const auto& region : suite.region_names) {
        item.content[cond][region] = fill(tmpl.frame.at(cond).at(region), choice, "frame." + cond + "." + region);
      }
    }
    suite.items.push_back(std::move(item));

    // odometer, last slot fastest
    std::size_t s = slots.size();
    while (s > 0) {
      --s;
      if (++pos[s] < slots[s].second->size()) break;
      pos[s] = 0;
      if (s == 0) return suite;
    }
    if (slots.empty()) break;
  }
  return suite;
}

std::filesystem::path default_template_dir() { return SGEVAL_TEMPLATE_DIR; }

std::vector<TestSuite> fixture_catalog(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw SuiteError(dir.string(), "template directory not found");
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename().string().ends_with(".template.json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<TestSuite> out;
  for (const auto& f : files) {
    try {
      out.push_back(expand(parse_template(read_file(f)), kFixtureItemLimit));
    } catch (const SuiteError& e) {
      throw SuiteError(f.string(), e.what());
    }
  }
  std::sort(out.begin(), out.end(), [](const TestSuite& a, const TestSuite& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].name == out[i - 1].name) throw SuiteError(dir.string(), "duplicate template name '" + out[i].name + "'");
  }
  return out;
}

std::size_t critical_dependency_span(const TestSuite& suite) {
  std::set<std::string> conds, measured;
  for (const auto& src : suite.predictions) {
    const Prediction p = Prediction::parse(src);
    for (const Term& t : p.terms()) {
      conds.insert(t.condition);
      measured.insert(t.region);
    }
  }
  if (conds.empty()) return 0;

  std::optional<long> best;
  for (const Item& item : suite.items) {
    std::optional<std::size_t> controller;
    for (std::size_t r = 0; r < suite.region_names.size() && !controller; ++r) {
      std::set<std::string> texts;
      for (const auto& c : conds) texts.insert(item.text(c, suite.region_names[r]));
      if (texts.size() > 1) controller = r;
    }
    if (!controller) continue;
    std::optional<std::size_t> first_measured;
    for (std::size_t r = 0; r < suite.region_names.size(); ++r) {
      if (measured.contains(suite.region_names[r])) {
        first_measured = r;
        break;
      }
    }
    if (!first_measured || *controller >= *first_measured) return 0;

    for (const auto& c : conds) {
      const JoinedSentence j = join_regions(suite, item, c);
      const auto tokens = tokenize_words(j.sentence);
      const Alignment a = align(tokens, j.regions, j.sentence.size());
      const TokenRange& ctl = a.spans[*controller].second;
      const long last_ctl = ctl.empty() ? static_cast<long>(ctl.begin) - 1 : static_cast<long>(ctl.end) - 1;
      std::optional<long> first_tok;
      for (std::size_t r = *first_measured; r < suite.region_names.size(); ++r) {
        const TokenRange& range = a.spans[r].second;
        if (measured.contains(suite.region_names[r]) && !range.empty()) {
          first_tok = static_cast<long>(range.begin);
          break;
        }
      }
      if (!first_tok) continue;
      const long d = *first_tok - last_ctl;
      if (!best || d < *best) best = d;
    }
  }
  return best && *best > 0 ? static_cast<std::size_t>(*best) : 0;
}

}  // namespace sg
