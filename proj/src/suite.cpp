#include "sgeval/suite.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "sgeval/error.hpp"
#include "sgeval/io.hpp"
#include "sgeval/prediction.hpp"

namespace sg {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::pair<Circuit, std::string_view> kCircuitLabels[] = {
    {Circuit::Agreement, "Agreement"},
    {Circuit::Licensing, "Licensing"},
    {Circuit::GardenPath, "Garden-Path Effects"},
    {Circuit::GrossSyntacticExpectation, "Gross Syntactic Expectation"},
    {Circuit::CenterEmbedding, "Center Embedding"},
    {Circuit::LongDistanceDependencies, "Long-Distance Dependencies"},
};

const std::set<std::string> kSuiteKeys = {"name",        "circuit",       "regions", "conditions",
                                          "predictions", "modifier_base", "items"};
const std::set<std::string> kItemKeys = {"item_number", "content"};

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw SuiteError(path.empty() ? key : path + "." + key, "unknown key");
  }
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw SuiteError(path, std::string("missing required key '") + key + "'");
  return *it;
}

std::string as_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw SuiteError(path, "expected a string");
  return v.get<std::string>();
}

std::vector<std::string> as_string_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw SuiteError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_string(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Item parse_item(const json& v, const TestSuite& suite, const std::string& path) {
  if (!v.is_object()) throw SuiteError(path, "expected an object");
  reject_unknown_keys(v, kItemKeys, path);
  Item item;
  const json& num = require(v, "item_number", path);
  if (!num.is_number_integer()) throw SuiteError(path + ".item_number", "expected an integer");
  item.item_number = num.get<int>();

  const json& content = require(v, "content", path);
  const std::string cpath = path + ".content";
  if (!content.is_object()) throw SuiteError(cpath, "expected an object");
  for (const auto& [cond, regions] : content.items()) {
    const std::string rpath = cpath + "." + cond;
    if (std::find(suite.condition_names.begin(), suite.condition_names.end(), cond) == suite.condition_names.end()) {
      throw SuiteError(rpath, "condition not declared in 'conditions'");
    }
    if (!regions.is_object()) throw SuiteError(rpath, "expected an object");
    auto& texts = item.content[cond];
    for (const auto& [region, text] : regions.items()) {
      if (std::find(suite.region_names.begin(), suite.region_names.end(), region) == suite.region_names.end()) {
        throw SuiteError(rpath + "." + region, "region not declared in 'regions'");
      }
      texts[region] = as_string(text, rpath + "." + region);
    }
  }
  for (const auto& cond : suite.condition_names) {
    auto it = item.content.find(cond);
    if (it == item.content.end()) {
      throw SuiteError(cpath + "." + cond, "item " + std::to_string(item.item_number) + " has no text for condition '" +
                                               cond + "'");
    }
    for (const auto& region : suite.region_names) {
      if (!it->second.contains(region)) {
        throw SuiteError(cpath + "." + cond + "." + region,
                         "item " + std::to_string(item.item_number) + ", condition '" + cond +
                             "': missing text for region '" + region + "'");
      }
    }
  }
  return item;
}

bool well_spaced(const std::string& s) {
  if (s.empty()) return true;
  if (std::isspace(static_cast<unsigned char>(s.front())) || std::isspace(static_cast<unsigned char>(s.back()))) {
    return false;
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (c == ' ' && s[i + 1] == ' ') return false;
    if (std::isspace(c) && c != ' ') return false;
  }
  return true;
}

}  // namespace

std::string_view circuit_label(Circuit c) {
  for (const auto& [circuit, label] : kCircuitLabels) {
    if (circuit == c) return label;
  }
  return "?";
}

std::optional<Circuit> circuit_from_label(std::string_view label) {
  for (const auto& [circuit, text] : kCircuitLabels) {
    if (text == label) return circuit;
  }
  return std::nullopt;
}

std::string DiagnosticLocation::to_string() const {
  std::string out = suite;
  if (item) out += " item " + std::to_string(*item);
  if (!condition.empty()) out += " condition '" + condition + "'";
  if (!region.empty()) out += " region '" + region + "'";
  return out;
}

std::string SuiteDiagnostic::to_string() const {
  return std::string(severity == Severity::Error ? "error" : "warning") + ": " + location.to_string() + ": " +
         message;
}

TestSuite parse_suite(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SuiteError("", std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw SuiteError("", "suite document must be a JSON object");
  reject_unknown_keys(doc, kSuiteKeys, "");

  TestSuite suite;
  suite.name = as_string(require(doc, "name", ""), "name");
  const std::string label = as_string(require(doc, "circuit", ""), "circuit");
  auto circuit = circuit_from_label(label);
  if (!circuit) throw SuiteError("circuit", "unknown circuit label '" + label + "'");
  suite.circuit = *circuit;
  suite.region_names = as_string_list(require(doc, "regions", ""), "regions");
  suite.condition_names = as_string_list(require(doc, "conditions", ""), "conditions");
  suite.predictions = as_string_list(require(doc, "predictions", ""), "predictions");

  if (auto it = doc.find("modifier_base"); it != doc.end() && !it->is_null()) {
    suite.modifier_base = as_string(*it, "modifier_base");
  }

  const json& items = require(doc, "items", "");
  if (!items.is_array()) throw SuiteError("items", "expected an array");
  for (std::size_t i = 0; i < items.size(); ++i) {
    suite.items.push_back(parse_item(items[i], suite, "items[" + std::to_string(i) + "]"));
  }
  return suite;
}

std::string serialize_suite(const TestSuite& suite) {
  ordered_json doc;
  doc["name"] = suite.name;
  doc["circuit"] = std::string(circuit_label(suite.circuit));
  doc["regions"] = suite.region_names;
  doc["conditions"] = suite.condition_names;
  doc["predictions"] = suite.predictions;
  doc["modifier_base"] = suite.modifier_base ? ordered_json(*suite.modifier_base) : ordered_json(nullptr);
  ordered_json items = ordered_json::array();
  for (const Item& item : suite.items) {
    ordered_json content = ordered_json::object();
    // declared order first, then anything undeclared so nothing is dropped
    auto emit_condition = [&](const std::string& cond, const std::map<std::string, std::string>& texts) {
      ordered_json regions = ordered_json::object();
      for (const auto& r : suite.region_names) {
        if (auto it = texts.find(r); it != texts.end()) regions[r] = it->second;
      }
      for (const auto& [r, t] : texts) {
        if (!regions.contains(r)) regions[r] = t;
      }
      content[cond] = std::move(regions);
    };
    for (const auto& cond : suite.condition_names) {
      if (auto it = item.content.find(cond); it != item.content.end()) emit_condition(cond, it->second);
    }
    for (const auto& [cond, texts] : item.content) {
      if (!content.contains(cond)) emit_condition(cond, texts);
    }
    items.push_back(ordered_json{{"item_number", item.item_number}, {"content", std::move(content)}});
  }
  doc["items"] = std::move(items);
  return doc.dump(2) + "\n";
}

std::vector<SuiteDiagnostic> validate_suite(const TestSuite& suite) {
  std::vector<SuiteDiagnostic> out;
  auto error = [&](DiagnosticLocation loc, std::string msg) {
    loc.suite = suite.name;
    out.push_back({Severity::Error, std::move(loc), std::move(msg)});
  };
  auto warning = [&](DiagnosticLocation loc, std::string msg) {
    loc.suite = suite.name;
    out.push_back({Severity::Warning, std::move(loc), std::move(msg)});
  };

  if (suite.name.empty()) error({}, "suite name is empty");
  if (suite.region_names.empty()) error({}, "no regions declared");
  if (suite.condition_names.empty()) error({}, "no conditions declared");
  if (suite.predictions.empty()) error({}, "no predictions declared");
  if (suite.items.empty()) error({}, "no items");
  if (suite.modifier_base && *suite.modifier_base == suite.name) error({}, "modifier_base names the suite itself");

  std::set<std::string> seen;
  for (const auto& r : suite.region_names) {
    if (r.empty()) error({}, "empty region name");
    if (!seen.insert(r).second) error({.region = r}, "duplicate region name");
  }
  seen.clear();
  for (const auto& c : suite.condition_names) {
    if (c.empty()) error({}, "empty condition name");
    if (!seen.insert(c).second) error({.condition = c}, "duplicate condition name");
  }

  std::set<int> numbers;
  for (const Item& item : suite.items) {
    if (item.item_number <= 0) error({.item = item.item_number}, "item_number must be positive");
    if (!numbers.insert(item.item_number).second) error({.item = item.item_number}, "duplicate item_number");
    for (const auto& cond : suite.condition_names) {
      auto it = item.content.find(cond);
      if (it == item.content.end()) {
        error({.item = item.item_number, .condition = cond}, "no text for condition");
        continue;
      }
      for (const auto& region : suite.region_names) {
        auto rt = it->second.find(region);
        if (rt == it->second.end()) {
          error({.item = item.item_number, .condition = cond, .region = region}, "missing region text");
        } else if (!well_spaced(rt->second)) {
          error({.item = item.item_number, .condition = cond, .region = region},
                "region text has leading/trailing or repeated whitespace");
        }
      }
    }
    for (const auto& [cond, texts] : item.content) {
      if (std::find(suite.condition_names.begin(), suite.condition_names.end(), cond) == suite.condition_names.end()) {
        error({.item = item.item_number, .condition = cond}, "undeclared condition in item content");
      }
      for (const auto& [region, _] : texts) {
        if (std::find(suite.region_names.begin(), suite.region_names.end(), region) == suite.region_names.end()) {
          error({.item = item.item_number, .condition = cond, .region = region}, "undeclared region in item content");
        }
      }
    }
  }

  const std::set<std::string> conds(suite.condition_names.begin(), suite.condition_names.end());
  const std::set<std::string> regions(suite.region_names.begin(), suite.region_names.end());
  for (std::size_t pi = 0; pi < suite.predictions.size(); ++pi) {
    const std::string where = "prediction " + std::to_string(pi + 1);
    std::optional<Prediction> pred;
    try {
      pred = Prediction::parse(suite.predictions[pi]);
    } catch (const PredictionError& e) {
      error({}, where + ": " + e.what());
      continue;
    }
    for (const Term& t : pred->terms()) {
      bool declared = true;
      if (!conds.contains(t.condition)) {
        error({.condition = t.condition}, where + " references undeclared condition '" + t.condition + "'");
        declared = false;
      }
      if (!regions.contains(t.region)) {
        error({.region = t.region}, where + " references undeclared region '" + t.region + "'");
        declared = false;
      }
      if (!declared) continue;
      std::vector<int> empty_items;
      for (const Item& item : suite.items) {
        auto c = item.content.find(t.condition);
        if (c == item.content.end()) continue;
        auto r = c->second.find(t.region);
        if (r != c->second.end() && r->second.empty()) empty_items.push_back(item.item_number);
      }
      if (!empty_items.empty()) {
        std::string list;
        for (int n : empty_items) list += (list.empty() ? "" : ", ") + std::to_string(n);
        warning({.item = empty_items.front(), .condition = t.condition, .region = t.region},
                where + " measures a region that is empty in item(s) " + list +
                    "; evaluation of those items will fail");
      }
    }
  }
  return out;
}

bool has_errors(const std::vector<SuiteDiagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const SuiteDiagnostic& d) { return d.severity == Severity::Error; });
}

TestSuite load_suite_file(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_file(file);
  } catch (const Error& e) {
    throw SuiteError(file.string(), e.what());
  }
  try {
    return parse_suite(text);
  } catch (const SuiteError& e) {
    throw SuiteError(file.string() + (e.path().empty() ? "" : ":" + e.path()),
                     std::string(e.what()).substr(e.path().empty() ? 0 : e.path().size() + 2));
  }
}

std::vector<TestSuite> load_suite_set(const std::filesystem::path& directory) {
  std::error_code ec;
  if (!std::filesystem::is_directory(directory, ec)) {
    throw SuiteError(directory.string(), "not a readable directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    const std::string fname = entry.path().filename().string();
    if (entry.is_regular_file() && fname.size() > 11 && fname.ends_with(".suite.json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  std::vector<std::pair<TestSuite, std::filesystem::path>> loaded;
  for (const auto& f : files) loaded.emplace_back(load_suite_file(f), f);
  std::sort(loaded.begin(), loaded.end(), [](const auto& a, const auto& b) {
    return a.first.name != b.first.name ? a.first.name < b.first.name : a.second < b.second;
  });
  for (std::size_t i = 1; i < loaded.size(); ++i) {
    if (loaded[i].first.name == loaded[i - 1].first.name) {
      throw SuiteError(loaded[i].second.string(), "duplicate suite name '" + loaded[i].first.name +
                                                      "' (also in " + loaded[i - 1].second.string() + ")");
    }
  }
  std::vector<TestSuite> out;
  out.reserve(loaded.size());
  for (auto& [s, _] : loaded) out.push_back(std::move(s));
  return out;
}

}  // namespace sg
