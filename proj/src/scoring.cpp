#include "sgeval/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "sgeval/error.hpp"
#include "sgeval/io.hpp"
#include "sgeval/rng.hpp"

namespace sg {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_cell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

const SuiteResult* find_result(std::span<const SuiteResult> results, std::string_view name) {
  for (const auto& r : results) {
    if (r.suite == name) return &r;
  }
  return nullptr;
}

std::vector<SuiteResult> with_suite_metadata(std::span<const SuiteResult> results, std::span<const TestSuite> suites) {
  std::vector<SuiteResult> out(results.begin(), results.end());
  for (auto& r : out) {
    for (const auto& s : suites) {
      if (s.name == r.suite) {
        r.circuit = s.circuit;
        r.modifier_base = s.modifier_base;
      }
    }
  }
  return out;
}

std::vector<SuiteResult> results_of(const EvaluationReport& run) {
  std::vector<SuiteResult> out;
  for (const auto& s : run.suites) out.push_back(s.result);
  return out;
}

ChanceMethod method_from_name(std::string_view s) {
  if (s == chance_method_name(ChanceMethod::Enumeration)) return ChanceMethod::Enumeration;
  if (s == chance_method_name(ChanceMethod::MonteCarlo)) return ChanceMethod::MonteCarlo;
  throw Error("report: unknown chance method '" + std::string(s) + "'");
}

}  // namespace

SuiteResult score_suite(const TestSuite& suite, const SurprisalTable& table, const std::string& model) {
  std::vector<Prediction> preds;
  for (const auto& src : suite.predictions) preds.push_back(Prediction::parse(src));
  SuiteResult r;
  r.suite = suite.name;
  r.model = model;
  r.circuit = suite.circuit;
  r.modifier_base = suite.modifier_base;
  std::size_t passed = 0;
  for (const Item& item : suite.items) {
    bool ok = true;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      try {
        ok = evaluate_prediction(preds[i], item.item_number, table) && ok;
      } catch (const EvaluationError& e) {
        throw EvaluationError(suite.name + " item " + std::to_string(item.item_number) + " prediction " +
                              std::to_string(i + 1) + ": " + e.what());
      }
    }
    r.item_results[item.item_number] = ok;
    passed += ok ? 1 : 0;
  }
  r.accuracy = suite.items.empty() ? 0.0 : static_cast<double>(passed) / static_cast<double>(suite.items.size());
  return r;
}

double sg_score(std::span<const SuiteResult> results) {
  if (results.empty()) throw Error("SG score needs at least one suite");
  std::set<std::string> seen;
  double total = 0.0;
  for (const auto& r : results) {
    if (!seen.insert(r.suite).second) throw Error("duplicate suite '" + r.suite + "' in SG score");
    total += r.accuracy;
  }
  return total / static_cast<double>(results.size());
}

std::map<Circuit, double> circuit_scores(std::span<const SuiteResult> results) {
  std::map<Circuit, std::pair<double, std::size_t>> acc;
  for (const auto& r : results) {
    auto& [sum, n] = acc[r.circuit];
    sum += r.accuracy;
    ++n;
  }
  std::map<Circuit, double> out;
  for (const auto& [c, sn] : acc) out[c] = sn.first / static_cast<double>(sn.second);
  return out;
}

std::map<Circuit, double> circuit_scores(std::span<const SuiteResult> results, std::span<const TestSuite> suites) {
  return circuit_scores(with_suite_metadata(results, suites));
}

std::vector<StabilityRow> modifier_stability(std::span<const SuiteResult> results) {
  std::vector<StabilityRow> out;
  for (const auto& r : results) {
    if (!r.modifier_base) continue;
    const SuiteResult* base = find_result(results, *r.modifier_base);
    if (!base) throw Error("suite '" + r.suite + "' names modifier_base '" + *r.modifier_base + "' which is not present");
    out.push_back({base->suite, r.suite, base->accuracy, r.accuracy, r.accuracy - base->accuracy});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.modified < b.modified; });
  return out;
}

std::vector<StabilityRow> modifier_stability(std::span<const SuiteResult> results, std::span<const TestSuite> suites) {
  return modifier_stability(with_suite_metadata(results, suites));
}

Interval bootstrap_ci(std::span<const double> values, int B, std::uint64_t seed, double level) {
  if (values.empty()) throw std::invalid_argument("bootstrap_ci: no values");
  if (B < 100) throw std::invalid_argument("bootstrap_ci: B must be at least 100");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level must be in (0, 1)");
  Engine engine(seed);
  const std::size_t n = values.size();
  std::vector<double> means(static_cast<std::size_t>(B));
  for (auto& m : means) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += values[uniform_index(engine, n)];
    m = sum / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  const auto lo = static_cast<std::size_t>(std::floor(static_cast<double>(B) * (1.0 - level) / 2.0 + 1e-9));
  return {means[lo], means[static_cast<std::size_t>(B) - 1 - lo]};
}

EvaluationReport make_report(const std::string& model, std::span<const TestSuite> suites,
                             std::span<const SuiteResult> results, const ReportOptions& options,
                             std::optional<double> perplexity, std::map<std::string, std::string> labels) {
  EvaluationReport rep;
  rep.model = model;
  rep.labels = std::move(labels);
  rep.seed = options.seed;
  rep.bootstrap = options.bootstrap;
  rep.perplexity = perplexity;
  for (const auto& r : with_suite_metadata(results, suites)) {
    SuiteSummary s;
    s.result = r;
    s.result.model = model;
    const auto it = std::find_if(suites.begin(), suites.end(), [&](const TestSuite& t) { return t.name == r.suite; });
    if (it == suites.end()) throw Error("result for unknown suite '" + r.suite + "'");
    std::vector<Prediction> preds;
    for (const auto& src : it->predictions) preds.push_back(Prediction::parse(src));
    s.chance = chance_accuracy(preds, options.chance_samples, derive_seed(options.seed, "chance:" + r.suite));
    std::vector<double> passes;
    for (const auto& [_, ok] : r.item_results) passes.push_back(ok ? 1.0 : 0.0);
    if (!passes.empty()) s.ci = bootstrap_ci(passes, options.bootstrap, derive_seed(options.seed, "items:" + r.suite));
    rep.suites.push_back(std::move(s));
  }
  std::sort(rep.suites.begin(), rep.suites.end(),
            [](const auto& a, const auto& b) { return a.result.suite < b.result.suite; });
  const auto res = results_of(rep);
  rep.sg_score = sg_score(res);
  std::vector<double> accs;
  for (const auto& r : res) accs.push_back(r.accuracy);
  rep.sg_ci = bootstrap_ci(accs, options.bootstrap, derive_seed(options.seed, "suites"));
  rep.circuits = circuit_scores(res);
  return rep;
}

DeltaReport score_deltas(std::span<const EvaluationReport> runs, std::span<const std::string> group_by) {
  if (runs.size() < 2) throw Error("deltas need at least two runs");
  std::set<std::string> models;
  for (const auto& run : runs) {
    if (!models.insert(run.model).second) throw Error("duplicate model label '" + run.model + "'");
  }
  std::vector<std::string> names;
  for (const auto& s : runs[0].suites) names.push_back(s.result.suite);
  for (const auto& run : runs) {
    std::vector<std::string> other;
    for (const auto& s : run.suites) other.push_back(s.result.suite);
    if (other != names) {
      throw Error("run '" + run.model + "' covers a different suite set than run '" + runs[0].model + "'");
    }
  }

  DeltaReport out;
  for (std::size_t si = 0; si < names.size(); ++si) {
    double mean = 0.0;
    for (const auto& run : runs) mean += run.suites[si].result.accuracy;
    mean /= static_cast<double>(runs.size());
    for (const auto& run : runs) {
      const double a = run.suites[si].result.accuracy;
      out.rows.push_back({run.model, names[si], a, a - mean});
    }
  }

  for (const auto& key : group_by) {
    std::map<std::string, std::vector<std::size_t>> members;
    for (std::size_t r = 0; r < runs.size(); ++r) {
      auto it = runs[r].labels.find(key);
      members[it == runs[r].labels.end() ? "" : it->second].push_back(r);
    }
    for (const auto& [value, idx] : members) {
      double overall = 0.0;
      for (std::size_t si = 0; si < names.size(); ++si) {
        double sum = 0.0;
        for (std::size_t r : idx) sum += out.rows[si * runs.size() + r].delta;
        const double m = sum / static_cast<double>(idx.size());
        overall += m;
        out.groups.push_back({key, value, names[si], idx.size(), m});
      }
      out.groups.push_back({key, value, "*", idx.size(), overall / static_cast<double>(names.size())});
    }
  }
  return out;
}

std::string report_json(std::span<const EvaluationReport> runs, const DeltaReport* deltas) {
  ordered_json doc;
  doc["format"] = "sgeval-report/1";
  ordered_json jruns = ordered_json::array();
  for (const auto& run : runs) {
    ordered_json j;
    j["model"] = run.model;
    ordered_json labels = ordered_json::object();
    for (const auto& [k, v] : run.labels) labels[k] = v;
    j["labels"] = std::move(labels);
    j["seed"] = run.seed;
    j["bootstrap"] = run.bootstrap;
    j["sg_score"] = run.sg_score;
    j["sg_ci"] = {run.sg_ci.low, run.sg_ci.high};
    j["perplexity"] = run.perplexity ? ordered_json(*run.perplexity) : ordered_json(nullptr);
    ordered_json circuits = ordered_json::object();
    for (const auto& [c, v] : run.circuits) circuits[std::string(circuit_label(c))] = v;
    j["circuits"] = std::move(circuits);
    ordered_json suites = ordered_json::array();
    for (const auto& s : run.suites) {
      ordered_json js;
      js["suite"] = s.result.suite;
      js["circuit"] = std::string(circuit_label(s.result.circuit));
      js["modifier_base"] = s.result.modifier_base ? ordered_json(*s.result.modifier_base) : ordered_json(nullptr);
      js["n_items"] = s.result.n_items();
      js["accuracy"] = s.result.accuracy;
      js["ci"] = {s.ci.low, s.ci.high};
      js["chance"] = ordered_json{{"mean", s.chance.mean},
                                  {"std_error", s.chance.std_error},
                                  {"method", std::string(chance_method_name(s.chance.method))},
                                  {"samples", s.chance.samples},
                                  {"seed", s.chance.seed}};
      ordered_json items = ordered_json::object();
      for (const auto& [n, ok] : s.result.item_results) items[std::to_string(n)] = ok;
      js["items"] = std::move(items);
      suites.push_back(std::move(js));
    }
    j["suites"] = std::move(suites);
    std::vector<SuiteResult> res = results_of(run);
    ordered_json stab = ordered_json::array();
    for (const auto& row : modifier_stability(res)) {
      stab.push_back(ordered_json{{"base", row.base},
                                  {"modified", row.modified},
                                  {"base_accuracy", row.base_accuracy},
                                  {"modified_accuracy", row.modified_accuracy},
                                  {"difference", row.difference}});
    }
    j["stability"] = std::move(stab);
    jruns.push_back(std::move(j));
  }
  doc["runs"] = std::move(jruns);
  if (deltas) {
    ordered_json rows = ordered_json::array();
    for (const auto& r : deltas->rows) {
      rows.push_back(ordered_json{{"model", r.model}, {"suite", r.suite}, {"accuracy", r.accuracy}, {"delta", r.delta}});
    }
    doc["deltas"] = std::move(rows);
    ordered_json groups = ordered_json::array();
    for (const auto& g : deltas->groups) {
      groups.push_back(ordered_json{{"key", g.key},
                                    {"value", g.value},
                                    {"suite", g.suite},
                                    {"models", g.models},
                                    {"mean_delta", g.mean_delta}});
    }
    doc["delta_groups"] = std::move(groups);
  }
  return doc.dump(2) + "\n";
}

std::vector<EvaluationReport> parse_runs(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("report: malformed JSON: ") + e.what());
  }
  std::vector<EvaluationReport> out;
  try {
    if (doc.at("format").get<std::string>() != "sgeval-report/1") throw Error("report: unsupported format");
    for (const json& j : doc.at("runs")) {
      EvaluationReport run;
      run.model = j.at("model").get<std::string>();
      for (const auto& [k, v] : j.at("labels").items()) run.labels[k] = v.get<std::string>();
      run.seed = j.at("seed").get<std::uint64_t>();
      run.bootstrap = j.at("bootstrap").get<int>();
      run.sg_score = j.at("sg_score").get<double>();
      run.sg_ci = {j.at("sg_ci").at(0).get<double>(), j.at("sg_ci").at(1).get<double>()};
      if (!j.at("perplexity").is_null()) run.perplexity = j.at("perplexity").get<double>();
      for (const json& js : j.at("suites")) {
        SuiteSummary s;
        s.result.suite = js.at("suite").get<std::string>();
        s.result.model = run.model;
        const std::string label = js.at("circuit").get<std::string>();
        auto c = circuit_from_label(label);
        if (!c) throw Error("report: unknown circuit '" + label + "'");
        s.result.circuit = *c;
        if (!js.at("modifier_base").is_null()) s.result.modifier_base = js.at("modifier_base").get<std::string>();
        s.result.accuracy = js.at("accuracy").get<double>();
        s.ci = {js.at("ci").at(0).get<double>(), js.at("ci").at(1).get<double>()};
        const json& ch = js.at("chance");
        s.chance.mean = ch.at("mean").get<double>();
        s.chance.std_error = ch.at("std_error").get<double>();
        s.chance.method = method_from_name(ch.at("method").get<std::string>());
        s.chance.samples = ch.at("samples").get<std::uint64_t>();
        s.chance.seed = ch.at("seed").get<std::uint64_t>();
        for (const auto& [k, v] : js.at("items").items()) s.result.item_results[std::stoi(k)] = v.get<bool>();
        run.suites.push_back(std::move(s));
      }
      run.circuits = circuit_scores(results_of(run));
      out.push_back(std::move(run));
    }
  } catch (const json::exception& e) {
    throw Error(std::string("report: ") + e.what());
  }
  return out;
}

std::string suites_csv(std::span<const EvaluationReport> runs) {
  std::string out = "model,suite,circuit,n_items,accuracy,chance,ci_low,ci_high\n";
  for (const auto& run : runs) {
    for (const auto& s : run.suites) {
      out += csv_field(run.model) + "," + csv_field(s.result.suite) + "," +
             csv_field(circuit_label(s.result.circuit)) + "," + std::to_string(s.result.n_items()) + "," +
             fixed(s.result.accuracy) + "," + fixed(s.chance.mean) + "," + fixed(s.ci.low) + "," + fixed(s.ci.high) +
             "\n";
    }
  }
  return out;
}

std::string sg_vs_perplexity_csv(std::span<const EvaluationReport> runs) {
  std::string out = "model,sg_score,ci_low,ci_high,perplexity\n";
  for (const auto& run : runs) {
    out += csv_field(run.model) + "," + fixed(run.sg_score) + "," + fixed(run.sg_ci.low) + "," +
           fixed(run.sg_ci.high) + "," + (run.perplexity ? fixed(*run.perplexity, 4) : std::string()) + "\n";
  }
  return out;
}

std::string deltas_csv(const DeltaReport& deltas) {
  std::string out = "model,suite,accuracy,delta\n";
  for (const auto& r : deltas.rows) {
    out += csv_field(r.model) + "," + csv_field(r.suite) + "," + fixed(r.accuracy) + "," + fixed(r.delta) + "\n";
  }
  return out;
}

std::string delta_groups_csv(const DeltaReport& deltas) {
  std::string out = "group,value,suite,models,mean_delta\n";
  for (const auto& g : deltas.groups) {
    out += csv_field(g.key) + "," + csv_field(g.value) + "," + csv_field(g.suite) + "," + std::to_string(g.models) +
           "," + fixed(g.mean_delta) + "\n";
  }
  return out;
}

std::string circuits_csv(std::span<const EvaluationReport> runs) {
  std::string out = "model,circuit,n_suites,score\n";
  for (const auto& run : runs) {
    std::map<Circuit, std::size_t> counts;
    for (const auto& s : run.suites) ++counts[s.result.circuit];
    for (const auto& [c, v] : run.circuits) {
      out += csv_field(run.model) + "," + csv_field(circuit_label(c)) + "," + std::to_string(counts[c]) + "," +
             fixed(v) + "\n";
    }
  }
  return out;
}

std::string stability_csv(std::span<const EvaluationReport> runs) {
  std::string out = "model,base,modified,base_accuracy,modified_accuracy,difference\n";
  for (const auto& run : runs) {
    for (const auto& row : modifier_stability(results_of(run))) {
      out += csv_field(run.model) + "," + csv_field(row.base) + "," + csv_field(row.modified) + "," +
             fixed(row.base_accuracy) + "," + fixed(row.modified_accuracy) + "," + fixed(row.difference) + "\n";
    }
  }
  return out;
}

std::string summary_markdown(std::span<const EvaluationReport> runs, const DeltaReport* deltas) {
  std::string out = "# Syntactic generalization report\n\n";
  out += "| model | SG score | 95% CI | perplexity | suites |\n|---|---|---|---|---|\n";
  for (const auto& run : runs) {
    out += "| " + md_cell(run.model) + " | " + fixed(run.sg_score, 3) + " | [" + fixed(run.sg_ci.low, 3) + ", " +
           fixed(run.sg_ci.high, 3) + "] | " + (run.perplexity ? fixed(*run.perplexity, 2) : std::string("n/a")) +
           " | " + std::to_string(run.suites.size()) + " |\n";
  }

  out += "\n## Circuits\n\n| model |";
  std::set<Circuit> circuits;
  for (const auto& run : runs) {
    for (const auto& [c, _] : run.circuits) circuits.insert(c);
  }
  for (Circuit c : circuits) out += " " + std::string(circuit_label(c)) + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < circuits.size(); ++i) out += "---|";
  out += "\n";
  for (const auto& run : runs) {
    out += "| " + md_cell(run.model) + " |";
    for (Circuit c : circuits) {
      auto it = run.circuits.find(c);
      out += " " + (it == run.circuits.end() ? std::string("n/a") : fixed(it->second, 3)) + " |";
    }
    out += "\n";
  }

  out += "\n## Suites\n\n| model | suite | circuit | items | accuracy | chance | 95% CI |\n|---|---|---|---|---|---|---|\n";
  for (const auto& run : runs) {
    for (const auto& s : run.suites) {
      out += "| " + md_cell(run.model) + " | " + md_cell(s.result.suite) + " | " +
             std::string(circuit_label(s.result.circuit)) + " | " + std::to_string(s.result.n_items()) + " | " +
             fixed(s.result.accuracy, 3) + " | " + fixed(s.chance.mean, 3) + " | [" + fixed(s.ci.low, 3) + ", " +
             fixed(s.ci.high, 3) + "] |\n";
    }
  }

  bool any_pairs = false;
  std::string stab = "\n## Modifier stability\n\n| model | base | modified | base acc. | modified acc. | difference |\n|---|---|---|---|---|---|\n";
  for (const auto& run : runs) {
    for (const auto& row : modifier_stability(results_of(run))) {
      any_pairs = true;
      stab += "| " + md_cell(run.model) + " | " + md_cell(row.base) + " | " + md_cell(row.modified) + " | " +
              fixed(row.base_accuracy, 3) + " | " + fixed(row.modified_accuracy, 3) + " | " +
              fixed(row.difference, 3) + " |\n";
    }
  }
  if (any_pairs) out += stab;

  if (deltas) {
    out += "\n## Deltas from the cross-model mean\n\n| suite | model | accuracy | delta |\n|---|---|---|---|\n";
    for (const auto& r : deltas->rows) {
      out += "| " + md_cell(r.suite) + " | " + md_cell(r.model) + " | " + fixed(r.accuracy, 3) + " | " +
             fixed(r.delta, 3) + " |\n";
    }
    if (!deltas->groups.empty()) {
      out += "\n| group | value | mean delta (all suites) | models |\n|---|---|---|---|\n";
      for (const auto& g : deltas->groups) {
        if (g.suite != "*") continue;
        out += "| " + md_cell(g.key) + " | " + md_cell(g.value) + " | " + fixed(g.mean_delta, 3) + " | " +
               std::to_string(g.models) + " |\n";
      }
    }
  }
  return out;
}

void emit_report(std::span<const EvaluationReport> runs, const DeltaReport* deltas, const std::filesystem::path& dir,
                 bool analysis_tables) {
  std::filesystem::create_directories(dir);
  write_file(dir / "suites.csv", suites_csv(runs));
  write_file(dir / "report.json", report_json(runs, deltas));
  write_file(dir / "summary.md", summary_markdown(runs, deltas));
  write_file(dir / "sg_vs_perplexity.csv", sg_vs_perplexity_csv(runs));
  if (analysis_tables) {
    write_file(dir / "circuits.csv", circuits_csv(runs));
    write_file(dir / "stability.csv", stability_csv(runs));
  }
  if (deltas) {
    write_file(dir / "deltas.csv", deltas_csv(*deltas));
    write_file(dir / "delta_groups.csv", delta_groups_csv(*deltas));
  }
}

}  // namespace sg
