// sgeval: validate suites, train and query n-gram models, score models on
// suites, estimate chance rates and combine reports.
//
// Exit status: 0 success, 1 validation or evaluation failure, 2 usage error.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sgeval/error.hpp"
#include "sgeval/fixtures.hpp"
#include "sgeval/io.hpp"
#include "sgeval/lm_interface.hpp"
#include "sgeval/ngram.hpp"
#include "sgeval/prediction.hpp"
#include "sgeval/rng.hpp"
#include "sgeval/scoring.hpp"
#include "sgeval/suite.hpp"
#include "sgeval/token_align.hpp"

namespace fs = std::filesystem;

namespace {

// Thrown to report a failure in one pipeline stage; exit status 1.
struct StageError {
  std::string stage;
  std::string message;
};

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError{name, e.what()};
  }
}

std::vector<fs::path> suite_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename().string().ends_with(".suite.json")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// A directory without suite files of its own but with versioned
// subdirectories (fixtures/v1, fixtures/v2, ...) stands for the newest one.
fs::path resolve_suite_dir(const fs::path& dir) {
  if (!suite_files(dir).empty()) return dir;
  std::optional<std::pair<long, fs::path>> best;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (!e.is_directory() || n.size() < 2 || n[0] != 'v' ||
        !std::all_of(n.begin() + 1, n.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      continue;
    }
    const long v = std::stol(n.substr(1));
    if (!best || v > best->first) best.emplace(v, e.path());
  }
  return best ? best->second : dir;
}

std::vector<sg::TestSuite> load_suites(const std::vector<std::string>& paths) {
  std::vector<sg::TestSuite> suites;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      for (auto& s : sg::load_suite_set(resolve_suite_dir(p))) suites.push_back(std::move(s));
    } else {
      suites.push_back(sg::load_suite_file(p));
    }
  }
  std::sort(suites.begin(), suites.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (std::size_t i = 1; i < suites.size(); ++i) {
    if (suites[i].name == suites[i - 1].name) throw sg::Error("duplicate suite name '" + suites[i].name + "'");
  }
  return suites;
}

std::vector<std::vector<std::string>> read_corpus(const std::string& path, bool tokenize) {
  std::vector<std::vector<std::string>> sentences;
  for (const auto& line : sg::split_lines(sg::read_file(path))) {
    std::vector<std::string> words;
    if (tokenize) {
      for (const auto& t : sg::tokenize_words(line)) words.push_back(t.text);
    } else {
      words = sg::split_whitespace(line);
    }
    if (!words.empty()) sentences.push_back(std::move(words));
  }
  return sentences;
}

// ------------------------------------------------------------------ validate

int cmd_validate(const std::vector<std::string>& paths) {
  bool errors = false;
  std::map<std::string, std::string> seen;  // suite name -> file
  auto report = [&](const std::string& where, const std::string& severity, const std::string& msg) {
    std::cerr << severity << ": " << where << ": " << msg << "\n";
    if (severity == "error") errors = true;
  };
  for (const auto& p : paths) {
    std::vector<fs::path> files;
    std::error_code ec;
    if (fs::is_directory(p, ec)) {
      files = suite_files(resolve_suite_dir(p));
      if (files.empty()) report(p, "warning", "no *.suite.json files");
    } else if (fs::exists(p, ec)) {
      files.push_back(p);
    } else {
      report(p, "error", "no such file or directory");
      continue;
    }
    for (const auto& f : files) {
      sg::TestSuite suite;
      try {
        suite = sg::load_suite_file(f);
      } catch (const sg::Error& e) {
        report(f.string(), "error", e.what());
        continue;
      }
      if (auto [it, fresh] = seen.emplace(suite.name, f.string()); !fresh) {
        report(f.string(), "error", "suite name '" + suite.name + "' already used by " + it->second);
      }
      for (const auto& d : sg::validate_suite(suite)) {
        report(f.string(), d.severity == sg::Severity::Error ? "error" : "warning", d.to_string());
      }
    }
  }
  return errors ? 1 : 0;
}

// ------------------------------------------------------------------ ngram

struct NgramTrainArgs {
  std::string corpus, out;
  int order = 5;
  int min_count = 2;
  bool tokenize = false;
};

int cmd_ngram_train(const NgramTrainArgs& a) {
  const auto sentences = stage("read corpus", [&] { return read_corpus(a.corpus, a.tokenize); });
  const auto model = stage("train", [&] { return sg::NGramModel::train(sentences, a.order, a.min_count); });
  stage("write model", [&] {
    sg::write_file(a.out, model.to_arpa());
    return 0;
  });
  const auto& st = *model.stats();
  std::fprintf(stderr, "sentences=%llu tokens=%llu types=%llu unk_types=%llu vocabulary=%zu\n",
               static_cast<unsigned long long>(st.sentence_count), static_cast<unsigned long long>(st.token_count),
               static_cast<unsigned long long>(st.type_count), static_cast<unsigned long long>(st.unk_type_count),
               model.vocabulary_size());
  return 0;
}

int cmd_ngram_ppl(const std::string& model_path, const std::string& corpus, bool tokenize) {
  const auto model = stage("load model", [&] { return sg::NGramModel::from_arpa(sg::read_file(model_path)); });
  const auto sentences = stage("read corpus", [&] { return read_corpus(corpus, tokenize); });
  const double ppl = stage("perplexity", [&] { return model.perplexity(sentences); });
  std::printf("%.4f\n", ppl);
  return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::vector<std::string> suites;
  std::vector<std::string> models;
  std::vector<std::string> labels;
  std::vector<std::string> tags;
  std::string out = "report";
  std::string ppl_corpus;
  bool tokenize = false;
  bool analysis = false;
  std::uint64_t seed = 0;
  int bootstrap = 2000;
  std::uint64_t chance_samples = 100000;
  int jobs = 1;
};

std::map<std::string, std::string> parse_tags(const std::vector<std::string>& tags) {
  std::map<std::string, std::string> out;
  for (const auto& t : tags) {
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--tag", "expected KEY=VALUE, got '" + t + "'");
    out[t.substr(0, eq)] = t.substr(eq + 1);
  }
  return out;
}

int cmd_eval(const EvalArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.models.size()) {
    throw CLI::ValidationError("--label", "give one label per --model");
  }
  std::vector<std::string> labels = a.labels;
  if (labels.empty()) {
    for (const auto& m : a.models) labels.push_back(m);
  }
  if (std::set<std::string>(labels.begin(), labels.end()).size() != labels.size()) {
    throw CLI::ValidationError("--label", "labels must be unique");
  }
  const auto tags = parse_tags(a.tags);
  std::vector<sg::ModelHandle> handles;
  for (const auto& m : a.models) {
    try {
      handles.push_back(sg::ModelHandle::parse(m));
    } catch (const sg::Error& e) {
      throw CLI::ValidationError("--model", e.what());
    }
  }

  const auto suites = stage("load suites", [&] { return load_suites(a.suites); });
  stage("validate", [&] {
    for (const auto& s : suites) {
      for (const auto& d : sg::validate_suite(s)) {
        if (d.severity == sg::Severity::Error) throw sg::Error(d.to_string());
      }
    }
    if (suites.empty()) throw sg::Error("no suites found");
    return 0;
  });
  const auto requests = sg::make_requests(suites);
  std::optional<std::vector<std::vector<std::string>>> ppl_sentences;
  if (!a.ppl_corpus.empty()) {
    ppl_sentences = stage("read corpus", [&] { return read_corpus(a.ppl_corpus, a.tokenize); });
  }

  sg::ReportOptions options{.bootstrap = a.bootstrap, .seed = a.seed, .chance_samples = a.chance_samples};
  std::vector<sg::EvaluationReport> runs;
  for (std::size_t m = 0; m < handles.size(); ++m) {
    const auto records = stage("score " + labels[m], [&] {
      return sg::score(handles[m], requests, sg::ScoreOptions{.jobs = a.jobs});
    });
    const auto tables = stage("align " + labels[m], [&] { return sg::build_surprisal_tables(records, suites); });
    const auto results = stage("evaluate " + labels[m], [&] {
      std::vector<sg::SuiteResult> out;
      for (const auto& s : suites) out.push_back(sg::score_suite(s, tables.at(s.name), labels[m]));
      return out;
    });
    std::optional<double> ppl;
    if (ppl_sentences && handles[m].kind == sg::ModelKind::NGram) {
      ppl = stage("perplexity " + labels[m], [&] {
        return sg::NGramModel::from_arpa(sg::read_file(handles[m].locator)).perplexity(*ppl_sentences);
      });
    }
    runs.push_back(stage("report " + labels[m], [&] {
      return sg::make_report(labels[m], suites, results, options, ppl, tags);
    }));
  }
  stage("write report", [&] {
    sg::emit_report(runs, nullptr, a.out, a.analysis);
    return 0;
  });
  for (const auto& r : runs) std::printf("%s\tsg_score=%.6f\n", r.model.c_str(), r.sg_score);
  return 0;
}

// ------------------------------------------------------------------ chance

int cmd_chance(const std::vector<std::string>& paths, std::uint64_t samples, std::uint64_t seed) {
  const auto suites = stage("load suites", [&] { return load_suites(paths); });
  std::printf("suite\tprediction\tmethod\tmean\tstderr\tsamples\n");
  auto row = [](const std::string& suite, const std::string& which, const sg::ChanceEstimate& c) {
    std::printf("%s\t%s\t%s\t%.4f\t%.4f\t%llu\n", suite.c_str(), which.c_str(),
                std::string(sg::chance_method_name(c.method)).c_str(), c.mean, c.std_error,
                static_cast<unsigned long long>(c.samples));
  };
  stage("chance", [&] {
    for (const auto& s : suites) {
      std::vector<sg::Prediction> preds;
      for (const auto& src : s.predictions) preds.push_back(sg::Prediction::parse(src));
      const std::uint64_t suite_seed = sg::derive_seed(seed, "chance:" + s.name);
      for (std::size_t i = 0; i < preds.size(); ++i) {
        row(s.name, std::to_string(i + 1), sg::chance_accuracy(preds[i], samples, suite_seed));
      }
      if (preds.size() > 1) row(s.name, "all", sg::chance_accuracy(preds, samples, suite_seed));
    }
    return 0;
  });
  return 0;
}

// ------------------------------------------------------------------ report

int cmd_report(const std::vector<std::string>& files, const std::vector<std::string>& group_by, const std::string& out) {
  const auto runs = stage("load runs", [&] {
    std::vector<sg::EvaluationReport> all;
    for (const auto& f : files) {
      fs::path p = f;
      if (fs::is_directory(p)) p /= "report.json";
      try {
        for (auto& r : sg::parse_runs(sg::read_file(p))) all.push_back(std::move(r));
      } catch (const sg::Error& e) {
        throw sg::Error(p.string() + ": " + e.what());
      }
    }
    std::set<std::string> names;
    for (const auto& r : all) {
      if (!names.insert(r.model).second) throw sg::Error("model label '" + r.model + "' appears in more than one run");
    }
    return all;
  });
  std::optional<sg::DeltaReport> deltas;
  if (runs.size() >= 2) deltas = stage("deltas", [&] { return sg::score_deltas(runs, group_by); });
  stage("write report", [&] {
    sg::emit_report(runs, deltas ? &*deltas : nullptr, out, true);
    return 0;
  });
  if (!deltas) std::cerr << "note: one run, no deltas written\n";
  return 0;
}

// ------------------------------------------------------------------ requests, fixtures

int cmd_requests(const std::vector<std::string>& paths, const std::string& out) {
  const auto suites = stage("load suites", [&] { return load_suites(paths); });
  const std::string text = sg::write_requests(suites);
  if (out.empty() || out == "-") {
    std::fwrite(text.data(), 1, text.size(), stdout);
  } else {
    stage("write requests", [&] {
      sg::write_file(out, text);
      return 0;
    });
  }
  return 0;
}

int cmd_fixtures(const std::string& templates, const std::string& out) {
  const auto suites = stage("expand templates", [&] {
    return sg::fixture_catalog(templates.empty() ? sg::default_template_dir() : fs::path(templates));
  });
  stage("write fixtures", [&] {
    for (const auto& s : suites) sg::write_file(fs::path(out) / (s.name + ".suite.json"), sg::serialize_suite(s));
    return 0;
  });
  std::printf("%zu suites written to %s\n", suites.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targeted syntactic evaluation of language models"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int jobs = 1;
  auto add_seed = [&](CLI::App* c) {
    c->add_option("--seed", seed, "Base random seed")->envname("SG_SEED")->capture_default_str();
  };
  auto add_jobs = [&](CLI::App* c) {
    c->add_option("--jobs", jobs, "Worker threads or adapter processes")->check(CLI::PositiveNumber);
  };

  std::vector<std::string> validate_paths;
  auto* validate = app.add_subcommand("validate", "Check suite files");
  validate->add_option("paths", validate_paths, "Suite files or directories")->required();

  auto* ngram = app.add_subcommand("ngram", "Kneser-Ney n-gram models");
  ngram->require_subcommand(1);
  NgramTrainArgs train_args;
  auto* train = ngram->add_subcommand("train", "Train and write an ARPA model");
  train->add_option("--corpus", train_args.corpus, "One sentence per line")->required();
  train->add_option("--out", train_args.out, "ARPA output path")->required();
  train->add_option("--order", train_args.order, "Model order")->capture_default_str()->check(CLI::Range(1, sg::NGramModel::kMaxOrder));
  train->add_option("--min-count", train_args.min_count, "Rarer words become signature classes")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_flag("--tokenize", train_args.tokenize, "Tokenize raw text instead of splitting on whitespace");
  std::string ppl_model, ppl_corpus;
  bool ppl_tokenize = false;
  auto* ppl = ngram->add_subcommand("ppl", "Perplexity of a model on a corpus");
  ppl->add_option("--model", ppl_model, "ARPA model")->required();
  ppl->add_option("--corpus", ppl_corpus, "One sentence per line")->required();
  ppl->add_flag("--tokenize", ppl_tokenize, "Tokenize raw text instead of splitting on whitespace");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score models on suites and write a report");
  eval->add_option("--suites", eval_args.suites, "Suite files or directories")->required();
  eval->add_option("--model", eval_args.models,
                   "ngram:PATH, surprisals:PATH, adapter:COMMAND, random:SEED or uniform:N")->required();
  eval->add_option("--label", eval_args.labels, "Run label, one per --model");
  eval->add_option("--tag", eval_args.tags, "Grouping metadata KEY=VALUE attached to every run");
  eval->add_option("--out", eval_args.out, "Output directory")->capture_default_str();
  eval->add_option("--ppl-corpus", eval_args.ppl_corpus, "Held-out corpus for n-gram perplexity");
  eval->add_flag("--tokenize", eval_args.tokenize, "Tokenize the perplexity corpus");
  eval->add_flag("--analysis", eval_args.analysis, "Also write circuits.csv and stability.csv");
  eval->add_option("--bootstrap", eval_args.bootstrap, "Bootstrap resamples")->capture_default_str()->check(CLI::Range(100, 1000000));
  eval->add_option("--chance-samples", eval_args.chance_samples, "Monte Carlo draws for chance rates")->capture_default_str()->check(CLI::PositiveNumber);
  add_seed(eval);
  add_jobs(eval);

  std::vector<std::string> chance_paths;
  std::uint64_t chance_samples = 100000;
  auto* chance = app.add_subcommand("chance", "Chance pass rate of each prediction");
  chance->add_option("paths", chance_paths, "Suite files or directories")->required();
  chance->add_option("--samples", chance_samples, "Monte Carlo draws")->capture_default_str()->check(CLI::PositiveNumber);
  add_seed(chance);

  std::vector<std::string> report_files, group_by;
  std::string report_out = "report";
  auto* report = app.add_subcommand("report", "Combine runs: deltas, circuits, stability");
  report->add_option("runs", report_files, "report.json files or directories holding one")->required();
  report->add_option("--group-by", group_by, "Tag keys to aggregate deltas by");
  report->add_option("--out", report_out, "Output directory")->capture_default_str();

  std::vector<std::string> request_paths;
  std::string request_out;
  auto* requests = app.add_subcommand("requests", "Write scoring requests as JSON Lines");
  requests->add_option("--suites", request_paths, "Suite files or directories")->required();
  requests->add_option("--out", request_out, "Output file (default stdout)");

  std::string tmpl_dir, fixture_out;
  auto* fixtures = app.add_subcommand("fixtures", "Expand the suite templates");
  fixtures->add_option("--templates", tmpl_dir, "Template directory");
  fixtures->add_option("--out", fixture_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*validate) return cmd_validate(validate_paths);
    if (*train) return cmd_ngram_train(train_args);
    if (*ppl) return cmd_ngram_ppl(ppl_model, ppl_corpus, ppl_tokenize);
    if (*eval) {
      eval_args.seed = seed;
      eval_args.jobs = jobs;
      return cmd_eval(eval_args);
    }
    if (*chance) return cmd_chance(chance_paths, chance_samples, seed);
    if (*report) return cmd_report(report_files, group_by, report_out);
    if (*requests) return cmd_requests(request_paths, request_out);
    if (*fixtures) return cmd_fixtures(tmpl_dir, fixture_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const StageError& e) {
    std::cerr << "error in " << e.stage << ": " << e.message << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
