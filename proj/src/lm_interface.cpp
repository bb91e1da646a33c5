#include "sgeval/lm_interface.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <csignal>
#include <cstring>
#include <thread>

#include <json.hpp>

#include "sgeval/error.hpp"
#include "sgeval/io.hpp"
#include "sgeval/rng.hpp"

namespace sg {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

const json& field(const json& obj, const char* key, std::string_view what) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InterfaceError(std::string(what) + ": missing field '" + key + "'");
  return *it;
}

std::string string_field(const json& obj, const char* key, std::string_view what) {
  const json& v = field(obj, key, what);
  if (!v.is_string()) throw InterfaceError(std::string(what) + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

std::size_t offset_field(const json& obj, const char* key, std::string_view what) {
  const json& v = field(obj, key, what);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw InterfaceError(std::string(what) + ": field '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

int item_field(const json& obj, std::string_view what) {
  const json& v = field(obj, "item", what);
  if (!v.is_number_integer()) throw InterfaceError(std::string(what) + ": field 'item' must be an integer");
  return v.get<int>();
}

json parse_object(std::string_view line, std::string_view what) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::parse_error& e) {
    throw InterfaceError(std::string(what) + ": malformed JSON: " + e.what());
  }
  if (!doc.is_object()) throw InterfaceError(std::string(what) + ": expected a JSON object");
  return doc;
}

// Runs `fn(begin, end)` over contiguous chunks of [0, n) on up to `jobs` threads.
template <class Fn>
void parallel_chunks(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n));
  if (workers <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = n * w / workers, e = n * (w + 1) / workers;
    threads.emplace_back([&, w, b, e] {
      try {
        fn(b, e);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

TokenScoreRecord record_skeleton(const ScoringRequest& r) { return {r.suite, r.item, r.condition, {}}; }

void write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::write(fd, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      return;  // reader went away; the exit status reports the failure
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::vector<TokenScoreRecord> run_adapter_once(const std::string& command, std::span<const ScoringRequest> requests) {
  std::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2], out_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw InterfaceError("adapter: pipe failed: " + std::string(std::strerror(errno)));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw InterfaceError("adapter: pipe failed: " + std::string(std::strerror(errno)));
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw InterfaceError("adapter: fork failed: " + std::string(std::strerror(errno)));
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);

  const std::string payload = serialize_requests(requests);
  std::thread writer([fd = in_pipe[1], &payload] {
    write_all(fd, payload);
    ::close(fd);
  });

  std::string output;
  char buf[1 << 16];
  for (;;) {
    const ssize_t n = ::read(out_pipe[0], buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      break;
    }
    if (n == 0) break;
    output.append(buf, static_cast<std::size_t>(n));
  }
  ::close(out_pipe[0]);
  writer.join();

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFSIGNALED(status)) {
    throw InterfaceError("adapter '" + command + "' killed by signal " + std::to_string(WTERMSIG(status)));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw InterfaceError("adapter '" + command + "' exited with status " + std::to_string(WEXITSTATUS(status)));
  }
  auto records = parse_records(output);
  if (records.size() != requests.size()) {
    throw InterfaceError("adapter '" + command + "' returned " + std::to_string(records.size()) + " records for " +
                         std::to_string(requests.size()) + " requests");
  }
  return records;
}

}  // namespace

std::string RequestKey::to_string() const { return suite + " item " + std::to_string(item) + " condition " + condition; }

std::vector<ScoringRequest> make_requests(std::span<const TestSuite> suites) {
  std::vector<ScoringRequest> out;
  for (const TestSuite& s : suites) {
    for (const Item& item : s.items) {
      for (const auto& cond : s.condition_names) {
        JoinedSentence j = join_regions(s, item, cond);
        out.push_back({s.name, item.item_number, cond, std::move(j.sentence), std::move(j.regions)});
      }
    }
  }
  return out;
}

std::string request_line(const ScoringRequest& r) {
  ordered_json doc;
  doc["suite"] = r.suite;
  doc["item"] = r.item;
  doc["condition"] = r.condition;
  doc["sentence"] = r.sentence;
  ordered_json regions = ordered_json::array();
  for (const auto& reg : r.regions) {
    regions.push_back(ordered_json{{"name", reg.name}, {"start", reg.span.start}, {"end", reg.span.end}});
  }
  doc["regions"] = std::move(regions);
  return doc.dump();
}

std::string record_line(const TokenScoreRecord& r) {
  ordered_json doc;
  doc["suite"] = r.suite;
  doc["item"] = r.item;
  doc["condition"] = r.condition;
  ordered_json tokens = ordered_json::array();
  for (const auto& t : r.tokens) {
    tokens.push_back(
        ordered_json{{"text", t.text}, {"start", t.start}, {"end", t.end}, {"surprisal", t.surprisal}});
  }
  doc["tokens"] = std::move(tokens);
  return doc.dump();
}

ScoringRequest parse_request_line(std::string_view line) {
  const json doc = parse_object(line, "request");
  ScoringRequest r;
  r.suite = string_field(doc, "suite", "request");
  r.item = item_field(doc, "request");
  r.condition = string_field(doc, "condition", "request");
  r.sentence = string_field(doc, "sentence", "request");
  const json& regions = field(doc, "regions", "request");
  if (!regions.is_array()) throw InterfaceError("request: field 'regions' must be an array");
  for (const json& reg : regions) {
    if (!reg.is_object()) throw InterfaceError("request: region entries must be objects");
    r.regions.push_back(
        {string_field(reg, "name", "request region"),
         {offset_field(reg, "start", "request region"), offset_field(reg, "end", "request region")}});
  }
  return r;
}

TokenScoreRecord parse_record_line(std::string_view line) {
  const json doc = parse_object(line, "record");
  TokenScoreRecord r;
  r.suite = string_field(doc, "suite", "record");
  r.item = item_field(doc, "record");
  r.condition = string_field(doc, "condition", "record");
  const json& tokens = field(doc, "tokens", "record");
  if (!tokens.is_array()) throw InterfaceError("record: field 'tokens' must be an array");
  for (const json& t : tokens) {
    if (!t.is_object()) throw InterfaceError("record: token entries must be objects");
    const json& s = field(t, "surprisal", "record token");
    if (!s.is_number()) throw InterfaceError("record token: field 'surprisal' must be a number");
    r.tokens.push_back({string_field(t, "text", "record token"), offset_field(t, "start", "record token"),
                        offset_field(t, "end", "record token"), s.get<double>()});
  }
  return r;
}

std::string write_requests(std::span<const TestSuite> suites) { return serialize_requests(make_requests(suites)); }

std::string serialize_requests(std::span<const ScoringRequest> requests) {
  std::string out;
  for (const auto& r : requests) {
    out += request_line(r);
    out += '\n';
  }
  return out;
}

std::string serialize_records(std::span<const TokenScoreRecord> records) {
  std::string out;
  for (const auto& r : records) {
    out += record_line(r);
    out += '\n';
  }
  return out;
}

std::vector<ScoringRequest> parse_requests(std::string_view text) {
  std::vector<ScoringRequest> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      out.push_back(parse_request_line(lines[i]));
    } catch (const InterfaceError& e) {
      throw InterfaceError("line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TokenScoreRecord> parse_records(std::string_view text) {
  std::vector<TokenScoreRecord> out;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    try {
      out.push_back(parse_record_line(lines[i]));
    } catch (const InterfaceError& e) {
      throw InterfaceError("line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

ModelHandle ModelHandle::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos || colon + 1 >= text.size()) {
    throw InterfaceError("model handle '" + std::string(text) + "' must look like KIND:LOCATOR");
  }
  const std::string_view kind = text.substr(0, colon);
  const std::string_view rest = text.substr(colon + 1);
  ModelHandle h;
  h.locator = std::string(rest);
  auto number = [&](std::uint64_t& out) {
    auto r = std::from_chars(rest.data(), rest.data() + rest.size(), out);
    if (r.ec != std::errc{} || r.ptr != rest.data() + rest.size()) {
      throw InterfaceError("model handle '" + std::string(text) + "': expected a non-negative integer");
    }
  };
  if (kind == "ngram") {
    h.kind = ModelKind::NGram;
  } else if (kind == "surprisals") {
    h.kind = ModelKind::SurprisalFile;
  } else if (kind == "adapter") {
    h.kind = ModelKind::Adapter;
  } else if (kind == "random") {
    h.kind = ModelKind::Random;
    number(h.seed);
  } else if (kind == "uniform") {
    h.kind = ModelKind::Uniform;
    number(h.vocab_size);
    if (h.vocab_size < 1) throw InterfaceError("model handle '" + std::string(text) + "': vocabulary size must be >= 1");
  } else {
    throw InterfaceError("unknown model kind '" + std::string(kind) +
                         "' (expected ngram, surprisals, adapter, random or uniform)");
  }
  return h;
}

std::string ModelHandle::to_string() const {
  switch (kind) {
    case ModelKind::NGram: return "ngram:" + locator;
    case ModelKind::SurprisalFile: return "surprisals:" + locator;
    case ModelKind::Adapter: return "adapter:" + locator;
    case ModelKind::Random: return "random:" + std::to_string(seed);
    case ModelKind::Uniform: return "uniform:" + std::to_string(vocab_size);
  }
  return "?";
}

std::vector<TokenScoreRecord> score_ngram(const NGramModel& model, std::span<const ScoringRequest> requests,
                                          const ScoreOptions& options) {
  std::vector<TokenScoreRecord> out(requests.size());
  parallel_chunks(requests.size(), options.jobs, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto tokens = tokenize_words(requests[i].sentence);
      std::vector<std::string> words;
      words.reserve(tokens.size());
      for (const auto& t : tokens) words.push_back(t.text);
      const auto bits = model.sentence_surprisals(words, false);
      TokenScoreRecord rec = record_skeleton(requests[i]);
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        rec.tokens.push_back({tokens[t].text, tokens[t].char_start, tokens[t].char_end, bits[t]});
      }
      out[i] = std::move(rec);
    }
  });
  return out;
}

std::vector<TokenScoreRecord> score_uniform(std::uint64_t vocab_size, std::span<const ScoringRequest> requests) {
  if (vocab_size < 1) throw InterfaceError("uniform model needs a vocabulary size of at least 1");
  const double bits = std::log2(static_cast<double>(vocab_size));
  std::vector<TokenScoreRecord> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    TokenScoreRecord rec = record_skeleton(r);
    for (const auto& t : tokenize_words(r.sentence)) rec.tokens.push_back({t.text, t.char_start, t.char_end, bits});
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<TokenScoreRecord> score_random(std::uint64_t seed, std::span<const ScoringRequest> requests) {
  std::vector<TokenScoreRecord> out;
  out.reserve(requests.size());
  for (const auto& r : requests) {
    Engine engine(derive_seed(seed, r.suite + '\x1f' + std::to_string(r.item) + '\x1f' + r.condition));
    TokenScoreRecord rec = record_skeleton(r);
    for (const auto& t : tokenize_words(r.sentence)) {
      rec.tokens.push_back({t.text, t.char_start, t.char_end, 10.0 * uniform01(engine)});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<TokenScoreRecord> select_records(std::span<const TokenScoreRecord> available,
                                             std::span<const ScoringRequest> requests) {
  std::map<RequestKey, const TokenScoreRecord*> by_key;
  for (const auto& r : available) {
    if (!by_key.emplace(r.key(), &r).second) throw InterfaceError("duplicate record for " + r.key().to_string());
  }
  std::vector<TokenScoreRecord> out;
  out.reserve(requests.size());
  for (const auto& q : requests) {
    auto it = by_key.find(q.key());
    if (it == by_key.end()) throw InterfaceError("no record for " + q.key().to_string());
    out.push_back(*it->second);
    by_key.erase(it);
  }
  if (!by_key.empty()) {
    throw InterfaceError(std::to_string(by_key.size()) + " record(s) without a matching request, first " +
                         by_key.begin()->first.to_string());
  }
  return out;
}

std::vector<TokenScoreRecord> run_adapter(const std::string& command, std::span<const ScoringRequest> requests,
                                          const ScoreOptions& options) {
  const std::size_t shards =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(options.jobs, 1)), requests.size()));
  std::vector<std::vector<TokenScoreRecord>> parts(shards);
  parallel_chunks(shards, static_cast<int>(shards), [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      const std::size_t lo = requests.size() * s / shards, hi = requests.size() * (s + 1) / shards;
      parts[s] = run_adapter_once(command, requests.subspan(lo, hi - lo));
    }
  });
  std::vector<TokenScoreRecord> out;
  out.reserve(requests.size());
  for (auto& p : parts) {
    for (auto& r : p) out.push_back(std::move(r));
  }
  return out;
}

void check_records(std::span<const ScoringRequest> requests, std::span<const TokenScoreRecord> records) {
  if (records.size() != requests.size()) {
    throw InterfaceError(std::to_string(records.size()) + " records for " + std::to_string(requests.size()) +
                         " requests");
  }
  for (std::size_t i = 0; i < requests.size(); ++i) {
    const auto& q = requests[i];
    const auto& r = records[i];
    const std::string where = "record " + std::to_string(i + 1) + " (" + r.key().to_string() + ")";
    if (r.key() != q.key()) throw InterfaceError(where + ": expected " + q.key().to_string());
    std::size_t prev_end = 0;
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      const auto& tok = r.tokens[t];
      if (tok.start >= tok.end || tok.end > q.sentence.size() || tok.start < prev_end) {
        throw InterfaceError(where + ": token " + std::to_string(t) + " '" + tok.text + "' has offsets [" +
                             std::to_string(tok.start) + ", " + std::to_string(tok.end) +
                             ") that do not fit the sentence");
      }
      if (!std::isfinite(tok.surprisal) || tok.surprisal < 0.0) {
        throw InterfaceError(where + ": token " + std::to_string(t) + " has invalid surprisal");
      }
      prev_end = tok.end;
    }
  }
}

std::vector<TokenScoreRecord> score(const ModelHandle& handle, std::span<const ScoringRequest> requests,
                                    const ScoreOptions& options) {
  std::vector<TokenScoreRecord> out;
  switch (handle.kind) {
    case ModelKind::NGram: {
      std::string text;
      try {
        text = read_file(handle.locator);
      } catch (const Error& e) {
        throw ModelError(e.what());
      }
      const NGramModel model = NGramModel::from_arpa(text);
      out = score_ngram(model, requests, options);
      break;
    }
    case ModelKind::SurprisalFile: {
      std::string text;
      try {
        text = read_file(handle.locator);
      } catch (const Error& e) {
        throw InterfaceError(e.what());
      }
      out = select_records(parse_records(text), requests);
      break;
    }
    case ModelKind::Adapter: out = run_adapter(handle.locator, requests, options); break;
    case ModelKind::Random: out = score_random(handle.seed, requests); break;
    case ModelKind::Uniform: out = score_uniform(handle.vocab_size, requests); break;
  }
  check_records(requests, out);
  return out;
}

SurprisalTable build_surprisal_table(std::span<const TokenScoreRecord> records, const TestSuite& suite) {
  std::map<RequestKey, const TokenScoreRecord*> by_key;
  for (const auto& r : records) {
    if (r.suite == suite.name) by_key[r.key()] = &r;
  }
  SurprisalTable table;
  for (const Item& item : suite.items) {
    for (const auto& cond : suite.condition_names) {
      const RequestKey key{suite.name, item.item_number, cond};
      auto it = by_key.find(key);
      if (it == by_key.end()) throw InterfaceError("no record for " + key.to_string());
      const JoinedSentence joined = join_regions(suite, item, cond);
      std::vector<Token> tokens;
      std::vector<double> bits;
      for (const auto& t : it->second->tokens) {
        tokens.push_back({t.text, t.start, t.end});
        bits.push_back(t.surprisal);
      }
      Alignment alignment;
      try {
        alignment = align(tokens, joined.regions, joined.sentence.size());
      } catch (const InterfaceError& e) {
        throw InterfaceError(key.to_string() + ": " + e.what());
      }
      for (const auto& [region, total] : region_surprisals(bits, alignment)) {
        table.set(item.item_number, cond, region, total);
      }
      for (const auto& r : suite.region_names) {
        if (item.text(cond, r).empty()) table.mark_empty(item.item_number, cond, r);
      }
    }
  }
  return table;
}

std::map<std::string, SurprisalTable> build_surprisal_tables(std::span<const TokenScoreRecord> records,
                                                             std::span<const TestSuite> suites) {
  std::map<std::string, SurprisalTable> out;
  for (const auto& s : suites) out.emplace(s.name, build_surprisal_table(records, s));
  return out;
}

}  // namespace sg
