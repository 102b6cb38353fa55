#include "solrepair/serialize.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "solrepair/error.hpp"

namespace solrepair::io {

namespace fs = std::filesystem;

void expect_schema(const json& doc, std::string_view schema) {
  auto it = doc.find("schema");
  if (it == doc.end() || !it->is_string() || it->get<std::string>() != schema) {
    throw MalformedRecord("expected schema " + std::string(schema) + ", got " +
                          (it == doc.end() ? std::string("none") : it->dump()));
  }
}

json to_json(const corpus::FunctionRecord& r) {
  return {{"schema", kTaskSchema},
          {"id", r.id()},
          {"source_path", r.source_id},
          {"contract", r.contract},
          {"contract_type", r.contract_type},
          {"name", r.name},
          {"comment", r.comment},
          {"signature", r.signature},
          {"body", r.body},
          {"span", {{"start_line", r.span.start_line}, {"end_line", r.span.end_line}}}};
}

corpus::FunctionRecord record_from_json(const json& doc) {
  expect_schema(doc, kTaskSchema);
  try {
    corpus::FunctionRecord r;
    r.source_id = doc.at("source_path").get<std::string>();
    r.contract = doc.at("contract").get<std::string>();
    r.contract_type = doc.value("contract_type", "contract");
    r.name = doc.at("name").get<std::string>();
    r.comment = doc.at("comment").get<std::string>();
    r.signature = doc.at("signature").get<std::string>();
    r.body = doc.at("body").get<std::string>();
    r.span.start_line = doc.at("span").at("start_line").get<int>();
    r.span.end_line = doc.at("span").at("end_line").get<int>();
    if (doc.contains("id") && doc["id"].get<std::string>() != r.id()) {
      throw MalformedRecord("task id " + doc["id"].dump() + " does not match its fields");
    }
    return r;
  } catch (const json::exception& e) {
    throw MalformedRecord(std::string("bad task record: ") + e.what());
  }
}

json to_json(const corpus::FilterReport& r) {
  return {{"total_extracted", r.total_extracted},
          {"excluded_no_comment", r.excluded_no_comment},
          {"excluded_state_dependent", r.excluded_state_dependent},
          {"excluded_mint", r.excluded_mint},
          {"retained", r.retained},
          {"dedup_removed", r.dedup_removed},
          {"duplication_rate", r.duplication_rate}};
}

json to_json(const executor::Diagnostic& d) {
  json j = {{"kind", executor::to_string(d.kind)}, {"message", d.message}};
  if (d.line) j["line"] = *d.line;
  if (d.identifier) j["identifier"] = *d.identifier;
  return j;
}

executor::Diagnostic diagnostic_from_json(const json& doc) {
  executor::Diagnostic d;
  d.kind = executor::error_kind_from_string(doc.value("kind", "Other"));
  d.message = doc.at("message").get<std::string>();
  if (doc.contains("line")) d.line = doc["line"].get<int>();
  if (doc.contains("identifier")) d.identifier = doc["identifier"].get<std::string>();
  return d;
}

json to_json(const executor::ExecutionVerdict& v, bool with_timing) {
  json diags = json::array();
  for (const auto& d : v.diagnostics) diags.push_back(to_json(d));
  json j = {{"status", executor::to_string(v.status)},
            {"diagnostics", std::move(diags)},
            {"executor_version", v.executor_version}};
  if (v.seed) j["seed"] = *v.seed;
  if (with_timing) j["elapsed_ms"] = v.elapsed.count();
  return j;
}

executor::ExecutionVerdict verdict_from_json(const json& doc) {
  executor::ExecutionVerdict v;
  v.status = executor::status_from_string(doc.at("status").get<std::string>());
  for (const auto& d : doc.at("diagnostics")) v.diagnostics.push_back(diagnostic_from_json(d));
  v.executor_version = doc.value("executor_version", "");
  if (doc.contains("seed")) v.seed = doc["seed"].get<std::uint64_t>();
  v.elapsed = std::chrono::milliseconds(doc.value("elapsed_ms", std::int64_t{0}));
  return v;
}

json to_json(const metrics::Usage& u) {
  return {{"prompt_tokens", u.prompt_tokens}, {"completion_tokens", u.completion_tokens}};
}

metrics::Usage usage_from_json(const json& doc) {
  return {doc.value("prompt_tokens", std::int64_t{0}),
          doc.value("completion_tokens", std::int64_t{0})};
}

namespace {

json query_json(const retrieval::Query& q) {
  return {{"kind", q.kind == retrieval::Query::Kind::Identifier ? "identifier" : "line"},
          {"text", q.text}};
}

retrieval::Query query_from_json(const json& doc) {
  retrieval::Query q;
  q.kind = doc.at("kind").get<std::string>() == "identifier" ? retrieval::Query::Kind::Identifier
                                                             : retrieval::Query::Kind::Line;
  q.text = doc.at("text").get<std::string>();
  return q;
}

json snippet_json(const retrieval::RetrievedSnippet& s) {
  return {{"line_index", s.line_index},
          {"text", s.text},
          {"score", s.score},
          {"matched_fragment", s.matched_fragment}};
}

retrieval::RetrievedSnippet snippet_from_json(const json& doc) {
  retrieval::RetrievedSnippet s;
  s.line_index = doc.at("line_index").get<std::size_t>();
  s.text = doc.at("text").get<std::string>();
  s.score = doc.at("score").get<double>();
  s.matched_fragment = doc.value("matched_fragment", "");
  return s;
}

json call_json(const repair::ModelCall& c) {
  json j = {{"stage", c.stage},
            {"prompt", c.prompt},
            {"response", c.response},
            {"usage", to_json(c.usage)}};
  if (c.error) j["error"] = *c.error;
  return j;
}

repair::ModelCall call_from_json(const json& doc) {
  repair::ModelCall c;
  c.stage = doc.at("stage").get<std::string>();
  c.prompt = doc.at("prompt").get<std::string>();
  c.response = doc.at("response").get<std::string>();
  c.usage = usage_from_json(doc.at("usage"));
  if (doc.contains("error")) c.error = doc["error"].get<std::string>();
  return c;
}

}  // namespace

json to_json(const repair::RepairSession& s, bool with_timing) {
  json attempts = json::array();
  for (const auto& a : s.attempts) {
    json calls = json::array(), queries = json::array(), snippets = json::array();
    for (const auto& c : a.calls) calls.push_back(call_json(c));
    for (const auto& q : a.queries) queries.push_back(query_json(q));
    for (const auto& sn : a.snippets) snippets.push_back(snippet_json(sn));
    attempts.push_back({{"stage", a.stage},
                        {"calls", std::move(calls)},
                        {"completed_body", a.completed_body},
                        {"verdict", to_json(a.verdict, with_timing)},
                        {"queries", std::move(queries)},
                        {"snippets", std::move(snippets)}});
  }
  json j = {{"schema", kSessionSchema},
            {"task_id", s.task_id},
            {"sample_index", s.sample_index},
            {"strategy", repair::to_string(s.strategy)},
            {"retrieval", s.retrieval ? json(retrieval::to_string(*s.retrieval)) : json(nullptr)},
            {"max_rounds", s.max_rounds},
            {"attempts", std::move(attempts)},
            {"final_status", executor::to_string(s.final_status)},
            {"usage", to_json(s.usage())}};
  return j;
}

repair::RepairSession session_from_json(const json& doc) {
  expect_schema(doc, kSessionSchema);
  try {
    repair::RepairSession s;
    s.task_id = doc.at("task_id").get<std::string>();
    s.sample_index = doc.at("sample_index").get<int>();
    s.strategy = repair::strategy_from_string(doc.at("strategy").get<std::string>());
    if (!doc.at("retrieval").is_null()) {
      s.retrieval = retrieval::method_from_string(doc["retrieval"].get<std::string>());
    }
    s.max_rounds = doc.at("max_rounds").get<int>();
    for (const auto& aj : doc.at("attempts")) {
      repair::Attempt a;
      a.stage = aj.at("stage").get<std::string>();
      for (const auto& c : aj.at("calls")) a.calls.push_back(call_from_json(c));
      a.completed_body = aj.at("completed_body").get<std::string>();
      a.verdict = verdict_from_json(aj.at("verdict"));
      for (const auto& q : aj.value("queries", json::array())) a.queries.push_back(query_from_json(q));
      for (const auto& sn : aj.value("snippets", json::array())) {
        a.snippets.push_back(snippet_from_json(sn));
      }
      s.attempts.push_back(std::move(a));
    }
    s.final_status = executor::status_from_string(doc.at("final_status").get<std::string>());
    return s;
  } catch (const json::exception& e) {
    throw MalformedRecord(std::string("bad session record: ") + e.what());
  }
}

std::string dump_line(const json& doc) {
  return doc.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw ConfigError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::vector<json> read_jsonl(const std::string& path) {
  std::string text = read_file(path);
  std::vector<json> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    bool terminated = nl != std::string::npos;
    std::string_view line(text.data() + pos, (terminated ? nl : text.size()) - pos);
    pos = terminated ? nl + 1 : text.size();
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      if (!terminated) break;  // torn final write
      throw MalformedRecord(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<corpus::FunctionRecord> read_tasks(const std::string& path) {
  std::vector<corpus::FunctionRecord> out;
  for (const auto& doc : read_jsonl(path)) out.push_back(record_from_json(doc));
  return out;
}

}  // namespace solrepair::io
