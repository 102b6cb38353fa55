#include "solrepair/repair.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "solrepair/error.hpp"
#include "solrepair/lexer.hpp"

namespace solrepair::repair {

namespace fs = std::filesystem;

// Defined in the generated prompts_builtin.cpp.
extern const char* const kBuiltinPromptVersion;
std::map<std::string, std::string, std::less<>> builtin_prompt_texts();

PromptTemplates PromptTemplates::builtin() {
  PromptTemplates t;
  t.version_ = kBuiltinPromptVersion;
  t.templates_ = builtin_prompt_texts();
  return t;
}

PromptTemplates PromptTemplates::from_directory(const std::string& dir) {
  PromptTemplates t;
  fs::path root(dir);
  if (!fs::is_directory(root)) throw ConfigError("prompt directory not found: " + dir);
  t.version_ = root.filename().string();
  if (t.version_.empty()) t.version_ = root.parent_path().filename().string();
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    t.templates_[entry.path().stem().string()] = ss.str();
  }
  return t;
}

const std::string& PromptTemplates::get(std::string_view name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) {
    throw ConfigError("prompt template '" + std::string(name) + "' missing from version " + version_);
  }
  return it->second;
}

std::string render(std::string_view tmpl, const Bindings& values) {
  std::string out;
  std::size_t i = 0;
  auto lookup = [&](std::string_view name) -> std::string_view {
    auto it = values.find(name);
    return it == values.end() ? std::string_view() : std::string_view(it->second);
  };
  while (i < tmpl.size()) {
    std::size_t open = tmpl.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(tmpl.substr(i));
      break;
    }
    out.append(tmpl.substr(i, open - i));
    std::string_view tag = tmpl.substr(open + 2, close - open - 2);
    if (!tag.empty() && tag.front() == '#') {
      std::string_view name = tag.substr(1);
      std::string end_tag = "{{/" + std::string(name) + "}}";
      std::size_t end = tmpl.find(end_tag, close + 2);
      if (end == std::string_view::npos) {
        throw ConfigError("unterminated section {{#" + std::string(name) + "}}");
      }
      if (!lookup(name).empty()) out += render(tmpl.substr(close + 2, end - close - 2), values);
      i = end + end_tag.size();
      continue;
    }
    out.append(lookup(tag));
    i = close + 2;
  }
  return out;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::SelfEdit: return "self_edit";
    case Strategy::SelfDebug: return "self_debug";
    case Strategy::SelfRefine: return "self_refine";
    case Strategy::SelfRepair: return "self_repair";
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view s) {
  for (Strategy st : {Strategy::SelfEdit, Strategy::SelfDebug, Strategy::SelfRefine,
                      Strategy::SelfRepair}) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown repair strategy: " + std::string(s));
}

metrics::Usage Attempt::usage() const {
  metrics::Usage u;
  for (const auto& c : calls) u += c.usage;
  return u;
}

metrics::Usage RepairSession::usage() const {
  metrics::Usage u;
  for (const auto& a : attempts) u += a.usage();
  return u;
}

metrics::StageUsage RepairSession::stage_usage() const {
  metrics::StageUsage out;
  for (const auto& a : attempts) {
    for (const auto& c : a.calls) out[c.stage] += c.usage;
  }
  return out;
}

const std::string& RepairSession::final_body() const {
  for (auto it = attempts.rbegin(); it != attempts.rend(); ++it) {
    if (!it->completed_body.empty()) return it->completed_body;
  }
  static const std::string empty;
  return empty;
}

std::string strip_code_fence(std::string_view reply) {
  std::size_t fence = reply.find("```");
  if (fence == std::string_view::npos) return std::string(reply);
  std::size_t start = reply.find('\n', fence);
  if (start == std::string_view::npos) return {};
  ++start;
  std::size_t end = reply.find("```", start);
  if (end == std::string_view::npos) end = reply.size();
  return std::string(reply.substr(start, end - start));
}

std::string extract_body(std::string_view reply) {
  std::string code = strip_code_fence(reply);
  try {
    auto scanned = lex::scan(code);
    const auto& toks = scanned.tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (toks[i].kind != lex::TokenKind::Punct || !toks[i].is("{")) continue;
      std::size_t close = lex::match_brace(toks, i);
      std::size_t end = close < toks.size() ? toks[close].offset + 1 : code.size();
      return code.substr(toks[i].offset, end - toks[i].offset);
    }
  } catch (const MalformedSource&) {
    // Truncated replies: count braces on the raw text.
    std::size_t open = code.find('{');
    if (open != std::string::npos) {
      int depth = 0;
      for (std::size_t i = open; i < code.size(); ++i) {
        if (code[i] == '{') ++depth;
        if (code[i] == '}' && --depth == 0) return code.substr(open, i + 1 - open);
      }
      return code.substr(open);
    }
  }
  std::size_t b = code.find_first_not_of(" \t\r\n");
  std::size_t e = code.find_last_not_of(" \t\r\n");
  std::string inner = b == std::string::npos ? std::string() : code.substr(b, e + 1 - b);
  return "{\n" + inner + "\n}";
}

namespace {

Bindings task_bindings(const CompletionTask& task) {
  return {{"context", task.window.text},
          {"comment", task.record.comment},
          {"signature", task.record.signature}};
}

std::string render_snippets(const std::vector<retrieval::RetrievedSnippet>& snippets) {
  std::string out;
  for (const auto& s : snippets) {
    out += "[L" + std::to_string(s.line_index) + "] " + s.text + "\n";
  }
  return out;
}

const PromptTemplates& templates_of(const RarOptions& options) {
  static const PromptTemplates builtin = PromptTemplates::builtin();
  return options.templates != nullptr ? *options.templates : builtin;
}

/// Calls the model, retrying ModelError. The returned call carries the error
/// text when every try failed.
ModelCall call_model(ModelClient& client, std::string stage, std::string prompt,
                     const RarOptions& options) {
  ModelCall call;
  call.stage = std::move(stage);
  call.prompt = std::move(prompt);
  CompletionRequest req{call.prompt, options.max_tokens, options.sample_index, options.seed};
  for (int attempt = 0; attempt <= options.client_retries; ++attempt) {
    try {
      Completion c = client.complete(req);
      call.response = std::move(c.text);
      call.usage = c.usage;
      call.error.reset();
      return call;
    } catch (const ModelError& e) {
      call.error = e.what();
    }
  }
  return call;
}

void mark_client_error(Attempt& a) {
  a.verdict = {};
  a.verdict.status = executor::Status::ClientError;
  a.verdict.diagnostics.push_back(
      {executor::ErrorKind::Other, a.calls.back().error.value_or("model call failed"),
       std::nullopt, std::nullopt});
}

void verify(Attempt& a, const CompletionTask& task, executor::ExecutorBackend& backend) {
  a.verdict = backend.verify(executor::make_request(task.oracle_source, task.record, a.completed_body));
}

}  // namespace

std::string completion_prompt(const CompletionTask& task, const PromptTemplates& templates) {
  return render(templates.get("completion"), task_bindings(task));
}

Attempt complete_function(const CompletionTask& task, ModelClient& client,
                          const RarOptions& options) {
  Attempt a;
  a.stage = "completion";
  a.calls.push_back(call_model(client, std::string(metrics::kStageCompletion),
                               completion_prompt(task, templates_of(options)), options));
  if (a.calls.back().error) {
    mark_client_error(a);
  } else {
    a.completed_body = extract_body(a.calls.back().response);
  }
  return a;
}

RepairPrompt build_repair_prompt(Strategy strategy, const CompletionTask& task,
                                 const Attempt& failed,
                                 const std::vector<retrieval::RetrievedSnippet>& snippets,
                                 ModelClient* client, const RarOptions& options) {
  const PromptTemplates& templates = templates_of(options);
  Bindings b = task_bindings(task);
  b["body"] = failed.completed_body;
  b["snippets"] = render_snippets(snippets);
  if (uses_executor_feedback(strategy)) b["diagnostics"] = executor::render_diagnostics(failed.verdict);

  RepairPrompt out;
  if (strategy == Strategy::SelfDebug) {
    if (client == nullptr) throw InvalidArgument("self_debug needs a model client for its explanation");
    ModelCall explain = call_model(*client, std::string(metrics::kStageDebugExplanation),
                                   render(templates.get("self_debug_explain"), b), options);
    b["explanation"] = explain.response;
    out.calls.push_back(std::move(explain));
  }
  out.prompt = render(templates.get(to_string(strategy)), b);
  return out;
}

RepairSession run_rar(const CompletionTask& task, ModelClient& client,
                      executor::ExecutorBackend& backend,
                      const std::optional<retrieval::RetrievalConfig>& retrieval_cfg,
                      Strategy strategy, int max_rounds, const RarOptions& options) {
  if (max_rounds < 0) throw InvalidArgument("max_rounds must be >= 0");
  if (retrieval_cfg) retrieval_cfg->validate();

  RepairSession session;
  session.task_id = task.id();
  session.sample_index = options.sample_index;
  session.strategy = strategy;
  session.max_rounds = max_rounds;
  if (retrieval_cfg) session.retrieval = retrieval_cfg->method;

  auto finish = [&]() {
    session.final_status = session.attempts.back().verdict.status;
    return session;
  };

  session.attempts.push_back(complete_function(task, client, options));
  if (session.attempts.back().verdict.status == executor::Status::ClientError) return finish();
  verify(session.attempts.back(), task, backend);

  const auto context_lines = task.window.lines();
  for (int round = 0; round < max_rounds; ++round) {
    const Attempt& last = session.attempts.back();
    if (last.verdict.passed() || executor::is_infrastructure(last.verdict.status)) break;

    Attempt next;
    next.stage = "repair";
    if (retrieval_cfg) {
      auto pref = retrieval_cfg->method == retrieval::Method::Lcs
                      ? executor::QueryPreference::IdentifierFirst
                      : executor::QueryPreference::LineFirst;
      next.queries = executor::build_query(last.verdict,
                                           task.record.signature + last.completed_body, pref);
      try {
        next.snippets = retrieval::retrieve_all(next.queries, context_lines, *retrieval_cfg,
                                                options.provider);
      } catch (const RetrievalUnavailable& e) {
        next.stage = "retrieval";
        next.verdict.status = executor::Status::ExecutorUnavailable;
        next.verdict.diagnostics.push_back(
            {executor::ErrorKind::Other, e.what(), std::nullopt, std::nullopt});
        session.attempts.push_back(std::move(next));
        return finish();
      }
    }
    RepairPrompt rp = build_repair_prompt(strategy, task, last, next.snippets, &client, options);
    next.calls = std::move(rp.calls);
    next.calls.push_back(
        call_model(client, std::string(metrics::kStageRepair), std::move(rp.prompt), options));
    if (next.calls.back().error) {
      mark_client_error(next);
      session.attempts.push_back(std::move(next));
      return finish();
    }
    next.completed_body = extract_body(next.calls.back().response);
    verify(next, task, backend);
    session.attempts.push_back(std::move(next));
  }
  return finish();
}

metrics::TaskOutcome outcome_of(const std::string& task_id,
                                const std::vector<RepairSession>& samples) {
  metrics::TaskOutcome o;
  o.task_id = task_id;
  for (const auto& s : samples) {
    if (executor::is_infrastructure(s.final_status)) continue;
    ++o.n;
    const auto& v = s.attempts.back().verdict;
    if (v.passed()) ++o.c;
    if (v.compiled()) ++o.c_compile;
  }
  return o;
}

metrics::CostLedger cost_of(const std::vector<RepairSession>& sessions,
                            const metrics::CostModel& model) {
  metrics::CostLedger ledger;
  for (const auto& s : sessions) ledger += metrics::cost_of(s.stage_usage(), model);
  return ledger;
}

}  // namespace solrepair::repair
