#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "solrepair/context.hpp"
#include "solrepair/corpus.hpp"
#include "solrepair/executor.hpp"
#include "solrepair/metrics.hpp"
#include "solrepair/retrieval.hpp"

namespace solrepair::repair {

// ---------------------------------------------------------------------------
// Prompt templates

/// Versioned prompt text. Templates use `{{name}}` substitution and
/// `{{#name}}...{{/name}}` sections rendered only when `name` is non-empty.
class PromptTemplates {
 public:
  /// Templates compiled in from assets/prompts/<version>/.
  static PromptTemplates builtin();
  /// Loads every `<name>.txt` in `dir`; the directory name is the version.
  static PromptTemplates from_directory(const std::string& dir);

  const std::string& version() const { return version_; }
  /// Throws ConfigError for an unknown template name.
  const std::string& get(std::string_view name) const;

 private:
  std::string version_;
  std::map<std::string, std::string, std::less<>> templates_;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Single-pass renderer; substituted values are never re-scanned.
std::string render(std::string_view tmpl, const Bindings& values);

// ---------------------------------------------------------------------------
// Model clients

struct CompletionRequest {
  std::string prompt;
  int max_tokens = 1024;
  int sample_index = 0;
  std::uint64_t seed = 0;
};

struct Completion {
  std::string text;
  metrics::Usage usage;
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;
  virtual std::string name() const = 0;
  /// Throws ModelError on failure.
  virtual Completion complete(const CompletionRequest& request) = 0;
};

/// 16 hex digits of FNV-1a over the prompt bytes.
std::string prompt_hash(std::string_view prompt);

/// Replays completions from a fixture. Entries match by exact prompt hash
/// first, then by a list of substrings that must all occur in the prompt;
/// the first matching entry wins. Usage defaults to ceil(bytes / 4) for both
/// sides unless the entry pins it.
class ScriptedClient final : public ModelClient {
 public:
  static ScriptedClient from_json(const nlohmann::json& doc);
  static ScriptedClient from_file(const std::string& path);

  std::string name() const override { return name_; }
  Completion complete(const CompletionRequest& request) override;

 private:
  struct Entry {
    std::optional<std::string> hash;
    std::vector<std::string> contains;
    std::vector<std::string> completions;
    std::optional<metrics::Usage> usage;
    bool fail = false;
  };
  std::string name_ = "scripted";
  std::vector<Entry> entries_;
  std::optional<std::string> fallback_;
};

/// Spaces out requests to at most `per_minute` per minute across threads.
class RateLimiter {
 public:
  explicit RateLimiter(double per_minute);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_;
  std::chrono::steady_clock::time_point next_;
  std::mutex mutex_;
};

/// OpenAI-style chat-completions endpoint over HTTP(S).
class HttpChatClient final : public ModelClient {
 public:
  struct Options {
    std::string url;  // e.g. https://api.openai.com/v1/chat/completions
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    double temperature = 0.0;
    double timeout_seconds = 120.0;
    double requests_per_minute = 0.0;  // 0: unlimited
  };

  explicit HttpChatClient(Options options);
  std::string name() const override { return options_.model; }
  Completion complete(const CompletionRequest& request) override;

 private:
  Options options_;
  std::unique_ptr<RateLimiter> limiter_;
};

// ---------------------------------------------------------------------------
// Tasks, attempts and sessions

/// A benchmark function with its token-budgeted context.
struct CompletionTask {
  corpus::FunctionRecord record;
  context::ContextWindow window;
  std::string oracle_source;

  std::string id() const { return record.id(); }
};

enum class Strategy { SelfEdit, SelfDebug, SelfRefine, SelfRepair };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);
inline bool uses_executor_feedback(Strategy s) { return s != Strategy::SelfRefine; }

struct ModelCall {
  std::string stage;  // metrics::kStage*
  std::string prompt;
  std::string response;
  metrics::Usage usage;
  std::optional<std::string> error;
};

struct Attempt {
  std::string stage;  // "completion", "repair" or "retrieval"
  std::vector<ModelCall> calls;
  std::string completed_body;
  executor::ExecutionVerdict verdict;
  std::vector<retrieval::Query> queries;
  std::vector<retrieval::RetrievedSnippet> snippets;

  metrics::Usage usage() const;
};

struct RepairSession {
  std::string task_id;
  int sample_index = 0;
  Strategy strategy = Strategy::SelfEdit;
  std::optional<retrieval::Method> retrieval;
  int max_rounds = 0;
  std::vector<Attempt> attempts;
  executor::Status final_status = executor::Status::Pass;

  metrics::Usage usage() const;
  metrics::StageUsage stage_usage() const;
  /// The body judged by the last verdict.
  const std::string& final_body() const;
};

/// Text of the first fenced code block if any, otherwise the whole reply.
std::string strip_code_fence(std::string_view reply);

/// First balanced brace block of a model reply after fence stripping. A
/// reply without braces is wrapped in a pair.
std::string extract_body(std::string_view reply);

struct RarOptions {
  int max_tokens = 1024;
  int sample_index = 0;
  std::uint64_t seed = 0;
  /// Extra attempts after a ModelError before the attempt is recorded as a
  /// client error.
  int client_retries = 2;
  const PromptTemplates* templates = nullptr;  // builtin when null
  retrieval::EmbeddingProvider* provider = nullptr;
};

std::string completion_prompt(const CompletionTask& task, const PromptTemplates& templates);

/// Step one: prompt the model with context, comment and signature and parse
/// the body. The returned attempt has no verdict yet.
Attempt complete_function(const CompletionTask& task, ModelClient& client,
                          const RarOptions& options = {});

struct RepairPrompt {
  std::string prompt;
  /// Auxiliary calls made while building the prompt (Self Debug's
  /// line-by-line explanation).
  std::vector<ModelCall> calls;
};

/// Repair prompt for a failed attempt. `client` is needed only by
/// Strategy::SelfDebug.
RepairPrompt build_repair_prompt(Strategy strategy, const CompletionTask& task,
                                 const Attempt& failed,
                                 const std::vector<retrieval::RetrievedSnippet>& snippets,
                                 ModelClient* client, const RarOptions& options = {});

/// complete -> verify -> (retrieve -> repair -> verify) x max_rounds.
/// Retrieval is skipped when `retrieval_cfg` is empty.
RepairSession run_rar(const CompletionTask& task, ModelClient& client,
                      executor::ExecutorBackend& backend,
                      const std::optional<retrieval::RetrievalConfig>& retrieval_cfg,
                      Strategy strategy, int max_rounds, const RarOptions& options = {});

metrics::TaskOutcome outcome_of(const std::string& task_id,
                                const std::vector<RepairSession>& samples);

metrics::CostLedger cost_of(const std::vector<RepairSession>& sessions,
                            const metrics::CostModel& model);

}  // namespace solrepair::repair
