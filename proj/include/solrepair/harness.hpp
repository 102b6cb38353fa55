#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "solrepair/corpus.hpp"
#include "solrepair/executor.hpp"
#include "solrepair/metrics.hpp"
#include "solrepair/repair.hpp"
#include "solrepair/retrieval.hpp"

namespace solrepair::harness {

using nlohmann::json;

enum ExitCode : int {
  kExitClean = 0,
  kExitFailure = 1,      // unexpected error, or verify found failing bodies
  kExitConfig = 2,       // bad flags, config or input files
  kExitInfra = 3,        // some samples lost to executor/client failures
  kExitInterrupted = 4,  // stopped early by --stop-after
};

std::string harness_version();

// ---------------------------------------------------------------------------
// build

struct BuildOptions {
  std::string src_dir;
  std::string out_task_file;
  std::string stats_file;  // default: <out_task_file>.stats.json
  corpus::FilterConfig filter;
};

/// Extracts, filters and deduplicates every *.sol file under src_dir
/// (sorted by relative path) and writes the task JSONL and stats JSON.
corpus::FilterReport cmd_build(const BuildOptions& options);

// ---------------------------------------------------------------------------
// run

struct ModelSettings {
  std::string name = "gpt-4o-mini";
  std::string url;
  std::string api_key_env = "OPENAI_API_KEY";
  std::string mock_client;  // scripted fixture; replaces the HTTP client
  double temperature = 0.0;
  double timeout_seconds = 120.0;
  double requests_per_minute = 0.0;
  int max_tokens = 1024;
  int retries = 2;
};

struct ExecutorSettings {
  std::string backend = "compile";  // compile | differential | mock
  std::string mock_file;
  std::string solc = "solc";
  std::vector<std::string> command;  // differential fuzzer command line
  double timeout_seconds = 60.0;
};

struct RetrievalSettings {
  bool enabled = false;
  retrieval::RetrievalConfig config;
  std::string embedding_url;  // dense only; empty selects feature hashing
  int embedding_dim = 256;
};

struct RunConfig {
  std::string label;
  std::string task_file;
  std::string source_root;  // default: directory of task_file
  std::string out_dir;
  std::int64_t budget_tokens = 2048;
  std::string counter = "approx";
  ModelSettings model;
  ExecutorSettings executor;
  RetrievalSettings retrieval;
  repair::Strategy strategy = repair::Strategy::SelfEdit;
  int max_rounds = 0;
  std::vector<int> k_values = {1};
  int samples = 1;
  int workers = 1;
  std::uint64_t seed = 0;
  metrics::CostModel cost = metrics::CostModel::gpt_4o_mini();
  std::string prompt_dir;  // empty: built-in templates
  /// Stop after this many sessions in this invocation (simulated crash).
  std::optional<std::size_t> stop_after;
  /// Discard an existing run in out_dir instead of resuming it.
  bool fresh = false;

  /// Throws ConfigError. Checks that referenced paths exist.
  void validate() const;
  json to_json() const;
  static RunConfig from_json(const json& doc);
  /// The part of the config that decides outcomes; resume requires a match.
  json identity() const;
};

struct RunManifest {
  json config;
  std::string started_at;
  std::string finished_at;
  json versions;
  std::size_t tasks_total = 0;
  std::vector<std::string> incomplete_tasks;
  bool interrupted = false;
  /// task id -> 0-based line in outcomes.jsonl
  std::map<std::string, std::size_t> outcome_index;

  json to_json() const;
  static RunManifest from_json(const json& doc);
};

struct RunResult {
  RunManifest manifest;
  int exit_code = kExitClean;
  std::size_t sessions_run = 0;
};

std::unique_ptr<repair::ModelClient> make_client(const ModelSettings& settings);
std::unique_ptr<executor::ExecutorBackend> make_executor(const ExecutorSettings& settings,
                                                         std::uint64_t seed);
std::unique_ptr<retrieval::EmbeddingProvider> make_provider(const RetrievalSettings& settings);

/// Loads tasks and their sources and builds the context windows.
std::vector<repair::CompletionTask> load_tasks(const std::string& task_file,
                                               const std::string& source_root,
                                               std::int64_t budget, const std::string& counter);

/// Runs every (task, sample) session not already completed in out_dir.
/// Writes sessions.log.jsonl (append-only), then the canonical
/// sessions.jsonl, outcomes.jsonl and manifest.json.
RunResult cmd_run(const RunConfig& config);

// ---------------------------------------------------------------------------
// report

struct ReportOptions {
  /// Run directories, or outcomes.jsonl files (a sibling manifest.json is
  /// used when present).
  std::vector<std::string> inputs;
  std::vector<int> k_values = {1};
  metrics::CostModel cost = metrics::CostModel::gpt_4o_mini();
  std::size_t trivial_ngrams = 500;
  std::string out_dir;  // report.txt, report.json, cost_points.csv
};

struct ReportRow {
  std::string label;
  std::optional<std::int64_t> budget;
  std::size_t tasks = 0;
  std::map<int, std::optional<double>> pass_at_k;
  double compile_at_1 = 0.0;
  double bleu = 0.0;
  double crystal_bleu = 0.0;
  metrics::Usage usage;
  double cost_usd = 0.0;
};

struct Report {
  std::vector<ReportRow> rows;  // sorted by (label, budget)
  json doc;
  std::string table;
  std::string cost_csv;
};

Report build_report(const ReportOptions& options);
Report cmd_report(const ReportOptions& options);

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  std::string task_file;
  std::string source_root;
  ExecutorSettings executor;
  std::uint64_t seed = 0;
  std::string task_id;    // empty: every task
  std::string body_file;  // empty: each task's reference body
};

/// Prints one verdict JSON line per task. Returns kExitClean when all pass,
/// kExitInfra when any verdict is infrastructural, kExitFailure otherwise.
int cmd_verify(const VerifyOptions& options, std::ostream& out);

}  // namespace solrepair::harness
