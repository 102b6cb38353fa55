// Command-line front end: build, run, report, verify.

#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "solrepair/error.hpp"
#include "solrepair/harness.hpp"
#include "solrepair/serialize.hpp"

namespace sh = solrepair::harness;

namespace {

template <typename T>
void apply(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

struct RunFlags {
  std::string config_file;
  std::optional<std::string> label, tasks, source_root, out, counter, model, model_url, api_key_env,
      mock_client, executor, mock_executor, solc, fuzzer, retrieval, embedding_url, strategy,
      prompt_dir;
  std::optional<std::int64_t> budget;
  std::optional<double> rpm, temperature, model_timeout, executor_timeout, bm25_k1, bm25_b,
      price_prompt, price_completion;
  std::optional<int> max_tokens, retries, window_lines, step_lines, max_snippets, lcs_min_length,
      embedding_dim, max_rounds, samples, workers;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stop_after;
  std::vector<int> k_values;
  bool fresh = false;
};

std::vector<std::string> split_command(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

sh::RunConfig run_config(const RunFlags& f) {
  sh::RunConfig c;
  if (!f.config_file.empty()) {
    try {
      c = sh::RunConfig::from_json(nlohmann::json::parse(solrepair::io::read_file(f.config_file)));
    } catch (const nlohmann::json::exception& e) {
      throw solrepair::ConfigError("cannot parse " + f.config_file + ": " + e.what());
    }
  }
  apply(f.label, c.label);
  apply(f.tasks, c.task_file);
  apply(f.source_root, c.source_root);
  apply(f.out, c.out_dir);
  apply(f.budget, c.budget_tokens);
  apply(f.counter, c.counter);
  apply(f.model, c.model.name);
  apply(f.model_url, c.model.url);
  apply(f.api_key_env, c.model.api_key_env);
  apply(f.mock_client, c.model.mock_client);
  apply(f.temperature, c.model.temperature);
  apply(f.model_timeout, c.model.timeout_seconds);
  apply(f.rpm, c.model.requests_per_minute);
  apply(f.max_tokens, c.model.max_tokens);
  apply(f.retries, c.model.retries);
  apply(f.executor, c.executor.backend);
  if (f.mock_executor) {
    c.executor.mock_file = *f.mock_executor;
    if (!f.executor) c.executor.backend = "mock";
  }
  apply(f.solc, c.executor.solc);
  if (f.fuzzer) {
    c.executor.command = split_command(*f.fuzzer);
    if (!f.executor && !f.mock_executor) c.executor.backend = "differential";
  }
  apply(f.executor_timeout, c.executor.timeout_seconds);
  if (f.retrieval) {
    c.retrieval.enabled = *f.retrieval != "none";
    if (c.retrieval.enabled) {
      try {
        c.retrieval.config.method = solrepair::retrieval::method_from_string(*f.retrieval);
      } catch (const solrepair::Error& e) {
        throw solrepair::ConfigError(e.what());
      }
    }
  }
  auto& r = c.retrieval.config;
  apply(f.window_lines, r.window_lines);
  apply(f.step_lines, r.step_lines);
  apply(f.max_snippets, r.max_snippets);
  apply(f.bm25_k1, r.bm25_k1);
  apply(f.bm25_b, r.bm25_b);
  apply(f.lcs_min_length, r.lcs_min_length);
  apply(f.embedding_url, c.retrieval.embedding_url);
  apply(f.embedding_dim, c.retrieval.embedding_dim);
  if (f.strategy) c.strategy = solrepair::repair::strategy_from_string(*f.strategy);
  apply(f.max_rounds, c.max_rounds);
  if (!f.k_values.empty()) c.k_values = f.k_values;
  apply(f.samples, c.samples);
  apply(f.workers, c.workers);
  apply(f.seed, c.seed);
  apply(f.price_prompt, c.cost.price_per_1m_prompt);
  apply(f.price_completion, c.cost.price_per_1m_completion);
  apply(f.prompt_dir, c.prompt_dir);
  if (f.stop_after) c.stop_after = f.stop_after;
  c.fresh = f.fresh;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Solidity function-completion benchmark and retrieval-augmented repair"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sh::harness_version());

  // build
  sh::BuildOptions build;
  bool no_constructor_state = false;
  auto* cmd_build = app.add_subcommand("build", "Extract, filter and deduplicate a corpus into a task file");
  cmd_build->add_option("--src", build.src_dir, "Directory of .sol files")->required();
  cmd_build->add_option("--out", build.out_task_file, "Task JSONL to write")->required();
  cmd_build->add_option("--stats", build.stats_file, "Stats JSON (default <out>.stats.json)");
  cmd_build->add_option("--mint-identifiers", build.filter.mint_identifiers, "Callee names treated as minting")
      ->delimiter(',');
  cmd_build->add_option("--owner-modifier-pattern", build.filter.owner_modifier_pattern);
  cmd_build->add_option("--owner-identifier-pattern", build.filter.owner_identifier_pattern);
  cmd_build->add_flag("--no-constructor-state", no_constructor_state,
                      "Keep functions that read constructor-assigned state");

  // run
  RunFlags rf;
  auto* cmd_run = app.add_subcommand("run", "Complete (and optionally repair) every task");
  cmd_run->add_option("--config", rf.config_file, "Run config JSON; flags override it");
  cmd_run->add_option("--label", rf.label, "Row label in reports");
  cmd_run->add_option("--tasks", rf.tasks, "Task JSONL from `build`");
  cmd_run->add_option("--source-root", rf.source_root, "Directory holding the task sources");
  cmd_run->add_option("--out", rf.out, "Run directory");
  cmd_run->add_option("--budget", rf.budget, "Context budget in tokens");
  cmd_run->add_option("--counter", rf.counter, "Token counter: approx | whitespace");
  cmd_run->add_option("--model", rf.model, "Model name");
  cmd_run->add_option("--model-url", rf.model_url, "Chat-completions endpoint");
  cmd_run->add_option("--api-key-env", rf.api_key_env, "Environment variable holding the API key");
  cmd_run->add_option("--mock-client", rf.mock_client, "Scripted completions fixture");
  cmd_run->add_option("--temperature", rf.temperature);
  cmd_run->add_option("--model-timeout", rf.model_timeout, "Seconds per model request");
  cmd_run->add_option("--rpm", rf.rpm, "Model requests per minute (0: unlimited)");
  cmd_run->add_option("--max-tokens", rf.max_tokens, "Completion token limit per call");
  cmd_run->add_option("--retries", rf.retries, "Extra tries after a failed model call");
  cmd_run->add_option("--executor", rf.executor, "compile | differential | mock");
  cmd_run->add_option("--mock-executor", rf.mock_executor, "Scripted executor fixture");
  cmd_run->add_option("--solc", rf.solc, "Compiler binary");
  cmd_run->add_option("--fuzzer", rf.fuzzer, "Differential fuzzer command line");
  cmd_run->add_option("--executor-timeout", rf.executor_timeout, "Seconds per verification");
  cmd_run->add_option("--retrieval", rf.retrieval, "none | lcs | bm25 | tfidf | jaccard | dense");
  cmd_run->add_option("--window-lines", rf.window_lines);
  cmd_run->add_option("--step-lines", rf.step_lines);
  cmd_run->add_option("--max-snippets", rf.max_snippets);
  cmd_run->add_option("--bm25-k1", rf.bm25_k1);
  cmd_run->add_option("--bm25-b", rf.bm25_b);
  cmd_run->add_option("--lcs-min-length", rf.lcs_min_length);
  cmd_run->add_option("--embedding-url", rf.embedding_url, "Embedding endpoint for dense retrieval");
  cmd_run->add_option("--embedding-dim", rf.embedding_dim);
  cmd_run->add_option("--strategy", rf.strategy, "self_edit | self_debug | self_refine | self_repair");
  cmd_run->add_option("--max-rounds", rf.max_rounds, "Repair rounds after the first completion");
  cmd_run->add_option("--k", rf.k_values, "pass@k values")->delimiter(',');
  cmd_run->add_option("--samples", rf.samples, "Samples per task");
  cmd_run->add_option("--workers", rf.workers, "Concurrent sessions");
  cmd_run->add_option("--seed", rf.seed);
  cmd_run->add_option("--price-prompt", rf.price_prompt, "USD per 1M prompt tokens");
  cmd_run->add_option("--price-completion", rf.price_completion, "USD per 1M completion tokens");
  cmd_run->add_option("--prompt-dir", rf.prompt_dir, "Prompt template directory");
  cmd_run->add_option("--stop-after", rf.stop_after, "Stop after this many sessions");
  cmd_run->add_flag("--fresh", rf.fresh, "Discard an existing run in --out");

  // report
  sh::ReportOptions report;
  bool quiet = false;
  auto* cmd_report = app.add_subcommand("report", "Metrics tables over finished runs");
  cmd_report->add_option("runs", report.inputs, "Run directories or outcomes files")->required();
  cmd_report->add_option("--k", report.k_values, "pass@k values")->delimiter(',');
  cmd_report->add_option("--out", report.out_dir, "Directory for report.txt/json and cost_points.csv");
  cmd_report->add_option("--price-prompt", report.cost.price_per_1m_prompt, "USD per 1M prompt tokens");
  cmd_report->add_option("--price-completion", report.cost.price_per_1m_completion,
                         "USD per 1M completion tokens");
  cmd_report->add_option("--trivial-ngrams", report.trivial_ngrams, "CrystalBLEU trivially shared n-grams");
  cmd_report->add_flag("--quiet", quiet, "Do not print the table");

  // verify
  sh::VerifyOptions verify;
  std::optional<std::string> v_fuzzer, v_backend;
  auto* cmd_verify = app.add_subcommand("verify", "Run the executor on reference or given bodies");
  cmd_verify->add_option("--tasks", verify.task_file, "Task JSONL")->required();
  cmd_verify->add_option("--source-root", verify.source_root);
  cmd_verify->add_option("--task-id", verify.task_id, "Only this task");
  cmd_verify->add_option("--body", verify.body_file, "File holding the body (or reply) to verify");
  cmd_verify->add_option("--executor", v_backend, "compile | differential | mock");
  cmd_verify->add_option("--mock-executor", verify.executor.mock_file, "Scripted executor fixture");
  cmd_verify->add_option("--solc", verify.executor.solc);
  cmd_verify->add_option("--fuzzer", v_fuzzer, "Differential fuzzer command line");
  cmd_verify->add_option("--executor-timeout", verify.executor.timeout_seconds);
  cmd_verify->add_option("--seed", verify.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : sh::kExitConfig;
  }

  try {
    if (*cmd_build) {
      build.filter.constructor_state = !no_constructor_state;
      auto r = sh::cmd_build(build);
      std::cout << "extracted " << r.total_extracted << ", retained " << r.retained << ", duplicates removed "
                << r.dedup_removed << "\n";
      return sh::kExitClean;
    }
    if (*cmd_run) {
      auto result = sh::cmd_run(run_config(rf));
      std::cerr << "sessions run: " << result.sessions_run
                << ", incomplete tasks: " << result.manifest.incomplete_tasks.size()
                << (result.manifest.interrupted ? " (stopped early)" : "") << "\n";
      return result.exit_code;
    }
    if (*cmd_report) {
      auto r = sh::cmd_report(report);
      if (!quiet) std::cout << r.table;
      return sh::kExitClean;
    }
    if (*cmd_verify) {
      if (v_fuzzer) verify.executor.command = split_command(*v_fuzzer);
      if (v_backend) {
        verify.executor.backend = *v_backend;
      } else if (!verify.executor.mock_file.empty()) {
        verify.executor.backend = "mock";
      } else if (v_fuzzer) {
        verify.executor.backend = "differential";
      }
      return sh::cmd_verify(verify, std::cout);
    }
  } catch (const solrepair::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return sh::kExitConfig;
  } catch (const solrepair::MalformedRecord& e) {
    std::cerr << "bad input: " << e.what() << "\n";
    return sh::kExitConfig;
  } catch (const solrepair::MalformedSource& e) {
    std::cerr << "bad source: " << e.what() << "\n";
    return sh::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sh::kExitFailure;
  }
  return sh::kExitFailure;
}
