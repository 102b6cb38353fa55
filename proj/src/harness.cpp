#include "solrepair/harness.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "solrepair/context.hpp"
#include "solrepair/error.hpp"
#include "solrepair/serialize.hpp"

#ifndef SOLREPAIR_VERSION
#define SOLREPAIR_VERSION "dev"
#endif

namespace solrepair::harness {

namespace fs = std::filesystem;

std::string harness_version() { return SOLREPAIR_VERSION; }

namespace {

std::string utc_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string default_source_root(const std::string& task_file) {
  fs::path p = fs::path(task_file).parent_path();
  return p.empty() ? std::string(".") : p.string();
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is empty");
  if (!fs::is_regular_file(path)) throw ConfigError(what + " not found: " + path);
}

}  // namespace

// ---------------------------------------------------------------------------
// build

corpus::FilterReport cmd_build(const BuildOptions& options) {
  if (!fs::is_directory(options.src_dir)) {
    throw ConfigError("source directory not found: " + options.src_dir);
  }
  std::vector<std::string> rel_paths;
  for (const auto& entry : fs::recursive_directory_iterator(options.src_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".sol") {
      rel_paths.push_back(fs::relative(entry.path(), options.src_dir).generic_string());
    }
  }
  std::sort(rel_paths.begin(), rel_paths.end());

  std::vector<corpus::SourceFile> files;
  std::vector<std::pair<std::string, std::string>> skipped;
  for (const auto& rel : rel_paths) {
    std::string text = io::read_file((fs::path(options.src_dir) / rel).string());
    try {
      files.push_back(corpus::SourceFile::from_text(rel, std::move(text)));
    } catch (const MalformedSource& e) {
      skipped.emplace_back(rel, e.what());
    }
  }
  corpus::DatasetBuild build = corpus::build_dataset(files, options.filter);
  skipped.insert(skipped.end(), build.skipped.begin(), build.skipped.end());

  std::string tasks;
  for (const auto& r : build.records) tasks += io::dump_line(io::to_json(r));
  fs::path out(options.out_task_file);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_file_atomic(options.out_task_file, tasks);

  json skipped_json = json::array();
  for (const auto& [path, why] : skipped) skipped_json.push_back({{"path", path}, {"error", why}});
  json stats = {{"schema", io::kBuildStatsSchema},
                {"files", rel_paths.size()},
                {"report", io::to_json(build.report)},
                {"skipped", std::move(skipped_json)}};
  std::string stats_path =
      options.stats_file.empty() ? options.out_task_file + ".stats.json" : options.stats_file;
  io::write_file_atomic(stats_path, stats.dump(2) + "\n");
  return build.report;
}

// ---------------------------------------------------------------------------
// config

void RunConfig::validate() const {
  require_file(task_file, "task file");
  std::string root = source_root.empty() ? default_source_root(task_file) : source_root;
  if (!fs::is_directory(root)) throw ConfigError("source root not found: " + root);
  if (out_dir.empty()) throw ConfigError("output directory is required");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (samples < 1) throw ConfigError("samples must be >= 1");
  if (max_rounds < 0) throw ConfigError("max_rounds must be >= 0");
  if (budget_tokens < 0) throw ConfigError("context budget must be >= 0");
  context::make_counter(counter);
  for (int k : k_values) {
    if (k < 1) throw ConfigError("k values must be >= 1");
  }
  try {
    cost.validate();
    if (retrieval.enabled) retrieval.config.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (!model.mock_client.empty()) {
    require_file(model.mock_client, "mock client fixture");
  } else if (model.url.empty()) {
    throw ConfigError("no model endpoint: pass --model-url or --mock-client");
  }
  if (executor.backend == "mock") {
    require_file(executor.mock_file, "mock executor fixture");
  } else if (executor.backend == "differential") {
    if (executor.command.empty()) throw ConfigError("differential backend needs --fuzzer");
  } else if (executor.backend != "compile") {
    throw ConfigError("unknown executor backend: " + executor.backend);
  }
  if (!prompt_dir.empty() && !fs::is_directory(prompt_dir)) {
    throw ConfigError("prompt directory not found: " + prompt_dir);
  }
}

json RunConfig::to_json() const {
  json retrieval_json = nullptr;
  if (retrieval.enabled) {
    const auto& r = retrieval.config;
    retrieval_json = {{"method", retrieval::to_string(r.method)},
                      {"window_lines", r.window_lines},
                      {"step_lines", r.step_lines},
                      {"max_snippets", r.max_snippets},
                      {"bm25_k1", r.bm25_k1},
                      {"bm25_b", r.bm25_b},
                      {"lcs_min_length", r.lcs_min_length},
                      {"embedding_url", retrieval.embedding_url},
                      {"embedding_dim", retrieval.embedding_dim}};
  }
  return {
      {"schema", io::kRunConfigSchema},
      {"label", label},
      {"task_file", task_file},
      {"source_root", source_root},
      {"out_dir", out_dir},
      {"context", {{"budget_tokens", budget_tokens}, {"counter", counter}}},
      {"model",
       {{"name", model.name},
        {"url", model.url},
        {"api_key_env", model.api_key_env},
        {"mock_client", model.mock_client},
        {"temperature", model.temperature},
        {"timeout_seconds", model.timeout_seconds},
        {"requests_per_minute", model.requests_per_minute},
        {"max_tokens", model.max_tokens},
        {"retries", model.retries}}},
      {"executor",
       {{"backend", executor.backend},
        {"mock_file", executor.mock_file},
        {"solc", executor.solc},
        {"command", executor.command},
        {"timeout_seconds", executor.timeout_seconds}}},
      {"retrieval", retrieval_json},
      {"repair", {{"strategy", repair::to_string(strategy)}, {"max_rounds", max_rounds}}},
      {"k_values", k_values},
      {"samples", samples},
      {"workers", workers},
      {"seed", seed},
      {"cost",
       {{"price_per_1m_prompt", cost.price_per_1m_prompt},
        {"price_per_1m_completion", cost.price_per_1m_completion}}},
      {"prompt_dir", prompt_dir},
  };
}

RunConfig RunConfig::from_json(const json& doc) {
  if (doc.contains("schema")) io::expect_schema(doc, io::kRunConfigSchema);
  RunConfig c;
  try {
    c.label = doc.value("label", c.label);
    c.task_file = doc.value("task_file", c.task_file);
    c.source_root = doc.value("source_root", c.source_root);
    c.out_dir = doc.value("out_dir", c.out_dir);
    if (doc.contains("context")) {
      const auto& x = doc["context"];
      c.budget_tokens = x.value("budget_tokens", c.budget_tokens);
      c.counter = x.value("counter", c.counter);
    }
    if (doc.contains("model")) {
      const auto& x = doc["model"];
      auto& m = c.model;
      m.name = x.value("name", m.name);
      m.url = x.value("url", m.url);
      m.api_key_env = x.value("api_key_env", m.api_key_env);
      m.mock_client = x.value("mock_client", m.mock_client);
      m.temperature = x.value("temperature", m.temperature);
      m.timeout_seconds = x.value("timeout_seconds", m.timeout_seconds);
      m.requests_per_minute = x.value("requests_per_minute", m.requests_per_minute);
      m.max_tokens = x.value("max_tokens", m.max_tokens);
      m.retries = x.value("retries", m.retries);
    }
    if (doc.contains("executor")) {
      const auto& x = doc["executor"];
      auto& e = c.executor;
      e.backend = x.value("backend", e.backend);
      e.mock_file = x.value("mock_file", e.mock_file);
      e.solc = x.value("solc", e.solc);
      e.command = x.value("command", e.command);
      e.timeout_seconds = x.value("timeout_seconds", e.timeout_seconds);
    }
    if (doc.contains("retrieval") && !doc["retrieval"].is_null()) {
      const auto& x = doc["retrieval"];
      auto& r = c.retrieval.config;
      c.retrieval.enabled = true;
      r.method = retrieval::method_from_string(x.value("method", "lcs"));
      r.window_lines = x.value("window_lines", r.window_lines);
      r.step_lines = x.value("step_lines", r.step_lines);
      r.max_snippets = x.value("max_snippets", r.max_snippets);
      r.bm25_k1 = x.value("bm25_k1", r.bm25_k1);
      r.bm25_b = x.value("bm25_b", r.bm25_b);
      r.lcs_min_length = x.value("lcs_min_length", r.lcs_min_length);
      c.retrieval.embedding_url = x.value("embedding_url", c.retrieval.embedding_url);
      c.retrieval.embedding_dim = x.value("embedding_dim", c.retrieval.embedding_dim);
    }
    if (doc.contains("repair")) {
      const auto& x = doc["repair"];
      c.strategy = repair::strategy_from_string(x.value("strategy", "self_edit"));
      c.max_rounds = x.value("max_rounds", c.max_rounds);
    }
    c.k_values = doc.value("k_values", c.k_values);
    c.samples = doc.value("samples", c.samples);
    c.workers = doc.value("workers", c.workers);
    c.seed = doc.value("seed", c.seed);
    if (doc.contains("cost")) {
      c.cost.price_per_1m_prompt = doc["cost"].value("price_per_1m_prompt", c.cost.price_per_1m_prompt);
      c.cost.price_per_1m_completion =
          doc["cost"].value("price_per_1m_completion", c.cost.price_per_1m_completion);
    }
    c.prompt_dir = doc.value("prompt_dir", c.prompt_dir);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json RunConfig::identity() const {
  json j = to_json();
  for (const char* key : {"workers", "out_dir", "label", "k_values", "cost"}) j.erase(key);
  j["model"].erase("requests_per_minute");
  j["model"].erase("timeout_seconds");
  j["executor"].erase("timeout_seconds");
  return j;
}

json RunManifest::to_json() const {
  return {{"schema", io::kManifestSchema},
          {"config", config},
          {"started_at", started_at},
          {"finished_at", finished_at},
          {"versions", versions},
          {"tasks_total", tasks_total},
          {"incomplete_tasks", incomplete_tasks},
          {"interrupted", interrupted},
          {"outcome_index", outcome_index}};
}

RunManifest RunManifest::from_json(const json& doc) {
  io::expect_schema(doc, io::kManifestSchema);
  RunManifest m;
  try {
    m.config = doc.at("config");
    m.started_at = doc.value("started_at", "");
    m.finished_at = doc.value("finished_at", "");
    m.versions = doc.value("versions", json::object());
    m.tasks_total = doc.value("tasks_total", std::size_t{0});
    m.incomplete_tasks = doc.value("incomplete_tasks", std::vector<std::string>{});
    m.interrupted = doc.value("interrupted", false);
    m.outcome_index = doc.value("outcome_index", std::map<std::string, std::size_t>{});
  } catch (const json::exception& e) {
    throw MalformedRecord(std::string("bad manifest: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// factories

namespace {

class RateLimitedClient final : public repair::ModelClient {
 public:
  RateLimitedClient(std::unique_ptr<repair::ModelClient> inner, double per_minute)
      : inner_(std::move(inner)), limiter_(per_minute) {}
  std::string name() const override { return inner_->name(); }
  repair::Completion complete(const repair::CompletionRequest& request) override {
    limiter_.acquire();
    return inner_->complete(request);
  }

 private:
  std::unique_ptr<repair::ModelClient> inner_;
  repair::RateLimiter limiter_;
};

/// Serializes a backend that cannot verify concurrently.
class LockedExecutor final : public executor::ExecutorBackend {
 public:
  explicit LockedExecutor(executor::ExecutorBackend& inner) : inner_(inner) {}
  std::string name() const override { return inner_.name(); }
  std::string version() override {
    std::lock_guard lock(mutex_);
    return inner_.version();
  }
  executor::ExecutionVerdict verify(const executor::VerifyRequest& request) override {
    std::lock_guard lock(mutex_);
    return inner_.verify(request);
  }

 private:
  executor::ExecutorBackend& inner_;
  std::mutex mutex_;
};

class LockedProvider final : public retrieval::EmbeddingProvider {
 public:
  explicit LockedProvider(retrieval::EmbeddingProvider& inner) : inner_(inner) {}
  std::string name() const override { return inner_.name(); }
  std::size_t dimension() const override { return inner_.dimension(); }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override {
    std::lock_guard lock(mutex_);
    return inner_.embed(texts);
  }
  bool concurrent() const override { return true; }

 private:
  retrieval::EmbeddingProvider& inner_;
  std::mutex mutex_;
};

std::chrono::milliseconds to_ms(double seconds) {
  return std::chrono::milliseconds(static_cast<std::int64_t>(std::llround(seconds * 1000.0)));
}

}  // namespace

std::unique_ptr<repair::ModelClient> make_client(const ModelSettings& s) {
  std::unique_ptr<repair::ModelClient> client;
  if (!s.mock_client.empty()) {
    client = std::make_unique<repair::ScriptedClient>(repair::ScriptedClient::from_file(s.mock_client));
  } else {
    repair::HttpChatClient::Options o;
    o.url = s.url;
    o.model = s.name;
    o.api_key_env = s.api_key_env;
    o.temperature = s.temperature;
    o.timeout_seconds = s.timeout_seconds;
    client = std::make_unique<repair::HttpChatClient>(o);
  }
  if (s.requests_per_minute > 0) {
    client = std::make_unique<RateLimitedClient>(std::move(client), s.requests_per_minute);
  }
  return client;
}

std::unique_ptr<executor::ExecutorBackend> make_executor(const ExecutorSettings& s,
                                                         std::uint64_t seed) {
  if (s.backend == "mock") {
    return std::make_unique<executor::MockExecutor>(executor::MockExecutor::from_file(s.mock_file));
  }
  auto compiler = std::make_unique<executor::SolcCompiler>(s.solc, to_ms(s.timeout_seconds));
  if (s.backend == "compile") {
    return std::make_unique<executor::CompileOnlyExecutor>(std::move(compiler));
  }
  if (s.backend == "differential") {
    executor::DifferentialExecutor::Options o;
    o.command = s.command;
    o.timeout = to_ms(s.timeout_seconds);
    o.seed = seed;
    return std::make_unique<executor::DifferentialExecutor>(o, std::move(compiler));
  }
  throw ConfigError("unknown executor backend: " + s.backend);
}

std::unique_ptr<retrieval::EmbeddingProvider> make_provider(const RetrievalSettings& s) {
  if (!s.enabled || s.config.method != retrieval::Method::Dense) return nullptr;
  if (s.embedding_url.empty()) {
    return std::make_unique<retrieval::HashingEmbeddingProvider>(
        static_cast<std::size_t>(std::max(1, s.embedding_dim)));
  }
  return std::make_unique<retrieval::HttpEmbeddingProvider>(
      s.embedding_url, static_cast<std::size_t>(std::max(0, s.embedding_dim)));
}

std::vector<repair::CompletionTask> load_tasks(const std::string& task_file,
                                               const std::string& source_root,
                                               std::int64_t budget, const std::string& counter_name) {
  auto counter = context::make_counter(counter_name);
  std::string root = source_root.empty() ? default_source_root(task_file) : source_root;
  std::map<std::string, corpus::SourceFile> sources;
  std::vector<repair::CompletionTask> tasks;
  std::set<std::string> ids;
  for (auto& record : io::read_tasks(task_file)) {
    auto it = sources.find(record.source_id);
    if (it == sources.end()) {
      fs::path p = fs::path(root) / record.source_id;
      if (!fs::is_regular_file(p)) {
        throw ConfigError("source of task " + record.id() + " not found: " + p.string());
      }
      it = sources.emplace(record.source_id,
                           corpus::SourceFile::from_text(record.source_id, io::read_file(p.string())))
               .first;
    }
    if (!ids.insert(record.id()).second) throw ConfigError("duplicate task id " + record.id());
    repair::CompletionTask task;
    task.window = context::build_context(it->second, record, budget, *counter);
    task.oracle_source = it->second.text;
    task.record = std::move(record);
    tasks.push_back(std::move(task));
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// run

namespace {

constexpr const char* kLogFile = "sessions.log.jsonl";
constexpr const char* kSessionsFile = "sessions.jsonl";
constexpr const char* kOutcomesFile = "outcomes.jsonl";
constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kConfigFile = "config.json";

/// Append-only log shared by the workers. Each line goes out in one
/// write(2) so a killed process leaves at most one torn line.
class SessionLog {
 public:
  explicit SessionLog(const std::string& path) {
    trim_torn_tail(path);
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw ConfigError("cannot open " + path);
  }
  ~SessionLog() {
    if (fd_ >= 0) ::close(fd_);
  }
  SessionLog(const SessionLog&) = delete;
  SessionLog& operator=(const SessionLog&) = delete;

  void append(const std::string& line) {
    std::lock_guard lock(mutex_);
    std::size_t done = 0;
    while (done < line.size()) {
      ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error("session log write failed");
      }
      done += static_cast<std::size_t>(n);
    }
  }

 private:
  static void trim_torn_tail(const std::string& path) {
    if (!fs::exists(path)) return;
    std::string text = io::read_file(path);
    if (text.empty() || text.back() == '\n') return;
    std::size_t keep = text.rfind('\n');
    fs::resize_file(path, keep == std::string::npos ? 0 : keep + 1);
  }

  int fd_ = -1;
  std::mutex mutex_;
};

using SessionKey = std::pair<std::string, int>;

std::map<SessionKey, json> load_log(const std::string& path) {
  std::map<SessionKey, json> latest;
  if (!fs::exists(path)) return latest;
  for (auto& doc : io::read_jsonl(path)) {
    io::expect_schema(doc, io::kSessionSchema);
    SessionKey key{doc.at("task_id").get<std::string>(), doc.at("sample_index").get<int>()};
    latest[key] = std::move(doc);
  }
  return latest;
}

bool is_done(const json& session) {
  return !executor::is_infrastructure(
      executor::status_from_string(session.at("final_status").get<std::string>()));
}

json outcome_json(const repair::CompletionTask& task,
                  const std::vector<repair::RepairSession>& samples) {
  metrics::TaskOutcome o = repair::outcome_of(task.id(), samples);
  json per_sample = json::array();
  metrics::StageUsage stages;
  metrics::Usage total;
  for (const auto& s : samples) {
    per_sample.push_back({{"sample_index", s.sample_index},
                          {"status", executor::to_string(s.final_status)},
                          {"attempts", s.attempts.size()},
                          {"body", s.final_body()}});
    for (const auto& [stage, u] : s.stage_usage()) stages[stage] += u;
    total += s.usage();
  }
  json stage_json = json::object();
  for (const auto& [stage, u] : stages) stage_json[stage] = io::to_json(u);
  return {{"schema", io::kOutcomeSchema},
          {"task_id", o.task_id},
          {"n", o.n},
          {"c", o.c},
          {"c_compile", o.c_compile},
          {"samples", std::move(per_sample)},
          {"reference", task.record.body},
          {"usage", io::to_json(total)},
          {"stage_usage", std::move(stage_json)}};
}

}  // namespace

RunResult cmd_run(const RunConfig& config) {
  config.validate();
  RunResult result;
  RunManifest& manifest = result.manifest;
  manifest.started_at = utc_now();
  manifest.config = config.to_json();

  const fs::path out(config.out_dir);
  fs::create_directories(out);
  const std::string log_path = (out / kLogFile).string();
  const std::string config_path = (out / kConfigFile).string();

  if (config.fresh) {
    for (const char* f : {kLogFile, kSessionsFile, kOutcomesFile, kManifestFile, kConfigFile}) {
      fs::remove(out / f);
    }
  } else if (fs::exists(config_path)) {
    RunConfig previous = RunConfig::from_json(json::parse(io::read_file(config_path)));
    if (previous.identity() != config.identity()) {
      throw ConfigError(config.out_dir +
                        " holds a run with a different configuration; pass --fresh to replace it");
    }
  }
  io::write_file_atomic(config_path, manifest.config.dump(2) + "\n");

  auto tasks = load_tasks(config.task_file, config.source_root, config.budget_tokens, config.counter);
  manifest.tasks_total = tasks.size();

  std::optional<repair::PromptTemplates> custom_templates;
  if (!config.prompt_dir.empty()) {
    custom_templates = repair::PromptTemplates::from_directory(config.prompt_dir);
  }
  const repair::PromptTemplates templates =
      custom_templates ? *custom_templates : repair::PromptTemplates::builtin();

  auto client = make_client(config.model);
  auto backend_owner = make_executor(config.executor, config.seed);
  std::unique_ptr<executor::ExecutorBackend> locked_backend;
  executor::ExecutorBackend* backend = backend_owner.get();
  if (!backend->concurrent() && config.workers > 1) {
    locked_backend = std::make_unique<LockedExecutor>(*backend);
    backend = locked_backend.get();
  }
  auto provider_owner = make_provider(config.retrieval);
  std::unique_ptr<retrieval::EmbeddingProvider> locked_provider;
  retrieval::EmbeddingProvider* provider = provider_owner.get();
  if (provider != nullptr && !provider->concurrent() && config.workers > 1) {
    locked_provider = std::make_unique<LockedProvider>(*provider);
    provider = locked_provider.get();
  }
  std::optional<retrieval::RetrievalConfig> retrieval_cfg;
  if (config.retrieval.enabled) retrieval_cfg = config.retrieval.config;

  // Completed-session index from earlier invocations.
  auto previous = load_log(log_path);
  struct Work {
    std::size_t task;
    int sample;
  };
  std::vector<Work> pending;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (int s = 0; s < config.samples; ++s) {
      auto it = previous.find({tasks[t].id(), s});
      if (it == previous.end() || !is_done(it->second)) pending.push_back({t, s});
    }
  }

  SessionLog log(log_path);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> finished{0};
  std::mutex error_mutex;
  std::exception_ptr failure;
  const std::size_t limit =
      config.stop_after ? std::min(*config.stop_after, pending.size()) : pending.size();

  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= limit) return;
      {
        std::lock_guard lock(error_mutex);
        if (failure) return;
      }
      const Work& w = pending[i];
      try {
        repair::RarOptions opts;
        opts.max_tokens = config.model.max_tokens;
        opts.sample_index = w.sample;
        opts.seed = config.seed;
        opts.client_retries = config.model.retries;
        opts.templates = &templates;
        opts.provider = provider;
        repair::RepairSession session = repair::run_rar(
            tasks[w.task], *client, *backend, retrieval_cfg, config.strategy, config.max_rounds, opts);
        log.append(io::dump_line(io::to_json(session)));
        finished.fetch_add(1);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  const int n_workers = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(config.workers), std::max<std::size_t>(limit, 1)));
  for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  result.sessions_run = finished.load();
  manifest.interrupted = limit < pending.size();

  // Canonical artifacts: latest log entry per (task, sample), sorted.
  auto latest = load_log(log_path);
  std::vector<std::size_t> order(tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return tasks[a].id() < tasks[b].id(); });

  std::string sessions_text, outcomes_text;
  std::size_t line = 0;
  for (std::size_t t : order) {
    const auto& task = tasks[t];
    std::vector<repair::RepairSession> samples;
    bool complete = true;
    for (int s = 0; s < config.samples; ++s) {
      auto it = latest.find({task.id(), s});
      if (it == latest.end()) {
        complete = false;
        continue;
      }
      if (!is_done(it->second)) complete = false;
      samples.push_back(io::session_from_json(it->second));
      sessions_text += io::dump_line(io::to_json(samples.back(), false));
    }
    if (!complete) manifest.incomplete_tasks.push_back(task.id());
    if (samples.empty()) continue;
    outcomes_text += io::dump_line(outcome_json(task, samples));
    manifest.outcome_index[task.id()] = line++;
  }
  io::write_file_atomic((out / kSessionsFile).string(), sessions_text);
  io::write_file_atomic((out / kOutcomesFile).string(), outcomes_text);

  manifest.versions = {{"harness", harness_version()},
                       {"executor", backend->name() + " " + backend->version()},
                       {"prompts", templates.version()},
                       {"client", client->name()}};
  manifest.finished_at = utc_now();
  io::write_file_atomic((out / kManifestFile).string(), manifest.to_json().dump(2) + "\n");

  if (manifest.interrupted) {
    result.exit_code = kExitInterrupted;
  } else if (!manifest.incomplete_tasks.empty()) {
    result.exit_code = kExitInfra;
  }
  return result;
}

// ---------------------------------------------------------------------------
// report

namespace {

struct RunData {
  std::string label;
  std::optional<std::int64_t> budget;
  std::vector<json> outcomes;
};

RunData load_run(const std::string& input) {
  fs::path p(input);
  fs::path outcomes = fs::is_directory(p) ? p / kOutcomesFile : p;
  fs::path manifest_path = outcomes.parent_path() / kManifestFile;
  require_file(outcomes.string(), "outcomes file");
  RunData run;
  for (auto& doc : io::read_jsonl(outcomes.string())) {
    io::expect_schema(doc, io::kOutcomeSchema);
    run.outcomes.push_back(std::move(doc));
  }
  if (fs::exists(manifest_path)) {
    RunManifest m = RunManifest::from_json(json::parse(io::read_file(manifest_path.string())));
    run.label = m.config.value("label", "");
    if (m.config.contains("context")) {
      run.budget = m.config["context"].value("budget_tokens", std::int64_t{0});
    }
  }
  if (run.label.empty()) {
    run.label = fs::is_directory(p) ? fs::absolute(p).lexically_normal().filename().string()
                                    : outcomes.stem().string();
    if (run.label.empty()) run.label = fs::absolute(p).lexically_normal().parent_path().filename().string();
  }
  return run;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width, bool right) {
  if (s.size() >= width) return s;
  std::string fill(width - s.size(), ' ');
  return right ? fill + s : s + fill;
}

}  // namespace

Report build_report(const ReportOptions& options) {
  if (options.inputs.empty()) throw ConfigError("report needs at least one run");
  for (int k : options.k_values) {
    if (k < 1) throw ConfigError("k values must be >= 1");
  }
  try {
    options.cost.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }

  // Group by (label, budget); outcomes of one group are merged by task id.
  std::map<std::pair<std::string, std::int64_t>, RunData> groups;
  for (const auto& input : options.inputs) {
    RunData run = load_run(input);
    auto key = std::make_pair(run.label, run.budget.value_or(-1));
    auto [it, inserted] = groups.try_emplace(key, RunData{run.label, run.budget, {}});
    for (auto& o : run.outcomes) it->second.outcomes.push_back(std::move(o));
  }

  Report report;
  for (auto& [key, run] : groups) {
    std::sort(run.outcomes.begin(), run.outcomes.end(), [](const json& a, const json& b) {
      return a.at("task_id").get<std::string>() < b.at("task_id").get<std::string>();
    });
    ReportRow row;
    row.label = run.label;
    row.budget = run.budget;
    row.tasks = run.outcomes.size();

    std::vector<metrics::TaskOutcome> outcomes;
    std::vector<std::string> references, candidates;
    for (const auto& o : run.outcomes) {
      metrics::TaskOutcome t{o.at("task_id").get<std::string>(), o.at("n").get<int>(),
                             o.at("c").get<int>(), o.at("c_compile").get<int>()};
      t.validate();
      outcomes.push_back(t);
      row.usage += io::usage_from_json(o.at("usage"));
      metrics::StageUsage stages;
      for (const auto& [stage, u] : o.at("stage_usage").items()) stages[stage] = io::usage_from_json(u);
      row.cost_usd += metrics::cost_of(stages, options.cost).total;
      for (const auto& s : o.at("samples")) {
        if (executor::is_infrastructure(executor::status_from_string(s.at("status").get<std::string>()))) {
          continue;
        }
        references.push_back(o.at("reference").get<std::string>());
        candidates.push_back(s.at("body").get<std::string>());
        break;  // first usable sample per task
      }
    }
    for (int k : options.k_values) {
      bool feasible = std::all_of(outcomes.begin(), outcomes.end(),
                                  [&](const metrics::TaskOutcome& t) { return t.n == 0 || t.n >= k; });
      bool any = std::any_of(outcomes.begin(), outcomes.end(),
                             [](const metrics::TaskOutcome& t) { return t.n > 0; });
      row.pass_at_k[k] = feasible && any ? std::optional<double>(metrics::pass_at_k(outcomes, k))
                                         : std::nullopt;
    }
    bool any = std::any_of(outcomes.begin(), outcomes.end(),
                           [](const metrics::TaskOutcome& t) { return t.n > 0; });
    row.compile_at_1 = any ? metrics::compilation_at_1(outcomes) : 0.0;

    metrics::NgramSet trivial = metrics::trivially_shared_ngrams(references, options.trivial_ngrams);
    metrics::BleuStats plain, crystal;
    for (std::size_t i = 0; i < references.size(); ++i) {
      plain.add(candidates[i], references[i]);
      crystal.add(candidates[i], references[i], &trivial);
    }
    row.bleu = references.empty() ? 0.0 : plain.score();
    row.crystal_bleu = references.empty() ? 0.0 : crystal.score();
    report.rows.push_back(std::move(row));
  }

  // JSON
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json rows = json::array();
  for (const auto& r : report.rows) {
    json pk = json::object();
    for (const auto& [k, v] : r.pass_at_k) pk[std::to_string(k)] = opt(v);
    rows.push_back({{"label", r.label},
                    {"budget", r.budget ? json(*r.budget) : json(nullptr)},
                    {"tasks", r.tasks},
                    {"pass_at_k", std::move(pk)},
                    {"compile_at_1", r.compile_at_1},
                    {"bleu", r.bleu},
                    {"crystal_bleu", r.crystal_bleu},
                    {"usage", io::to_json(r.usage)},
                    {"cost_usd", r.cost_usd}});
  }

  json correlations = json::object();
  const int k1 = 1;
  std::vector<double> p1, bl, cb;
  for (const auto& r : report.rows) {
    auto it = r.pass_at_k.find(k1);
    if (it == r.pass_at_k.end() || !it->second) continue;
    // Correlate the values as tabulated; unrounded scores differ only by
    // smoothing noise when every row has zero matches.
    p1.push_back(metrics::round_half_even(*it->second, 2));
    bl.push_back(metrics::round_half_even(r.bleu, 2));
    cb.push_back(metrics::round_half_even(r.crystal_bleu, 2));
  }
  auto corr = [&](const std::vector<double>& xs) -> json {
    try {
      return metrics::pearson(xs, p1);
    } catch (const UndefinedCorrelation&) {
      return nullptr;
    } catch (const InvalidArgument&) {
      return nullptr;
    }
  };
  correlations["bleu_vs_pass_at_1"] = corr(bl);
  correlations["crystal_bleu_vs_pass_at_1"] = corr(cb);

  struct Point {
    double cost;
    std::string label;
    std::int64_t budget;
    std::optional<double> p1;
  };
  std::vector<Point> points;
  for (const auto& r : report.rows) {
    auto it = r.pass_at_k.find(1);
    points.push_back({r.cost_usd, r.label, r.budget.value_or(-1),
                      it == r.pass_at_k.end() ? std::nullopt : it->second});
  }
  std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) {
    return std::tie(a.cost, a.label, a.budget) < std::tie(b.cost, b.label, b.budget);
  });
  json cost_points = json::array();
  report.cost_csv = "label,budget,cost_usd,pass_at_1\n";
  for (const auto& p : points) {
    cost_points.push_back({{"label", p.label},
                           {"budget", p.budget < 0 ? json(nullptr) : json(p.budget)},
                           {"cost_usd", p.cost},
                           {"pass_at_1", opt(p.p1)}});
    report.cost_csv += p.label + "," + (p.budget < 0 ? std::string() : std::to_string(p.budget)) +
                       "," + fixed(p.cost, 6) + "," +
                       (p.p1 ? metrics::format_percent(*p.p1) : std::string()) + "\n";
  }

  report.doc = {{"schema", io::kReportSchema},
                {"k_values", options.k_values},
                {"cost_model",
                 {{"price_per_1m_prompt", options.cost.price_per_1m_prompt},
                  {"price_per_1m_completion", options.cost.price_per_1m_completion}}},
                {"trivial_ngrams", options.trivial_ngrams},
                {"rows", std::move(rows)},
                {"correlations", std::move(correlations)},
                {"cost_points", std::move(cost_points)}};

  // Text table
  std::vector<std::string> header = {"Model", "Budget", "Tasks"};
  for (int k : options.k_values) header.push_back("P@" + std::to_string(k));
  for (const char* h : {"C@1", "BLEU", "CrystalBLEU", "PromptTok", "ComplTok", "Cost($)"}) {
    header.push_back(h);
  }
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    std::vector<std::string> c = {r.label, r.budget ? std::to_string(*r.budget) : "-",
                                  std::to_string(r.tasks)};
    for (int k : options.k_values) {
      const auto& v = r.pass_at_k.at(k);
      c.push_back(v ? metrics::format_percent(*v) : "n/a");
    }
    c.push_back(metrics::format_percent(r.compile_at_1));
    c.push_back(fixed(r.bleu, 2));
    c.push_back(fixed(r.crystal_bleu, 2));
    c.push_back(std::to_string(r.usage.prompt_tokens));
    c.push_back(std::to_string(r.usage.completion_tokens));
    c.push_back(fixed(r.cost_usd, 4));
    cells.push_back(std::move(c));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto& c : cells) width[i] = std::max(width[i], c[i].size());
  }
  auto emit = [&](const std::vector<std::string>& row) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += "  ";
      line += pad(row[i], width[i], i > 0);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    return line + "\n";
  };
  report.table = emit(header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  report.table += std::string(total + 2 * (width.size() - 1), '-') + "\n";
  for (const auto& c : cells) report.table += emit(c);
  auto corr_text = [](const json& v) { return v.is_null() ? std::string("undefined") : fixed(v.get<double>(), 4); };
  report.table += "\nPearson r (BLEU, P@1): " + corr_text(report.doc["correlations"]["bleu_vs_pass_at_1"]) + "\n";
  report.table += "Pearson r (CrystalBLEU, P@1): " +
                  corr_text(report.doc["correlations"]["crystal_bleu_vs_pass_at_1"]) + "\n";
  return report;
}

Report cmd_report(const ReportOptions& options) {
  Report report = build_report(options);
  if (!options.out_dir.empty()) {
    fs::create_directories(options.out_dir);
    fs::path out(options.out_dir);
    io::write_file_atomic((out / "report.txt").string(), report.table);
    io::write_file_atomic((out / "report.json").string(), report.doc.dump(2) + "\n");
    io::write_file_atomic((out / "cost_points.csv").string(), report.cost_csv);
  }
  return report;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const VerifyOptions& options, std::ostream& out) {
  require_file(options.task_file, "task file");
  if (!options.body_file.empty()) require_file(options.body_file, "body file");
  if (options.executor.backend == "mock") require_file(options.executor.mock_file, "mock executor fixture");
  auto tasks = load_tasks(options.task_file, options.source_root, 0, "approx");
  auto backend = make_executor(options.executor, options.seed);
  std::string body_override;
  if (!options.body_file.empty()) body_override = repair::extract_body(io::read_file(options.body_file));

  bool any_fail = false, any_infra = false, matched = false;
  for (const auto& task : tasks) {
    if (!options.task_id.empty() && task.id() != options.task_id) continue;
    matched = true;
    const std::string& body = options.body_file.empty() ? task.record.body : body_override;
    auto verdict = backend->verify(executor::make_request(task.oracle_source, task.record, body));
    json line = {{"schema", io::kVerdictSchema}, {"task_id", task.id()},
                 {"verdict", io::to_json(verdict, false)}};
    out << io::dump_line(line);
    if (executor::is_infrastructure(verdict.status)) {
      any_infra = true;
    } else if (!verdict.passed()) {
      any_fail = true;
    }
  }
  if (!matched) throw ConfigError("no task matches " + options.task_id);
  if (any_infra) return kExitInfra;
  return any_fail ? kExitFailure : kExitClean;
}

}  // namespace solrepair::harness
