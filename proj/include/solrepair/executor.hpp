#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "solrepair/corpus.hpp"
#include "solrepair/retrieval.hpp"

namespace solrepair::executor {

enum class Status { Pass, CompileError, FunctionalMismatch, ExecutorUnavailable, ClientError };

std::string_view to_string(Status s);
Status status_from_string(std::string_view s);

/// Statuses that reflect infrastructure rather than the model; excluded
/// from every metric denominator.
inline bool is_infrastructure(Status s) {
  return s == Status::ExecutorUnavailable || s == Status::ClientError;
}

/// The five most frequent compiler error families, plus a catch-all.
enum class ErrorKind {
  UndeclaredIdentifier,
  Member,
  IdentifierNotUnique,
  IndexedExpression,
  ImplicitlyConvertible,
  Other
};

std::string_view to_string(ErrorKind k);
ErrorKind error_kind_from_string(std::string_view s);

struct Diagnostic {
  ErrorKind kind = ErrorKind::Other;
  std::string message;
  /// 1-based line within the completed function (signature + body).
  std::optional<int> line;
  std::optional<std::string> identifier;

  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct ExecutionVerdict {
  Status status = Status::Pass;
  std::vector<Diagnostic> diagnostics;
  std::chrono::milliseconds elapsed{0};
  std::string executor_version;
  std::optional<std::uint64_t> seed;

  bool passed() const { return status == Status::Pass; }
  /// Compiled without errors, whatever the functional outcome.
  bool compiled() const {
    return status == Status::Pass || status == Status::FunctionalMismatch;
  }
  friend bool operator==(const ExecutionVerdict&, const ExecutionVerdict&) = default;
};

/// Diagnostics rendered one per line, as shown to the model.
std::string render_diagnostics(const ExecutionVerdict& verdict);

struct ErrorPattern {
  ErrorKind kind;
  std::string regex;  // ECMAScript, case-insensitive
};

std::vector<ErrorPattern> default_error_patterns();

/// Regex-driven classifier over compiler message text. Total: every input
/// maps to exactly one kind, Other when nothing matches.
class ErrorClassifier {
 public:
  explicit ErrorClassifier(std::vector<ErrorPattern> patterns = default_error_patterns());
  Diagnostic classify(std::string_view message) const;

 private:
  std::vector<std::pair<ErrorKind, std::regex>> patterns_;
};

Diagnostic classify_error(std::string_view message);

/// Replaces the target's body in `oracle_source`, leaving every other byte
/// unchanged. Throws MalformedRecord when the span or body cannot be found.
std::string substitute_function(std::string_view oracle_source,
                                const corpus::FunctionRecord& target,
                                std::string_view completed_body);

/// Oracle source with the verification statement injected into the target
/// body, so a differential tester sees the function as modified.
std::string prepare_oracle(std::string_view oracle_source, const corpus::FunctionRecord& target);

enum class QueryPreference {
  /// diagnostic identifier > faulty line > lexed identifiers
  IdentifierFirst,
  /// faulty line > diagnostic identifier > lexed identifiers
  LineFirst,
};

/// Retrieval queries derived from a failed verdict. `completed_function` is
/// the text diagnostic line numbers refer to.
std::vector<retrieval::Query> build_query(const ExecutionVerdict& verdict,
                                          std::string_view completed_function,
                                          QueryPreference preference = QueryPreference::IdentifierFirst);

struct VerifyRequest {
  std::string oracle_source;
  corpus::FunctionRecord target;
  std::string completed_body;
  std::string completed_source;
};

VerifyRequest make_request(std::string oracle_source, corpus::FunctionRecord target,
                           std::string completed_body);

class CompilerBackend {
 public:
  virtual ~CompilerBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string version() = 0;
  virtual ExecutionVerdict compile(std::string_view source) = 0;
};

/// Runs `solc --standard-json` as a subprocess. A missing binary yields
/// executor_unavailable, never compile_error.
class SolcCompiler final : public CompilerBackend {
 public:
  explicit SolcCompiler(std::string binary = "solc",
                        std::chrono::milliseconds timeout = std::chrono::seconds(60),
                        ErrorClassifier classifier = ErrorClassifier());
  std::string name() const override { return "solc"; }
  std::string version() override;
  ExecutionVerdict compile(std::string_view source) override;

  /// Parses a standard-json output document. Diagnostic lines are 1-based
  /// lines of `source`.
  ExecutionVerdict parse_output(std::string_view json_output, std::string_view source) const;

 private:
  std::string binary_;
  std::chrono::milliseconds timeout_;
  ErrorClassifier classifier_;
  std::optional<std::string> version_;
  std::mutex version_mutex_;
};

ExecutionVerdict compile_check(std::string_view source, CompilerBackend& backend);

class ExecutorBackend {
 public:
  virtual ~ExecutorBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string version() = 0;
  virtual ExecutionVerdict verify(const VerifyRequest& request) = 0;
  /// Whether verify may run on several threads at once.
  virtual bool concurrent() const { return true; }
};

/// Pass iff the completed source compiles.
class CompileOnlyExecutor final : public ExecutorBackend {
 public:
  explicit CompileOnlyExecutor(std::unique_ptr<CompilerBackend> compiler);
  std::string name() const override { return "compile-only:" + compiler_->name(); }
  std::string version() override { return compiler_->version(); }
  ExecutionVerdict verify(const VerifyRequest& request) override;

 private:
  std::unique_ptr<CompilerBackend> compiler_;
};

/// External differential fuzzer. The command receives
///   --oracle FILE --completed FILE --contract NAME --function NAME
///   --seed N --timeout SECONDS [extra args...]
/// and reports through its exit code (0 pass, 1 mismatch, 2 compile
/// error, anything else unavailable) plus an optional JSON document on
/// stdout: {"diagnostics":[{"message":...,"line":...}], "seed":N}.
class DifferentialExecutor final : public ExecutorBackend {
 public:
  struct Options {
    std::vector<std::string> command;
    std::vector<std::string> extra_args;
    std::chrono::milliseconds timeout = std::chrono::seconds(60);
    std::uint64_t seed = 0;
    std::string work_dir;  // temp files go here; defaults to TMPDIR
  };

  DifferentialExecutor(Options options, std::unique_ptr<CompilerBackend> compiler = nullptr);
  std::string name() const override;
  std::string version() override;
  ExecutionVerdict verify(const VerifyRequest& request) override;

 private:
  Options options_;
  std::unique_ptr<CompilerBackend> compiler_;
  ErrorClassifier classifier_;
};

/// Scripted stand-in for the differential fuzzer. Per function it holds an
/// input table, the oracle's outputs, and the scripted behaviour of known
/// completions. See docs/formats.md for the fixture schema.
class MockExecutor final : public ExecutorBackend {
 public:
  struct Behavior {
    std::string body;
    std::vector<Diagnostic> compile_errors;
    std::vector<std::string> outputs;
    bool unavailable = false;
  };
  struct Entry {
    std::vector<std::string> inputs;
    std::vector<std::string> expected;
    std::vector<Behavior> behaviors;
  };

  static MockExecutor from_json(const nlohmann::json& doc);
  static MockExecutor from_file(const std::string& path);

  std::string name() const override { return "mock"; }
  std::string version() override { return version_; }
  ExecutionVerdict verify(const VerifyRequest& request) override;

  const Entry* lookup(const corpus::FunctionRecord& target) const;

 private:
  std::string version_ = "mock-1";
  std::map<std::string, Entry> entries_;
};

/// Collapses whitespace runs to one space and trims; mock fixtures compare
/// bodies in this form.
std::string normalize_body(std::string_view body);

/// Body of `target`'s function as it appears in `source` (located by
/// contract, name and start line), if present.
std::optional<std::string> find_body(std::string_view source, const corpus::FunctionRecord& target);

ExecutionVerdict differential_verify(std::string_view oracle_source,
                                     std::string_view completed_source,
                                     const corpus::FunctionRecord& target,
                                     ExecutorBackend& backend);

}  // namespace solrepair::executor
