#include "solrepair/executor.hpp"

#include <stdlib.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "solrepair/error.hpp"
#include "solrepair/lexer.hpp"
#include "solrepair/subprocess.hpp"

namespace solrepair::executor {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::regex& quoted_re() {
  static const std::regex re("\"([^\"]+)\"");
  return re;
}

const std::regex& location_line_re() {
  static const std::regex re(R"(:(\d+):\d+:|\bline (\d+)\b)", std::regex::icase);
  return re;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

int function_first_line(const corpus::FunctionRecord& target) {
  return target.span.start_line +
         static_cast<int>(std::count(target.comment.begin(), target.comment.end(), '\n'));
}

/// Re-bases absolute source lines onto the completed function text.
void rebase_lines(ExecutionVerdict& v, const corpus::FunctionRecord& target,
                  std::string_view completed_body) {
  const int first = function_first_line(target);
  const int count = 1 + static_cast<int>(std::count(target.signature.begin(), target.signature.end(), '\n') +
                                         std::count(completed_body.begin(), completed_body.end(), '\n'));
  for (Diagnostic& d : v.diagnostics) {
    if (!d.line) continue;
    int rel = *d.line - first + 1;
    if (rel >= 1 && rel <= count) d.line = rel;
    else d.line.reset();
  }
}

ExecutionVerdict unavailable(std::string message, std::string version = {}) {
  ExecutionVerdict v;
  v.status = Status::ExecutorUnavailable;
  v.diagnostics.push_back({ErrorKind::Other, std::move(message), std::nullopt, std::nullopt});
  v.executor_version = std::move(version);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

std::string_view to_string(Status s) {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::CompileError: return "compile_error";
    case Status::FunctionalMismatch: return "functional_mismatch";
    case Status::ExecutorUnavailable: return "executor_unavailable";
    case Status::ClientError: return "client_error";
  }
  return "unknown";
}

Status status_from_string(std::string_view s) {
  for (Status st : {Status::Pass, Status::CompileError, Status::FunctionalMismatch,
                    Status::ExecutorUnavailable, Status::ClientError}) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown verdict status: " + std::string(s));
}

std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::UndeclaredIdentifier: return "UndeclaredIdentifier";
    case ErrorKind::Member: return "Member";
    case ErrorKind::IdentifierNotUnique: return "IdentifierNotUnique";
    case ErrorKind::IndexedExpression: return "IndexedExpression";
    case ErrorKind::ImplicitlyConvertible: return "ImplicitlyConvertible";
    case ErrorKind::Other: return "Other";
  }
  return "Other";
}

ErrorKind error_kind_from_string(std::string_view s) {
  for (ErrorKind k : {ErrorKind::UndeclaredIdentifier, ErrorKind::Member,
                      ErrorKind::IdentifierNotUnique, ErrorKind::IndexedExpression,
                      ErrorKind::ImplicitlyConvertible, ErrorKind::Other}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown error kind: " + std::string(s));
}

std::string render_diagnostics(const ExecutionVerdict& verdict) {
  std::string out;
  for (const Diagnostic& d : verdict.diagnostics) {
    if (d.line) out += "line " + std::to_string(*d.line) + ": ";
    out += d.message;
    out += '\n';
  }
  return out;
}

std::vector<ErrorPattern> default_error_patterns() {
  return {
      {ErrorKind::UndeclaredIdentifier, R"(undeclared identifier)"},
      {ErrorKind::Member, R"(\bmember\b[^\n]*(not found|not visible|lookup))"},
      {ErrorKind::IdentifierNotUnique, R"(identifier not unique)"},
      {ErrorKind::IndexedExpression, R"(indexed expression)"},
      {ErrorKind::ImplicitlyConvertible, R"(implicitly convertible)"},
  };
}

ErrorClassifier::ErrorClassifier(std::vector<ErrorPattern> patterns) {
  for (auto& p : patterns) {
    try {
      patterns_.emplace_back(p.kind, std::regex(p.regex, std::regex::icase));
    } catch (const std::regex_error& e) {
      throw ConfigError("bad error pattern '" + p.regex + "': " + e.what());
    }
  }
}

Diagnostic ErrorClassifier::classify(std::string_view message) const {
  Diagnostic d;
  d.message = std::string(message);
  for (const auto& [kind, re] : patterns_) {
    if (std::regex_search(d.message, re)) {
      d.kind = kind;
      break;
    }
  }
  // Quotes after "Did you mean" are suggestions, not the offending name.
  std::string head = d.message;
  auto hint = head.find("Did you mean");
  if (hint != std::string::npos) head.resize(hint);
  std::smatch m;
  if (std::regex_search(head, m, quoted_re())) d.identifier = m[1].str();
  if (std::regex_search(d.message, m, location_line_re())) {
    d.line = std::stoi(m[1].matched ? m[1].str() : m[2].str());
  }
  return d;
}

Diagnostic classify_error(std::string_view message) {
  static const ErrorClassifier classifier;
  return classifier.classify(message);
}

std::string substitute_function(std::string_view oracle_source,
                                const corpus::FunctionRecord& target,
                                std::string_view completed_body) {
  lex::LineIndex lines(oracle_source);
  if (target.span.start_line < 1 || target.span.end_line < target.span.start_line ||
      static_cast<std::size_t>(target.span.end_line) > lines.line_count()) {
    throw MalformedRecord("span " + std::to_string(target.span.start_line) + "-" +
                          std::to_string(target.span.end_line) + " outside source for " +
                          target.id());
  }
  std::size_t begin = lines.line_begin(static_cast<std::size_t>(target.span.start_line));
  std::size_t end = lines.line_begin(static_cast<std::size_t>(target.span.end_line) + 1);
  std::string_view region = oracle_source.substr(begin, end - begin);
  std::size_t from = region.find(target.signature);
  from = from == std::string_view::npos ? 0 : from + target.signature.size();
  std::size_t at = region.find(target.body, from);
  if (at == std::string_view::npos || target.body.empty()) {
    throw MalformedRecord("target body not found within its span: " + target.id());
  }
  std::string out;
  out.reserve(oracle_source.size() + completed_body.size());
  out.append(oracle_source.substr(0, begin + at));
  out.append(completed_body);
  out.append(oracle_source.substr(begin + at + target.body.size()));
  return out;
}

std::string prepare_oracle(std::string_view oracle_source, const corpus::FunctionRecord& target) {
  return substitute_function(oracle_source, target,
                             corpus::inject_verification_statement(target).body);
}

std::vector<retrieval::Query> build_query(const ExecutionVerdict& verdict,
                                          std::string_view completed_function,
                                          QueryPreference preference) {
  std::optional<std::string> ident;
  std::optional<std::string> line_text;
  auto lines = std::vector<std::string>();
  {
    std::size_t start = 0;
    while (start <= completed_function.size()) {
      std::size_t nl = completed_function.find('\n', start);
      if (nl == std::string_view::npos) nl = completed_function.size();
      lines.emplace_back(completed_function.substr(start, nl - start));
      start = nl + 1;
    }
  }
  for (const Diagnostic& d : verdict.diagnostics) {
    if (!ident && d.identifier && !d.identifier->empty()) ident = d.identifier;
    if (!line_text && d.line && *d.line >= 1 && static_cast<std::size_t>(*d.line) <= lines.size()) {
      std::string t = trim(lines[static_cast<std::size_t>(*d.line) - 1]);
      if (!t.empty()) line_text = t;
    }
  }
  if (preference == QueryPreference::LineFirst && line_text) {
    return {retrieval::Query::line(*line_text)};
  }
  if (ident) return {retrieval::Query::identifier(*ident)};
  if (line_text) return {retrieval::Query::line(*line_text)};
  std::vector<retrieval::Query> out;
  for (auto& id : lex::code_identifiers(completed_function)) {
    out.push_back(retrieval::Query::identifier(std::move(id)));
  }
  return out;
}

VerifyRequest make_request(std::string oracle_source, corpus::FunctionRecord target,
                           std::string completed_body) {
  VerifyRequest r;
  r.completed_source = substitute_function(oracle_source, target, completed_body);
  r.oracle_source = std::move(oracle_source);
  r.target = std::move(target);
  r.completed_body = std::move(completed_body);
  return r;
}

SolcCompiler::SolcCompiler(std::string binary, std::chrono::milliseconds timeout,
                           ErrorClassifier classifier)
    : binary_(std::move(binary)), timeout_(timeout), classifier_(std::move(classifier)) {}

std::string SolcCompiler::version() {
  std::lock_guard lock(version_mutex_);
  if (version_) return *version_;
  auto res = run_process({binary_, "--version"}, "", timeout_);
  std::string v = "unavailable";
  if (!res.spawn_failed && res.exit_code == 0) {
    auto pos = res.out.find("Version:");
    v = trim(pos == std::string::npos ? res.out : res.out.substr(pos + 8));
    auto nl = v.find('\n');
    if (nl != std::string::npos) v.resize(nl);
  }
  version_ = "solc " + v;
  return *version_;
}

ExecutionVerdict SolcCompiler::parse_output(std::string_view json_output,
                                            std::string_view source) const {
  ExecutionVerdict v;
  json doc;
  try {
    doc = json::parse(json_output);
  } catch (const json::exception& e) {
    return unavailable(std::string("unparseable compiler output: ") + e.what());
  }
  lex::LineIndex lines(source);
  for (const auto& err : doc.value("errors", json::array())) {
    if (err.value("severity", "error") != "error") continue;
    std::string type = err.value("type", "Error");
    Diagnostic d = classifier_.classify(type + ": " + err.value("message", ""));
    if (err.contains("sourceLocation")) {
      const auto& loc = err["sourceLocation"];
      auto start = loc.value("start", -1);
      auto end = loc.value("end", -1);
      if (start >= 0 && static_cast<std::size_t>(start) <= source.size()) {
        d.line = static_cast<int>(lines.line_of(static_cast<std::size_t>(start)));
        if (d.kind == ErrorKind::UndeclaredIdentifier && end > start &&
            static_cast<std::size_t>(end) <= source.size()) {
          std::string slice(source.substr(static_cast<std::size_t>(start),
                                          static_cast<std::size_t>(end - start)));
          if (!slice.empty() && lex::is_identifier_start(slice[0]) &&
              std::all_of(slice.begin(), slice.end(), lex::is_identifier_char)) {
            d.identifier = slice;
          }
        }
      }
    }
    v.diagnostics.push_back(std::move(d));
  }
  v.status = v.diagnostics.empty() ? Status::Pass : Status::CompileError;
  return v;
}

ExecutionVerdict SolcCompiler::compile(std::string_view source) {
  if (trim(source).empty()) {
    ExecutionVerdict v;
    v.status = Status::CompileError;
    v.diagnostics.push_back({ErrorKind::Other, "empty source", std::nullopt, std::nullopt});
    return v;
  }
  json input = {{"language", "Solidity"},
                {"sources", {{"Completed.sol", {{"content", std::string(source)}}}}},
                {"settings", {{"outputSelection", {{"*", {{"*", json::array({"abi"})}}}}}}}};
  auto res = run_process({binary_, "--standard-json"}, input.dump(), timeout_);
  if (res.spawn_failed) return unavailable("compiler binary not found: " + binary_);
  if (res.timed_out) {
    auto v = unavailable("compiler timed out");
    v.elapsed = res.elapsed;
    return v;
  }
  ExecutionVerdict v = parse_output(res.out, source);
  v.elapsed = res.elapsed;
  v.executor_version = version();
  return v;
}

ExecutionVerdict compile_check(std::string_view source, CompilerBackend& backend) {
  return backend.compile(source);
}

CompileOnlyExecutor::CompileOnlyExecutor(std::unique_ptr<CompilerBackend> compiler)
    : compiler_(std::move(compiler)) {}

ExecutionVerdict CompileOnlyExecutor::verify(const VerifyRequest& request) {
  ExecutionVerdict v = compiler_->compile(request.completed_source);
  rebase_lines(v, request.target, request.completed_body);
  return v;
}

DifferentialExecutor::DifferentialExecutor(Options options,
                                           std::unique_ptr<CompilerBackend> compiler)
    : options_(std::move(options)), compiler_(std::move(compiler)) {
  if (options_.command.empty()) throw ConfigError("differential executor needs a command");
}

std::string DifferentialExecutor::name() const { return "differential:" + options_.command[0]; }

std::string DifferentialExecutor::version() {
  std::string v = options_.command[0];
  if (compiler_) v += " + " + compiler_->version();
  return v;
}

ExecutionVerdict DifferentialExecutor::verify(const VerifyRequest& request) {
  if (compiler_) {
    ExecutionVerdict compiled = compiler_->compile(request.completed_source);
    if (compiled.status != Status::Pass) {
      rebase_lines(compiled, request.target, request.completed_body);
      return compiled;
    }
  }

  fs::path base = options_.work_dir.empty() ? fs::temp_directory_path() : fs::path(options_.work_dir);
  std::string pattern = (base / "solrepair-XXXXXX").string();
  if (mkdtemp(pattern.data()) == nullptr) return unavailable("cannot create work directory");
  fs::path dir(pattern);
  fs::path oracle = dir / "Oracle.sol";
  fs::path completed = dir / "Completed.sol";
  write_file(oracle, prepare_oracle(request.oracle_source, request.target));
  write_file(completed, request.completed_source);

  std::vector<std::string> argv = options_.command;
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout).count();
  for (std::string a : {std::string("--oracle"), oracle.string(), std::string("--completed"),
                        completed.string(), std::string("--contract"), request.target.contract,
                        std::string("--function"), request.target.name, std::string("--seed"),
                        std::to_string(options_.seed), std::string("--timeout"),
                        std::to_string(secs)}) {
    argv.push_back(std::move(a));
  }
  argv.insert(argv.end(), options_.extra_args.begin(), options_.extra_args.end());
  ProcessResult res = run_process(argv, "", options_.timeout);
  std::error_code ec;
  fs::remove_all(dir, ec);

  ExecutionVerdict v;
  v.elapsed = res.elapsed;
  v.seed = options_.seed;
  v.executor_version = version();
  if (res.spawn_failed) return unavailable("fuzzer not found: " + options_.command[0], v.executor_version);
  if (res.timed_out) {
    auto t = unavailable("fuzzer timed out", v.executor_version);
    t.elapsed = res.elapsed;
    t.seed = options_.seed;
    return t;
  }
  json report;
  try {
    if (!trim(res.out).empty()) report = json::parse(res.out);
  } catch (const json::exception&) {
    report = json::object();
  }
  if (report.is_object() && report.contains("seed")) v.seed = report["seed"].get<std::uint64_t>();
  if (report.is_object()) {
    for (const auto& d : report.value("diagnostics", json::array())) {
      Diagnostic diag = classifier_.classify(d.value("message", ""));
      if (d.contains("line")) diag.line = d["line"].get<int>();
      v.diagnostics.push_back(std::move(diag));
    }
  }
  switch (res.exit_code) {
    case 0:
      v.status = Status::Pass;
      v.diagnostics.clear();
      break;
    case 1:
      v.status = Status::FunctionalMismatch;
      if (v.diagnostics.empty()) {
        v.diagnostics.push_back({ErrorKind::Other, "behavioural mismatch", std::nullopt, std::nullopt});
      }
      break;
    case 2:
      v.status = Status::CompileError;
      if (v.diagnostics.empty()) {
        v.diagnostics.push_back({ErrorKind::Other, trim(res.err), std::nullopt, std::nullopt});
      }
      break;
    default: {
      auto u = unavailable("fuzzer exited with code " + std::to_string(res.exit_code) + ": " +
                               trim(res.err),
                           v.executor_version);
      u.elapsed = v.elapsed;
      u.seed = v.seed;
      return u;
    }
  }
  return v;
}

std::string normalize_body(std::string_view body) {
  std::string out;
  bool space = false;
  for (char c : body) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = true;
      continue;
    }
    if (space && !out.empty()) out += ' ';
    space = false;
    out += c;
  }
  return out;
}

MockExecutor MockExecutor::from_json(const json& doc) {
  MockExecutor m;
  try {
    if (doc.contains("schema") && doc["schema"] != "solrepair.mock-executor/1") {
      throw ConfigError("unsupported mock executor schema: " + doc["schema"].dump());
    }
    m.version_ = doc.value("version", "mock-1");
    for (const auto& [key, e] : doc.at("functions").items()) {
      Entry entry;
      entry.inputs = e.value("inputs", std::vector<std::string>{});
      entry.expected = e.value("expected", std::vector<std::string>{});
      for (const auto& b : e.value("behaviors", json::array())) {
        Behavior beh;
        beh.body = normalize_body(b.at("body").get<std::string>());
        beh.unavailable = b.value("unavailable", false);
        beh.outputs = b.value("outputs", std::vector<std::string>{});
        for (const auto& ce : b.value("compile_errors", json::array())) {
          if (ce.is_string()) {
            beh.compile_errors.push_back(classify_error(ce.get<std::string>()));
          } else {
            Diagnostic d = classify_error(ce.at("message").get<std::string>());
            if (ce.contains("line")) d.line = ce["line"].get<int>();
            if (ce.contains("identifier")) d.identifier = ce["identifier"].get<std::string>();
            beh.compile_errors.push_back(std::move(d));
          }
        }
        entry.behaviors.push_back(std::move(beh));
      }
      m.entries_[key] = std::move(entry);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed mock executor fixture: ") + e.what());
  }
  return m;
}

MockExecutor MockExecutor::from_file(const std::string& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
}

const MockExecutor::Entry* MockExecutor::lookup(const corpus::FunctionRecord& target) const {
  for (const std::string& key : {target.id(), target.qualified_name(), target.name}) {
    auto it = entries_.find(key);
    if (it != entries_.end()) return &it->second;
  }
  return nullptr;
}

ExecutionVerdict MockExecutor::verify(const VerifyRequest& request) {
  ExecutionVerdict v;
  v.executor_version = version_;
  const std::string body = normalize_body(request.completed_body);
  if (body == normalize_body(request.target.body)) return v;

  auto mismatch = [&](std::string msg) {
    v.status = Status::FunctionalMismatch;
    v.diagnostics.push_back({ErrorKind::Other, std::move(msg), std::nullopt, std::nullopt});
    return v;
  };
  const Entry* entry = lookup(request.target);
  if (entry == nullptr) return mismatch("no scripted behaviour for " + request.target.qualified_name());
  auto it = std::find_if(entry->behaviors.begin(), entry->behaviors.end(),
                         [&](const Behavior& b) { return b.body == body; });
  if (it == entry->behaviors.end()) {
    return mismatch("unscripted completion for " + request.target.qualified_name());
  }
  if (it->unavailable) return unavailable("scripted executor outage", version_);
  if (!it->compile_errors.empty()) {
    v.status = Status::CompileError;
    v.diagnostics = it->compile_errors;
    return v;
  }
  for (std::size_t i = 0; i < entry->inputs.size(); ++i) {
    std::string want = i < entry->expected.size() ? entry->expected[i] : "";
    std::string got = i < it->outputs.size() ? it->outputs[i] : "<missing>";
    if (want != got) {
      return mismatch("functional mismatch on input " + entry->inputs[i] + ": expected " + want +
                      ", got " + got);
    }
  }
  return v;
}

std::optional<std::string> find_body(std::string_view source, const corpus::FunctionRecord& target) {
  std::vector<corpus::FunctionDecl> decls;
  try {
    decls = corpus::scan_declarations(corpus::SourceFile::from_text("<completed>", std::string(source)));
  } catch (const MalformedSource&) {
    return std::nullopt;
  }
  const corpus::FunctionDecl* match = nullptr;
  for (const auto& d : decls) {
    if (d.contract != target.contract || d.name != target.name) continue;
    if (d.comment_line == target.span.start_line) {
      match = &d;
      break;
    }
    if (match == nullptr) match = &d;
  }
  if (match == nullptr) return std::nullopt;
  return std::string(source.substr(match->body_begin, match->body_end - match->body_begin));
}

ExecutionVerdict differential_verify(std::string_view oracle_source,
                                     std::string_view completed_source,
                                     const corpus::FunctionRecord& target,
                                     ExecutorBackend& backend) {
  auto body = find_body(completed_source, target);
  if (!body) {
    ExecutionVerdict v;
    v.status = Status::CompileError;
    v.executor_version = backend.version();
    v.diagnostics.push_back({ErrorKind::Other,
                             "target function " + target.qualified_name() +
                                 " not found in completed source",
                             std::nullopt, std::nullopt});
    return v;
  }
  VerifyRequest r;
  r.oracle_source = std::string(oracle_source);
  r.completed_source = std::string(completed_source);
  r.target = target;
  r.completed_body = *body;
  return backend.verify(r);
}

}  // namespace solrepair::executor
