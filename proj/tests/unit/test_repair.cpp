#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "solrepair/error.hpp"
#include "solrepair/repair.hpp"

using namespace solrepair;
using namespace solrepair::repair;
using nlohmann::json;
using executor::Status;

namespace {

const char* kPay = R"(pragma solidity ^0.8.0;

interface TokenLike {
    function transfer(address to, uint256 v) external returns (bool);
}

contract Pay {
    uint256 public feeRate;
    TokenLike token;

    /// @notice Fee owed on `v`.
    function fee(uint256 v) public view returns (uint256) {
        return v * feeRate / 100;
    }
}
)";

const char* kRight = "{\n        return v * feeRate / 100;\n    }";
const char* kWrong = "{\n        return v * fee_rate / 100;\n    }";
const char* kOffByOne = "{\n        return v * feeRate / 10;\n    }";

CompletionTask pay_task(std::int64_t budget = 2048) {
  auto file = corpus::SourceFile::from_text("pay.sol", kPay);
  CompletionTask t;
  t.record = corpus::extract_functions(file).at(0);
  t.window = context::build_context(file, t.record, budget, context::ApproxByteCounter());
  t.oracle_source = kPay;
  return t;
}

executor::MockExecutor pay_executor() {
  return executor::MockExecutor::from_json({
      {"functions",
       {{"Pay.fee",
         {{"inputs", {"100"}},
          {"expected", {"1"}},
          {"behaviors",
           {{{"body", kWrong},
             {"compile_errors",
              {{{"message", "DeclarationError: Undeclared identifier."}, {"line", 2}, {"identifier", "fee_rate"}}}}},
            {{"body", kOffByOne}, {"outputs", {"10"}}}}}}}}}});
}

/// Wrong first, right once the declaration is among the snippets.
ScriptedClient pay_client(const std::string& first = kWrong) {
  return ScriptedClient::from_json({
      {"schema", "solrepair.mock-client/1"},
      {"default", "no idea"},
      {"entries",
       {{{"contains", {"Explain the Solidity function"}}, {"completion", "line 2 reads fee_rate"}},
        {{"contains", {"### Retrieved Code Snippets\n", "uint256 public feeRate;"}},
         {"completion", std::string("```solidity\n") + kRight + "\n```"}},
        {{"contains", {"Complete the Solidity function"}}, {"completion", first}}}}});
}

retrieval::RetrievalConfig lcs_cfg() {
  retrieval::RetrievalConfig cfg;
  cfg.method = retrieval::Method::Lcs;
  return cfg;
}

class ThrowingClient final : public ModelClient {
 public:
  explicit ThrowingClient(int failures, std::string reply = kRight)
      : failures_(failures), reply_(std::move(reply)) {}
  std::string name() const override { return "throwing"; }
  Completion complete(const CompletionRequest&) override {
    ++calls;
    if (failures_-- > 0) throw ModelError("connection reset");
    return {reply_, {10, 5}};
  }
  int calls = 0;

 private:
  int failures_;
  std::string reply_;
};

}  // namespace

TEST_CASE("render") {
  Bindings b{{"a", "X"}, {"empty", ""}, {"inj", "{{a}}"}};
  CHECK(render("[{{a}}]", b) == "[X]");
  CHECK(render("[{{missing}}]", b) == "[]");
  CHECK(render("{{#a}}has {{a}}{{/a}}|{{#empty}}never{{/empty}}", b) == "has X|");
  CHECK(render("{{inj}}", b) == "{{a}}");
  CHECK(render("no tags {", b) == "no tags {");
  CHECK_THROWS_AS(render("{{#a}}open", b), ConfigError);
}

TEST_CASE("body extraction") {
  CHECK(extract_body("{ return 1; }") == "{ return 1; }");
  CHECK(extract_body("Here you go:\n```solidity\n{\n  x = \"}\";\n}\n```\nDone {}") == "{\n  x = \"}\";\n}");
  CHECK(extract_body("function f() public { a(); } trailing") == "{ a(); }");
  CHECK(extract_body("{ if (a) { b(); }") == "{ if (a) { b(); }");
  CHECK(extract_body("return 1;") == "{\nreturn 1;\n}");
  CHECK(extract_body("") == "{\n\n}");
  CHECK(strip_code_fence("a\n```\nX\n```") == "X\n");
}

TEST_CASE("prompt templates") {
  auto builtin = PromptTemplates::builtin();
  CHECK(builtin.version() == "v1");
  auto dir = PromptTemplates::from_directory(std::string(SOLREPAIR_FIXTURES) + "/../../assets/prompts/v1");
  CHECK(dir.version() == "v1");
  for (const char* name : {"completion", "self_edit", "self_debug", "self_debug_explain", "self_refine",
                           "self_repair"}) {
    CHECK(builtin.get(name) == dir.get(name));
  }
  CHECK_THROWS_AS(builtin.get("nope"), ConfigError);
  CHECK_THROWS_AS(PromptTemplates::from_directory("/nonexistent/prompts"), ConfigError);
  CHECK(strategy_from_string("self_debug") == Strategy::SelfDebug);
  CHECK_THROWS_AS(strategy_from_string("rewrite"), ConfigError);
}

TEST_CASE("completion prompt carries context, comment and signature") {
  auto task = pay_task();
  auto p = completion_prompt(task, PromptTemplates::builtin());
  CHECK(p.find("uint256 public feeRate;") != std::string::npos);
  CHECK(p.find("/// @notice Fee owed on `v`.\nfunction fee(uint256 v)") != std::string::npos);
  CHECK(p.find("return v * feeRate") == std::string::npos);

  auto none = pay_task(0);
  CHECK(none.window.text.empty());
  CHECK(completion_prompt(none, PromptTemplates::builtin()).find("### Context") == std::string::npos);
}

TEST_CASE("scripted client") {
  auto client = ScriptedClient::from_json(
      {{"name", "fixture"},
       {"entries",
        {{{"prompt_hash", prompt_hash("exact")}, {"completion", "by hash"}, {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 3}}}},
         {{"contains", {"exact"}}, {"completion", "by substring"}},
         {{"contains", {"many"}}, {"completions", {"a", "b", "c", "d"}}},
         {{"contains", {"boom"}}, {"fail", true}}}}});
  CHECK(client.name() == "fixture");
  auto c = client.complete({"exact", 10, 0, 0});
  CHECK(c.text == "by hash");
  CHECK(c.usage == metrics::Usage{7, 3});
  c = client.complete({"inexact", 10, 0, 0});
  CHECK(c.text == "by substring");
  CHECK(c.usage == metrics::Usage{2, 3});  // ceil(7/4), ceil(12/4)
  CHECK_THROWS_AS(client.complete({"boom", 10, 0, 0}), ModelError);
  CHECK_THROWS_AS(client.complete({"silence", 10, 0, 0}), ModelError);

  std::set<std::string> seen;
  for (int s = 0; s < 40; ++s) {
    auto first = client.complete({"many", 10, s, 9}).text;
    CHECK(client.complete({"many", 10, s, 9}).text == first);
    seen.insert(first);
  }
  CHECK(seen.size() > 1);

  CHECK(prompt_hash("") == "cbf29ce484222325");
  CHECK_THROWS_AS(ScriptedClient::from_json({{"schema", "solrepair.mock-client/2"}, {"entries", json::array()}}),
                  ConfigError);
  CHECK_THROWS_AS(ScriptedClient::from_json({{"entries", {{{"completion", "x"}}}}}), ConfigError);
}

TEST_CASE("correct on the first try stops after one attempt") {
  auto task = pay_task();
  auto client = pay_client(kRight);
  auto exec = pay_executor();
  auto s = run_rar(task, client, exec, lcs_cfg(), Strategy::SelfEdit, 3);
  REQUIRE(s.attempts.size() == 1);
  CHECK(s.final_status == Status::Pass);
  CHECK(s.attempts[0].stage == "completion");
  CHECK(s.final_body() == kRight);
  CHECK(s.task_id == task.id());
}

TEST_CASE("retrieval supplies the missing declaration") {
  auto task = pay_task();
  auto client = pay_client();
  auto exec = pay_executor();
  auto s = run_rar(task, client, exec, lcs_cfg(), Strategy::SelfEdit, 1);
  REQUIRE(s.attempts.size() == 2);
  CHECK(s.attempts[0].verdict.status == Status::CompileError);
  const auto& fix = s.attempts[1];
  CHECK(fix.stage == "repair");
  REQUIRE(fix.queries.size() == 1);
  CHECK(fix.queries[0] == retrieval::Query::identifier("fee_rate"));
  REQUIRE(!fix.snippets.empty());
  CHECK(fix.snippets[0].text == "    uint256 public feeRate;");
  CHECK(fix.snippets[0].matched_fragment == "fee");
  const std::string& prompt = fix.calls.back().prompt;
  CHECK(prompt.find("[L" + std::to_string(fix.snippets[0].line_index) + "]     uint256 public feeRate;\n") !=
        std::string::npos);
  CHECK(prompt.find("line 2: DeclarationError: Undeclared identifier.") != std::string::npos);
  CHECK(prompt.find(kWrong) != std::string::npos);
  CHECK(s.final_status == Status::Pass);
  CHECK(s.final_body() == kRight);

  auto o = outcome_of(task.id(), {s});
  CHECK(o.n == 1);
  CHECK(o.c == 1);

  // Same strategy without retrieval cannot find the name.
  auto plain = run_rar(task, client, exec, std::nullopt, Strategy::SelfEdit, 1);
  REQUIRE(plain.attempts.size() == 2);
  CHECK(plain.attempts[1].snippets.empty());
  CHECK(plain.attempts[1].calls.back().prompt.find("### Retrieved Code Snippets") == std::string::npos);
  CHECK(plain.attempts[1].completed_body == "{\nno idea\n}");
  CHECK(plain.final_status == Status::FunctionalMismatch);

  auto zero = run_rar(task, client, exec, lcs_cfg(), Strategy::SelfEdit, 0);
  CHECK(zero.attempts.size() == 1);
  CHECK_THROWS_AS(run_rar(task, client, exec, lcs_cfg(), Strategy::SelfEdit, -1), InvalidArgument);
}

TEST_CASE("strategies shape the repair prompt") {
  auto task = pay_task();
  auto exec = pay_executor();

  auto client = pay_client();
  auto refine = run_rar(task, client, exec, lcs_cfg(), Strategy::SelfRefine, 1);
  const std::string& rp = refine.attempts.at(1).calls.back().prompt;
  CHECK(rp.find("Executor Feedback") == std::string::npos);
  CHECK(rp.find("Undeclared identifier") == std::string::npos);
  CHECK(refine.final_status == Status::Pass);

  auto debug = run_rar(task, client, exec, lcs_cfg(), Strategy::SelfDebug, 1);
  const auto& calls = debug.attempts.at(1).calls;
  REQUIRE(calls.size() == 2);
  CHECK(calls[0].stage == "debug_explanation");
  CHECK(calls[1].stage == "repair");
  CHECK(calls[1].prompt.find("line 2 reads fee_rate") != std::string::npos);
  auto su = debug.stage_usage();
  CHECK(su.count("debug_explanation") == 1);
  auto ledger = cost_of({debug}, metrics::CostModel::gpt_4o_mini());
  CHECK(ledger.by_stage.at("debug_explanation") > 0);
  CHECK(ledger.tokens == debug.usage());

  auto repair = run_rar(task, client, exec, lcs_cfg(), Strategy::SelfRepair, 1);
  CHECK(repair.attempts.at(1).calls.back().prompt.find("interpret") != std::string::npos);
  CHECK(repair.final_body() == kRight);
}

TEST_CASE("functional mismatches query with lexed identifiers") {
  auto task = pay_task();
  auto client = pay_client(kOffByOne);
  auto exec = pay_executor();
  auto s = run_rar(task, client, exec, lcs_cfg(), Strategy::SelfEdit, 1);
  REQUIRE(s.attempts.size() == 2);
  CHECK(s.attempts[0].verdict.status == Status::FunctionalMismatch);
  CHECK(s.attempts[1].queries.size() >= 2);
  auto o = outcome_of(task.id(), {s});
  CHECK(o.c_compile == 1);
}

TEST_CASE("client failures") {
  auto task = pay_task();
  auto exec = pay_executor();

  ThrowingClient flaky(2);
  auto s = run_rar(task, flaky, exec, lcs_cfg(), Strategy::SelfEdit, 1);
  CHECK(flaky.calls == 3);
  CHECK(s.final_status == Status::Pass);

  ThrowingClient dead(100);
  s = run_rar(task, dead, exec, lcs_cfg(), Strategy::SelfEdit, 1);
  CHECK(dead.calls == 3);
  REQUIRE(s.attempts.size() == 1);
  CHECK(s.final_status == Status::ClientError);
  CHECK(s.attempts[0].calls[0].error == "connection reset");
  auto o = outcome_of(task.id(), {s});
  CHECK(o.n == 0);

  RarOptions opt;
  opt.client_retries = 0;
  ThrowingClient once(1);
  s = run_rar(task, once, exec, lcs_cfg(), Strategy::SelfEdit, 1, opt);
  CHECK(once.calls == 1);
  CHECK(s.final_status == Status::ClientError);
}

TEST_CASE("retrieval outage ends the session as infrastructure") {
  auto task = pay_task();
  auto client = pay_client();
  auto exec = pay_executor();
  retrieval::RetrievalConfig dense;
  dense.method = retrieval::Method::Dense;
  auto s = run_rar(task, client, exec, dense, Strategy::SelfEdit, 2);
  REQUIRE(s.attempts.size() == 2);
  CHECK(s.attempts[1].stage == "retrieval");
  CHECK(s.final_status == Status::ExecutorUnavailable);
  CHECK(outcome_of(task.id(), {s}).n == 0);
}

TEST_CASE("http chat client") {
  httplib::Server server;
  json last;
  std::string auth;
  int status = 200;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    last = json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.status = status;
    if (status != 200) {
      res.set_content("{\"error\":\"rate\"}", "application/json");
      return;
    }
    if (last.at("messages").at(0).at("content") == "garbage") {
      res.set_content("{\"choices\":[]}", "application/json");
      return;
    }
    json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "{ ok(); }"}}}}}},
                  {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 4}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  setenv("SOLREPAIR_TEST_KEY", "sk-test", 1);
  HttpChatClient::Options opt;
  opt.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  opt.model = "gpt-4o-mini";
  opt.api_key_env = "SOLREPAIR_TEST_KEY";
  opt.timeout_seconds = 5;
  HttpChatClient client(opt);
  auto c = client.complete({"hello", 64, 3, 100});
  CHECK(c.text == "{ ok(); }");
  CHECK(c.usage == metrics::Usage{12, 4});
  CHECK(last["model"] == "gpt-4o-mini");
  CHECK(last["max_tokens"] == 64);
  CHECK(last["seed"] == 103);
  CHECK(last["temperature"] == 0.0);
  CHECK(auth == "Bearer sk-test");

  CHECK_THROWS_AS(client.complete({"garbage", 64, 0, 0}), ModelError);
  status = 429;
  CHECK_THROWS_WITH_AS(client.complete({"hello", 64, 0, 0}), doctest::Contains("429"), ModelError);
  server.stop();
  th.join();
  CHECK_THROWS_AS(client.complete({"hello", 64, 0, 0}), ModelError);
  CHECK_THROWS_AS(HttpChatClient(HttpChatClient::Options{}), ConfigError);
}

TEST_CASE("rate limiter spaces requests") {
  RateLimiter limiter(600);  // one per 100 ms
  auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 4; ++i) limiter.acquire();
  auto elapsed = std::chrono::steady_clock::now() - t0;
  CHECK(elapsed >= std::chrono::milliseconds(290));
}
