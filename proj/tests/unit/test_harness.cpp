#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "solrepair/error.hpp"
#include "solrepair/harness.hpp"
#include "solrepair/serialize.hpp"

using namespace solrepair;
using namespace solrepair::harness;
using testing::fixture;
using testing::slurp;

namespace {

json expected_rar50() { return json::parse(slurp(fixture("rar50/EXPECTED.json"))); }

/// Tasks for the 50-function mock fixture, built once per process.
const std::string& rar50_tasks() {
  static testing::TempDir dir;
  static std::string path = [] {
    BuildOptions b;
    b.src_dir = fixture("rar50/src");
    b.out_task_file = dir / "tasks.jsonl";
    cmd_build(b);
    return b.out_task_file;
  }();
  return path;
}

RunConfig rar50_config(const std::string& out, bool rar) {
  RunConfig c;
  c.label = rar ? "rar" : "base";
  c.task_file = rar50_tasks();
  c.source_root = fixture("rar50/src");
  c.out_dir = out;
  c.model.mock_client = fixture("rar50/mock_client.json");
  c.executor.backend = "mock";
  c.executor.mock_file = fixture("rar50/mock_executor.json");
  if (rar) {
    c.retrieval.enabled = true;
    c.retrieval.config.method = retrieval::Method::Lcs;
    c.max_rounds = 1;
  }
  return c;
}

double p_at_1(const std::string& out) {
  std::vector<metrics::TaskOutcome> outs;
  for (const auto& o : io::read_jsonl(out + "/outcomes.jsonl")) {
    outs.push_back({o["task_id"], o["n"], o["c"], o["c_compile"]});
  }
  return metrics::pass_at_k(outs, 1);
}

}  // namespace

TEST_CASE("build on edge-case directories") {
  testing::TempDir dir;
  std::filesystem::create_directories(dir.path() / "empty");
  BuildOptions b;
  b.src_dir = dir / "empty";
  b.out_task_file = dir / "tasks.jsonl";
  auto report = cmd_build(b);
  CHECK(report.total_extracted == 0);
  CHECK(report.retained == 0);
  CHECK(slurp(b.out_task_file).empty());
  auto stats = json::parse(slurp(b.out_task_file + ".stats.json"));
  CHECK(stats["schema"] == std::string(io::kBuildStatsSchema));
  CHECK(stats["files"] == 0);

  testing::spit(dir.path() / "bare" / "a.sol",
                "pragma solidity ^0.8.0;\ncontract A {\n    function f() public {}\n    function g() public {}\n}\n");
  testing::spit(dir.path() / "bare" / "broken.sol", "contract B {\n    function f() public {\n");
  b.src_dir = dir / "bare";
  report = cmd_build(b);
  CHECK(report.total_extracted == 2);
  CHECK(report.excluded_no_comment == 2);
  CHECK(report.retained == 0);
  stats = json::parse(slurp(b.out_task_file + ".stats.json"));
  CHECK(stats["files"] == 2);
  REQUIRE(stats["skipped"].size() == 1);
  CHECK(stats["skipped"][0].dump().find("broken.sol") != std::string::npos);

  b.src_dir = dir / "missing";
  CHECK_THROWS_AS(cmd_build(b), ConfigError);
}

TEST_CASE("build reproduces the corpus fixture counts") {
  testing::TempDir dir;
  BuildOptions b;
  b.src_dir = fixture("corpus20");
  b.out_task_file = dir / "tasks.jsonl";
  auto report = cmd_build(b);
  auto want = json::parse(slurp(fixture("corpus20/EXPECTED.json")));
  CHECK(report.total_extracted == want["total_extracted"]);
  CHECK(report.retained == want["retained"]);
  std::vector<std::string> ids;
  for (const auto& t : io::read_tasks(b.out_task_file)) ids.push_back(t.id());
  CHECK(ids == want["retained_ids"].get<std::vector<std::string>>());
}

TEST_CASE("mock fixture pass rates") {
  testing::TempDir dir;
  auto want = expected_rar50();
  auto base = cmd_run(rar50_config(dir / "base", false));
  CHECK(base.exit_code == kExitClean);
  CHECK(base.manifest.tasks_total == 50);
  CHECK(p_at_1(dir / "base") == doctest::Approx(want["no_repair_pass_at_1"].get<double>()));

  auto rar = cmd_run(rar50_config(dir / "rar", true));
  CHECK(rar.exit_code == kExitClean);
  CHECK(p_at_1(dir / "rar") == doctest::Approx(want["rar_lcs_self_edit_pass_at_1"].get<double>()));

  auto plain_cfg = rar50_config(dir / "plain", true);
  plain_cfg.retrieval.enabled = false;
  cmd_run(plain_cfg);
  CHECK(p_at_1(dir / "plain") == doctest::Approx(want["repair_without_retrieval_pass_at_1"].get<double>()));

  // Each failing compile's repair prompt shows the missing declaration.
  int checked = 0;
  for (const auto& s : io::read_jsonl(dir / "rar/sessions.jsonl")) {
    std::string id = s["task_id"];
    for (const auto& [qname, d] : want["declarations"].items()) {
      if (id.find("::" + qname + "@") == std::string::npos) continue;
      REQUIRE(s["attempts"].size() == 2);
      const std::string prompt = s["attempts"][1]["calls"].back()["prompt"];
      CHECK(prompt.find(d["snippet"].get<std::string>() + "\n") != std::string::npos);
      CHECK(prompt.find(d["declaration"].get<std::string>()) != std::string::npos);
      ++checked;
    }
  }
  CHECK(checked == static_cast<int>(want["declarations"].size()));
}

TEST_CASE("runs are deterministic and independent of worker count") {
  testing::TempDir dir;
  std::string first_sessions, first_outcomes;
  int i = 0;
  for (int workers : {1, 8, 1, 8}) {
    auto cfg = rar50_config(dir / ("w" + std::to_string(i++)), true);
    cfg.workers = workers;
    cfg.samples = 3;
    cfg.k_values = {1, 3};
    cmd_run(cfg);
    std::string sessions = slurp(cfg.out_dir + "/sessions.jsonl");
    std::string outcomes = slurp(cfg.out_dir + "/outcomes.jsonl");
    if (first_sessions.empty()) {
      first_sessions = sessions;
      first_outcomes = outcomes;
      continue;
    }
    CHECK(sessions == first_sessions);
    CHECK(outcomes == first_outcomes);
  }
  CHECK(first_sessions.find("elapsed_ms") == std::string::npos);
}

TEST_CASE("interrupted runs resume to the same outcomes") {
  testing::TempDir dir;
  auto whole = rar50_config(dir / "whole", true);
  whole.samples = 2;
  cmd_run(whole);

  auto cfg = rar50_config(dir / "parts", true);
  cfg.samples = 2;
  cfg.workers = 4;
  cfg.stop_after = 17;
  auto r = cmd_run(cfg);
  CHECK(r.exit_code == kExitInterrupted);
  CHECK(r.manifest.interrupted);
  CHECK(r.sessions_run == 17);
  CHECK(!r.manifest.incomplete_tasks.empty());

  // Simulate a crash mid-write.
  {
    std::ofstream log(cfg.out_dir + "/sessions.log.jsonl", std::ios::app | std::ios::binary);
    log << "{\"schema\":\"solrepair.session/1\",\"task_id\":\"tor";
  }
  cfg.stop_after = 40;
  r = cmd_run(cfg);
  CHECK(r.sessions_run == 40);
  cfg.stop_after.reset();
  cfg.workers = 1;
  r = cmd_run(cfg);
  CHECK(r.exit_code == kExitClean);
  CHECK(r.sessions_run == 100 - 57);
  CHECK(slurp(cfg.out_dir + "/outcomes.jsonl") == slurp(whole.out_dir + "/outcomes.jsonl"));
  CHECK(slurp(cfg.out_dir + "/sessions.jsonl") == slurp(whole.out_dir + "/sessions.jsonl"));

  // Nothing left to do.
  r = cmd_run(cfg);
  CHECK(r.sessions_run == 0);
  CHECK(slurp(cfg.out_dir + "/outcomes.jsonl") == slurp(whole.out_dir + "/outcomes.jsonl"));
}

TEST_CASE("resuming with a different configuration is refused") {
  testing::TempDir dir;
  auto cfg = rar50_config(dir / "run", true);
  cfg.stop_after = 3;
  cmd_run(cfg);
  auto other = cfg;
  other.strategy = repair::Strategy::SelfRepair;
  CHECK_THROWS_AS(cmd_run(other), ConfigError);
  other.fresh = true;
  other.stop_after.reset();
  CHECK(cmd_run(other).sessions_run == 50);

  // Presentation-only settings may change.
  auto relabeled = other;
  relabeled.fresh = false;
  relabeled.label = "renamed";
  relabeled.workers = 3;
  CHECK(cmd_run(relabeled).sessions_run == 0);

  auto bad = cfg;
  bad.task_file = dir / "nope.jsonl";
  CHECK_THROWS_AS(cmd_run(bad), ConfigError);
  bad = cfg;
  bad.samples = 0;
  CHECK_THROWS_AS(cmd_run(bad), ConfigError);
}

TEST_CASE("config round-trips through json") {
  auto cfg = rar50_config("/tmp/x", true);
  cfg.k_values = {1, 5};
  cfg.seed = 9;
  cfg.executor.command = {"fuzz", "--fast"};
  auto back = RunConfig::from_json(cfg.to_json());
  CHECK(back.to_json() == cfg.to_json());
  CHECK(back.identity() == cfg.identity());
  auto w = cfg;
  w.workers = 16;
  CHECK(w.identity() == cfg.identity());
  w.seed = 10;
  CHECK(w.identity() != cfg.identity());
}

TEST_CASE("executor outages are retried on resume") {
  testing::TempDir dir;
  // A compiler that only works once a flag file exists.
  std::string solc = dir / "flaky-solc";
  testing::spit(solc, "#!/bin/sh\nif [ -e \"" + (dir / "ok") + "\" ]; then exec \"" +
                          fixture("bin/fake-solc") + "\" \"$@\"; fi\necho down\nexit 1\n");
  std::filesystem::permissions(solc, std::filesystem::perms::owner_all);

  auto cfg = rar50_config(dir / "run", false);
  cfg.executor.backend = "compile";
  cfg.executor.solc = solc;
  auto r = cmd_run(cfg);
  CHECK(r.exit_code == kExitInfra);
  CHECK(r.manifest.incomplete_tasks.size() == 50);
  for (const auto& o : io::read_jsonl(cfg.out_dir + "/outcomes.jsonl")) CHECK(o["n"] == 0);

  testing::spit(dir / "ok", "");
  r = cmd_run(cfg);
  CHECK(r.exit_code == kExitClean);
  CHECK(r.sessions_run == 50);
  CHECK(r.manifest.incomplete_tasks.empty());
}

TEST_CASE("report") {
  testing::TempDir dir;
  cmd_run(rar50_config(dir / "base", false));
  cmd_run(rar50_config(dir / "rar", true));
  ReportOptions opt;
  opt.inputs = {dir / "rar", dir / "base"};
  opt.out_dir = dir / "r1";
  auto rep = cmd_report(opt);
  REQUIRE(rep.rows.size() == 2);
  CHECK(rep.rows[0].label == "base");
  CHECK(rep.rows[1].label == "rar");
  CHECK(*rep.rows[0].pass_at_k.at(1) == doctest::Approx(40.0));
  CHECK(*rep.rows[1].pass_at_k.at(1) == doctest::Approx(80.0));
  CHECK(rep.rows[0].compile_at_1 >= *rep.rows[0].pass_at_k.at(1));
  CHECK(rep.rows[1].cost_usd > rep.rows[0].cost_usd);
  CHECK(rep.rows[0].budget == 2048);
  CHECK(rep.doc["schema"] == std::string(io::kReportSchema));
  CHECK(rep.table.find("P@1") != std::string::npos);
  CHECK(rep.table.find("80.00") != std::string::npos);

  // Byte-reproducible, independent of input order.
  opt.inputs = {dir / "base", dir / "rar"};
  opt.out_dir = dir / "r2";
  cmd_report(opt);
  for (const char* f : {"report.txt", "report.json", "cost_points.csv"}) {
    CHECK(slurp(dir / (std::string("r1/") + f)) == slurp(dir / (std::string("r2/") + f)));
  }
  auto csv = slurp(dir / "r1/cost_points.csv");
  CHECK(csv.rfind("label,budget,cost_usd,pass_at_1\nbase,2048,", 0) == 0);
  CHECK(csv.find("\nrar,2048,") != std::string::npos);

  // Two runs under one label merge into one row, costs add up.
  auto a = rar50_config(dir / "half_a", false);
  auto b = rar50_config(dir / "half_b", false);
  a.label = b.label = "merged";
  a.stop_after = b.stop_after = 50;
  cmd_run(a);
  cmd_run(b);
  ReportOptions m;
  m.inputs = {dir / "half_a", dir / "half_b"};
  auto merged = build_report(m);
  REQUIRE(merged.rows.size() == 1);
  CHECK(merged.rows[0].tasks == 100);
  CHECK(merged.rows[0].cost_usd == doctest::Approx(2 * rep.rows[0].cost_usd));

  // A k larger than the sample count is reported as unavailable.
  ReportOptions k5;
  k5.inputs = {dir / "base"};
  k5.k_values = {1, 5};
  auto r5 = build_report(k5);
  CHECK_FALSE(r5.rows[0].pass_at_k.at(5).has_value());
  CHECK(r5.doc["rows"][0]["pass_at_k"]["5"].is_null());

  ReportOptions none;
  CHECK_THROWS_AS(build_report(none), ConfigError);
  none.inputs = {dir / "nothing"};
  CHECK_THROWS_AS(build_report(none), ConfigError);
}

TEST_CASE("verify") {
  VerifyOptions v;
  v.task_file = rar50_tasks();
  v.source_root = fixture("rar50/src");
  v.executor.backend = "mock";
  v.executor.mock_file = fixture("rar50/mock_executor.json");
  std::ostringstream out;
  CHECK(cmd_verify(v, out) == kExitClean);
  std::istringstream lines(out.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    auto doc = json::parse(line);
    CHECK(doc["schema"] == std::string(io::kVerdictSchema));
    CHECK(doc["verdict"]["status"] == "pass");
    ++n;
  }
  CHECK(n == 50);

  testing::TempDir dir;
  testing::spit(dir / "body.sol", "{ return 12345; }");
  v.body_file = dir / "body.sol";
  std::ostringstream out2;
  CHECK(cmd_verify(v, out2) == kExitFailure);

  v.task_id = "no-such-task";
  std::ostringstream out3;
  CHECK_THROWS_AS(cmd_verify(v, out3), ConfigError);
}
