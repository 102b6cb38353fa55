#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "solrepair/corpus.hpp"
#include "solrepair/error.hpp"
#include "solrepair/lexer.hpp"

using namespace solrepair;
using namespace solrepair::corpus;

namespace {

const char* kVault = R"(// SPDX-License-Identifier: MIT
pragma solidity ^0.8.0;

interface IFeed {
    /// @notice latest price
    function latest() external view returns (uint256);
}

contract Vault {
    uint256 public cap;
    address public owner;

    constructor(uint256 _cap) {
        cap = _cap;
    }

    /// @notice Adds two numbers.
    /// @dev pure
    function add(uint256 a, uint256 b) public pure returns (uint256) {
        return a + b;
    }

    /**
     * @notice Braces in strings: "}" and comments // }
     */
    function tricky() public pure returns (string memory) {
        string memory s = "}{"; // }
        return s;
    }

    // Detached.

    function detached() public {}

    function bare(uint256 x) public pure returns (uint256) { return x; }

    /* one-line block */ function sameLine() public {}

    // Reads the cap.
    function room(uint256 used) public view returns (uint256) {
        return cap - used;
    }
}
)";

const FunctionRecord& by_name(const std::vector<FunctionRecord>& rs, const std::string& name) {
  for (const auto& r : rs) {
    if (r.name == name) return r;
  }
  FAIL("no record " << name);
  return rs.front();
}

}  // namespace

TEST_CASE("extraction keeps commented, bodied functions") {
  auto file = SourceFile::from_text("vault.sol", kVault);
  CHECK(file.contract_names == std::vector<std::string>{"IFeed", "Vault"});
  auto records = extract_functions(file);
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.name);
  CHECK(names == std::set<std::string>{"add", "tricky", "room"});

  const auto& add = by_name(records, "add");
  CHECK(add.contract == "Vault");
  CHECK(add.comment == "/// @notice Adds two numbers.\n/// @dev pure\n");
  CHECK(add.signature == "function add(uint256 a, uint256 b) public pure returns (uint256) ");
  CHECK(add.body == "{\n        return a + b;\n    }");
  CHECK(add.span.start_line == 17);
  CHECK(add.span.end_line == 21);
  CHECK(add.id() == "vault.sol::Vault.add@17");
  CHECK(add.qualified_name() == "Vault.add");

  const auto& tricky = by_name(records, "tricky");
  CHECK(tricky.comment == "/**\n* @notice Braces in strings: \"}\" and comments // }\n*/\n");
  CHECK(tricky.body.find("return s;") != std::string::npos);
  CHECK(tricky.body.back() == '}');
}

TEST_CASE("declaration scan sees every function including bodiless ones") {
  auto decls = scan_declarations(SourceFile::from_text("vault.sol", kVault));
  std::vector<std::string> names;
  for (const auto& d : decls) names.push_back(d.name);
  // Interface functions without bodies are not declarations with bodies.
  CHECK(names == std::vector<std::string>{"constructor", "add", "tricky", "detached", "bare",
                                          "sameLine", "room"});
  CHECK(decls.front().is_constructor);
}

TEST_CASE("malformed sources report a position") {
  try {
    SourceFile::from_text("bad.sol", "contract A {\n  function f() public {\n}\n");
    FAIL("expected MalformedSource");
  } catch (const MalformedSource& e) {
    CHECK(e.origin() == "bad.sol");
    CHECK(e.line() >= 1);
  }
  CHECK_THROWS_AS(SourceFile::from_text("x.sol", "contract A { }\n}"), MalformedSource);
  CHECK_THROWS_AS(SourceFile::from_text("x.sol", "/* never closed"), MalformedSource);
  CHECK_THROWS_AS(SourceFile::from_text("x.sol", "string s = \"open"), MalformedSource);
}

TEST_CASE("verification statement injection") {
  FunctionRecord r;
  r.source_id = "a.sol";
  r.contract = "A";
  r.name = "f";
  r.signature = "function f() public ";

  r.body = "{\n    x = 1;\n}";
  CHECK(inject_verification_statement(r).body == "{ uint256 this_is_a_test_variable;\n    x = 1;\n}");
  r.body = "{x = 1;}";
  CHECK(inject_verification_statement(r).body == "{ uint256 this_is_a_test_variable; x = 1;}");
  r.body = "{}";
  CHECK(inject_verification_statement(r).body == "{ uint256 this_is_a_test_variable; }");

  auto injected = inject_verification_statement(r).body;
  CHECK(injected.find("uint256 this_is_a_test_variable;") != std::string::npos);
  CHECK(injected.find("this_is_a_test_variable") == injected.rfind("this_is_a_test_variable"));

  r.body = "return 1;";
  CHECK_THROWS_AS(inject_verification_statement(r), MalformedRecord);
}

TEST_CASE("state-dependence deny-list") {
  const char* src = R"(contract T {
    address owner;
    address admin;
    uint256 cap;
    constructor() { owner = msg.sender; cap = 10; }
    modifier onlyOwner() { require(msg.sender == owner); _; }
    function _mint(address a, uint256 v) internal {}
    function _guarded() internal onlyOwner {}
    /// a
    function m(uint256 v) public { _mint(msg.sender, v); }
    /// b
    function o() public onlyOwner {}
    /// c
    function viaCallee() public { _guarded(); }
    /// d
    function eq() public view { require(msg.sender == owner); }
    /// e
    function rev() public view { if (admin != msg.sender) revert(); }
    /// f
    function call() public view { require(owner() == msg.sender); }
    /// g
    function capped(uint256 x) public view returns (bool) { return x < cap; }
    /// h
    function free(uint256 x) public pure returns (uint256) { return x + 1; }
    /// i
    function both() public onlyOwner { _mint(msg.sender, 1); }
})";
  auto file = SourceFile::from_text("t.sol", src);
  auto records = extract_functions(file);
  auto reason = [&](const std::string& name) { return filter_state_dependent(by_name(records, name), file); };

  CHECK(reason("m").reason == FilterReason::Mint);
  CHECK(reason("o").reason == FilterReason::OwnerModifier);
  auto via = reason("viaCallee");
  CHECK(via.reason == FilterReason::OwnerModifier);
  CHECK(via.via == "_guarded");
  CHECK(reason("eq").reason == FilterReason::OwnerCheck);
  CHECK(reason("rev").reason == FilterReason::OwnerCheck);
  CHECK(reason("call").reason == FilterReason::OwnerCheck);
  CHECK(reason("capped").reason == FilterReason::ConstructorState);
  CHECK(reason("free").keep);
  // Mint wins over the owner modifier.
  CHECK(reason("both").reason == FilterReason::Mint);

  FilterConfig no_ctor;
  no_ctor.constructor_state = false;
  CHECK(filter_state_dependent(by_name(records, "capped"), file, no_ctor).keep);

  CHECK(to_string(FilterReason::OwnerCheck) == "owner-check");
}

TEST_CASE("exact dedup ignores trailing whitespace only") {
  FunctionRecord a{"a.sol", "A", "f", "/// x\n", "function f() public ", "{\n  y = 1;\n}", {1, 4}, "contract"};
  FunctionRecord b = a;
  b.source_id = "b.sol";
  b.body = "{\n  y = 1;   \n}";
  FunctionRecord c = a;
  c.body = "{\n  y  = 1;\n}";
  auto [kept, report] = dedup_exact({a, b, c});
  CHECK(kept.size() == 2);
  CHECK(kept[0].source_id == "a.sol");
  CHECK(report.dedup_removed == 1);
}

TEST_CASE("jaccard overlap") {
  FunctionRecord a{"a.sol", "A", "f", "", "function f() ", "{ return x + y; }", {1, 1}, "contract"};
  FunctionRecord b = a;
  CHECK(jaccard_overlap(a, b) == doctest::Approx(1.0));
  b.body = "{ return x * y; }";
  // Term sets {function f ( ) { return x + y ; }} vs the same with * for +.
  CHECK(jaccard_overlap(a, b) == doctest::Approx(10.0 / 12.0));
  FunctionRecord e{"e.sol", "E", "", "", "", "", {1, 1}, "contract"};
  CHECK(jaccard_overlap(e, e) == 1.0);
  auto pairs = overlapping_pairs({a, a, b}, 0.9);
  CHECK(pairs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}});
}

TEST_CASE("shipped corpus20 fixture matches its design") {
  namespace fs = std::filesystem;
  auto expected = nlohmann::json::parse(testing::slurp(testing::fixture("corpus20/EXPECTED.json")));
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(testing::fixture("corpus20"))) {
    if (e.path().extension() == ".sol") paths.push_back(e.path().filename().string());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<SourceFile> files;
  for (const auto& p : paths) {
    files.push_back(SourceFile::from_text(p, testing::slurp(testing::fixture("corpus20/" + p))));
  }
  CHECK(files.size() == expected["files"].get<std::size_t>());
  auto build = build_dataset(files);
  const auto& r = build.report;
  CHECK(r.total_extracted == expected["total_extracted"].get<std::size_t>());
  CHECK(r.excluded_no_comment == expected["excluded_no_comment"].get<std::size_t>());
  CHECK(r.excluded_state_dependent == expected["excluded_state_dependent"].get<std::size_t>());
  CHECK(r.excluded_mint == expected["excluded_mint"].get<std::size_t>());
  CHECK(r.dedup_removed == expected["dedup_removed"].get<std::size_t>());
  CHECK(r.retained == expected["retained"].get<std::size_t>());
  CHECK(r.duplication_rate == doctest::Approx(expected["duplication_rate"].get<double>()).epsilon(1e-12));

  std::vector<std::string> ids;
  for (const auto& rec : build.records) ids.push_back(rec.id());
  std::sort(ids.begin(), ids.end());
  CHECK(ids == expected["retained_ids"].get<std::vector<std::string>>());
}

TEST_CASE("duplication rate of a heavily duplicated corpus") {
  // 13 distinct commented functions, then 87 verbatim copies spread over
  // further files: 87 / 100 candidates are duplicates.
  auto fn = [](int k) {
    return "    /// @notice Returns " + std::to_string(k) + ".\n    function v" + std::to_string(k) +
           "() public pure returns (uint256) {\n        return " + std::to_string(k) + ";\n    }\n";
  };
  std::vector<SourceFile> files;
  std::string first = "contract U {\n";
  for (int k = 0; k < 13; ++k) first += fn(k);
  files.push_back(SourceFile::from_text("u.sol", first + "}\n"));
  for (int f = 0; f < 87; ++f) {
    files.push_back(SourceFile::from_text("d" + std::to_string(f) + ".sol",
                                          "contract D" + std::to_string(f) + " {\n" + fn(f % 13) + "}\n"));
  }
  auto build = build_dataset(files);
  CHECK(build.report.total_extracted == 100);
  CHECK(build.report.dedup_removed == 87);
  CHECK(build.report.retained == 13);
  CHECK(build.report.duplication_rate == doctest::Approx(0.87).epsilon(1e-12));
}

TEST_CASE("lexer basics") {
  auto s = lex::scan("a == b != c; // x\n/* y */ \"s\\\"}\" 0x1f");
  std::vector<std::string> texts;
  for (const auto& t : s.tokens) texts.emplace_back(t.text);
  CHECK(texts == std::vector<std::string>{"a", "==", "b", "!=", "c", ";", "\"s\\\"}\"", "0x1f"});
  CHECK(s.comments.size() == 2);
  CHECK(lex::code_identifiers("uint256 x = foo(y) + x;") == std::vector<std::string>{"x", "foo", "y"});
}
