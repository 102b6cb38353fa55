#include "doctest.h"
#include "helpers.hpp"
#include "solrepair/context.hpp"
#include "solrepair/corpus.hpp"
#include "solrepair/error.hpp"

using namespace solrepair;

namespace {

/// Linear-scan oracle: walk upwards one line at a time while the suffix
/// still fits.
std::string linear_window(const std::vector<std::string>& lines, int start_line, std::int64_t budget,
                          const context::TokenCounter& counter) {
  std::string best;
  std::string acc;
  for (int ln = start_line - 1; ln >= 1; --ln) {
    acc = lines[static_cast<std::size_t>(ln - 1)] + "\n" + acc;
    if (counter.count(acc) > budget) break;
    best = acc;
  }
  return best;
}

corpus::FunctionRecord record_at(int start, int end) {
  corpus::FunctionRecord r;
  r.source_id = "gen.sol";
  r.contract = "C";
  r.name = "f";
  r.span = {start, end};
  return r;
}

}  // namespace

TEST_CASE("window is the longest fitting suffix above the target") {
  std::mt19937_64 rng(7);
  context::ApproxByteCounter approx;
  context::WhitespaceCounter words;
  for (int iter = 0; iter < 300; ++iter) {
    std::uniform_int_distribution<int> n_lines(1, 40);
    int n = n_lines(rng);
    std::vector<std::string> lines;
    std::string text;
    for (int i = 0; i < n; ++i) {
      lines.push_back(testing::random_text(rng, 30, "ab cd\t"));
      text += lines.back() + "\n";
    }
    auto file = corpus::SourceFile{"gen.sol", text, {}};
    std::uniform_int_distribution<int> pick(1, n);
    int start = pick(rng);
    std::uniform_int_distribution<std::int64_t> budget_dist(0, 300);
    std::int64_t budget = budget_dist(rng);
    const context::TokenCounter& counter = iter % 2 ? static_cast<const context::TokenCounter&>(approx) : words;

    auto w = context::build_context(file, record_at(start, n), budget, counter);
    CHECK(w.text == linear_window(lines, start, budget, counter));
    CHECK(w.actual_tokens <= budget);
    CHECK(w.actual_tokens == counter.count(w.text));
    CHECK(w.first_line >= 1);
    CHECK(w.first_line <= start);
    CHECK(static_cast<int>(w.lines().size()) == start - w.first_line);

    // Monotone in the budget.
    auto bigger = context::build_context(file, record_at(start, n), budget + 17, counter);
    CHECK(bigger.text.size() >= w.text.size());
    CHECK(bigger.text.substr(bigger.text.size() - w.text.size()) == w.text);
  }
}

TEST_CASE("budget edge cases") {
  std::string text = "line one\nline two\n/// doc\nfunction f() {}\n";
  auto file = corpus::SourceFile{"x.sol", text, {}};
  context::ApproxByteCounter approx;
  auto target = record_at(3, 4);

  auto zero = context::build_context(file, target, 0, approx);
  CHECK(zero.text.empty());
  CHECK(zero.first_line == 3);
  CHECK(zero.lines().empty());

  auto all = context::build_context(file, target, 1 << 20, approx);
  CHECK(all.text == "line one\nline two\n");
  CHECK(all.lines() == std::vector<std::string>{"line one", "line two"});
  // The comment and signature never enter the window.
  CHECK(all.text.find("doc") == std::string::npos);

  // "line two\n" is 9 bytes -> 3 tokens; both lines are 18 bytes -> 5.
  auto one = context::build_context(file, target, 4, approx);
  CHECK(one.text == "line two\n");
  CHECK(one.actual_tokens == 3);

  CHECK_THROWS_AS(context::build_context(file, target, -1, approx), InvalidArgument);
  CHECK_THROWS_AS(context::build_context(file, record_at(9, 10), 10, approx), MalformedRecord);
  CHECK_THROWS_AS(context::build_context(file, record_at(0, 1), 10, approx), MalformedRecord);
}

TEST_CASE("token counters") {
  context::ApproxByteCounter approx;
  context::WhitespaceCounter words;
  CHECK(approx.count("") == 0);
  CHECK(approx.count("abcd") == 1);
  CHECK(approx.count("abcde") == 2);
  CHECK(words.count("") == 0);
  CHECK(words.count("  a  bb\tc\n") == 3);
  CHECK(context::make_counter("approx")->name() == "approx");
  CHECK(context::make_counter("whitespace")->name() == "whitespace");
  CHECK_THROWS_AS(context::make_counter("gpt2"), ConfigError);
}
