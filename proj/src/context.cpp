#include "solrepair/context.hpp"

#include "solrepair/error.hpp"
#include "solrepair/lexer.hpp"

namespace solrepair::context {

std::int64_t WhitespaceCounter::count(std::string_view text) const {
  std::int64_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::shared_ptr<const TokenCounter> make_counter(std::string_view name) {
  if (name == "approx") return std::make_shared<ApproxByteCounter>();
  if (name == "whitespace") return std::make_shared<WhitespaceCounter>();
  throw ConfigError("unknown token counter: " + std::string(name));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      out.emplace_back(text.substr(start));
      break;
    }
    out.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::vector<std::string> ContextWindow::lines() const { return split_lines(text); }

ContextWindow build_context(const corpus::SourceFile& file,
                            const corpus::FunctionRecord& target,
                            std::int64_t budget, const TokenCounter& counter) {
  if (budget < 0) {
    throw InvalidArgument("context budget must be non-negative, got " +
                          std::to_string(budget));
  }
  lex::LineIndex index(file.text);
  const auto start = static_cast<std::size_t>(target.span.start_line);
  if (target.span.start_line < 1 || start > index.line_count() ||
      target.span.end_line < target.span.start_line ||
      static_cast<std::size_t>(target.span.end_line) > index.line_count()) {
    throw MalformedRecord("span outside source: " + target.id());
  }

  ContextWindow w;
  w.budget = budget;
  w.first_line = target.span.start_line;
  std::string_view text = file.text;
  const std::size_t end = index.line_begin(start);

  // Token counts are monotone in suffix length, so the longest fitting
  // suffix is found by bisection over its first line.
  auto suffix = [&](std::size_t first) {
    std::size_t b = index.line_begin(first);
    return text.substr(b, end - b);
  };
  std::size_t lo = 1;
  std::size_t hi = start;  // the empty suffix always fits
  while (lo < hi) {
    std::size_t mid = lo + (hi - lo) / 2;
    if (counter.count(suffix(mid)) <= budget) hi = mid;
    else lo = mid + 1;
  }
  w.text = std::string(suffix(lo));
  w.actual_tokens = counter.count(w.text);
  w.first_line = static_cast<int>(lo);
  return w;
}

}  // namespace solrepair::context
