#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "solrepair/corpus.hpp"

namespace solrepair::context {

/// Pluggable token counting scheme. Implementations must return 0 for the
/// empty string and be monotone under concatenation. The shipped counters
/// are stateless and safe to share across threads.
class TokenCounter {
 public:
  virtual ~TokenCounter() = default;
  virtual std::string name() const = 0;
  virtual std::int64_t count(std::string_view text) const = 0;
};

/// ceil(bytes / 4); the default when no model tokenizer is wired in.
class ApproxByteCounter final : public TokenCounter {
 public:
  std::string name() const override { return "approx"; }
  std::int64_t count(std::string_view text) const override {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
  }
};

/// Whitespace-separated words.
class WhitespaceCounter final : public TokenCounter {
 public:
  std::string name() const override { return "whitespace"; }
  std::int64_t count(std::string_view text) const override;
};

/// "approx" or "whitespace"; throws ConfigError otherwise.
std::shared_ptr<const TokenCounter> make_counter(std::string_view name);

inline std::int64_t count_tokens(std::string_view text, const TokenCounter& counter) {
  return counter.count(text);
}

/// Budgets used in the context-length sweeps.
inline constexpr std::int64_t kStandardBudgets[] = {0,    256,  512,   1024, 2048,
                                                    4096, 8192, 16384, 32768};

struct ContextWindow {
  std::string text;
  std::int64_t budget = 0;
  std::int64_t actual_tokens = 0;
  /// 1-based source line where the window starts (the target's first line
  /// when the window is empty).
  int first_line = 0;

  /// Window split into lines without terminators; index 0 is first_line.
  std::vector<std::string> lines() const;
};

/// Longest whole-line suffix of the code preceding `target` whose token
/// count fits `budget`. The target's own comment and signature are never
/// part of the window. Throws InvalidArgument on a negative budget and
/// MalformedRecord when the span lies outside the file.
ContextWindow build_context(const corpus::SourceFile& file,
                            const corpus::FunctionRecord& target,
                            std::int64_t budget, const TokenCounter& counter);

std::vector<std::string> split_lines(std::string_view text);

}  // namespace solrepair::context
