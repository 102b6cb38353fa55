#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace solrepair::lex {

enum class TokenKind { Identifier, Number, String, Punct };

/// A token is a view into the scanned text; it must not outlive it.
struct Token {
  TokenKind kind;
  std::string_view text;
  std::size_t offset;

  bool is(std::string_view s) const { return text == s; }
  bool is_identifier() const { return kind == TokenKind::Identifier; }
};

struct Comment {
  std::size_t begin;  // offset of the leading `//` or `/*`
  std::size_t end;    // one past the last byte (newline excluded)
  bool block;
};

struct ScanResult {
  std::vector<Token> tokens;
  std::vector<Comment> comments;
};

/// Lexes Solidity source. Comments and string literals are recognised so
/// braces inside them never count. Throws MalformedSource on unterminated
/// block comments or strings.
ScanResult scan(std::string_view text, std::string_view origin = "<input>");

/// Throws MalformedSource naming the first unmatched brace. A stray `}`
/// is reported at its own position; an unclosed `{` at the earliest one.
void check_balanced(std::string_view text, const std::vector<Token>& tokens,
                    std::string_view origin);

/// Index of the `}` matching tokens[open] (which must be `{`), or
/// tokens.size() when unmatched.
std::size_t match_brace(const std::vector<Token>& tokens, std::size_t open);

/// 1-based line lookup over a text.
class LineIndex {
 public:
  explicit LineIndex(std::string_view text);

  std::size_t line_of(std::size_t offset) const;
  std::size_t column_of(std::size_t offset) const;
  /// Offset of the first byte of a 1-based line; text size for line count+1.
  std::size_t line_begin(std::size_t line) const;
  std::size_t line_count() const { return starts_.size(); }

 private:
  std::vector<std::size_t> starts_;
  std::size_t size_;
};

bool is_identifier_start(char c);
bool is_identifier_char(char c);

/// Identifiers appearing in code (not comments or strings) in first-seen
/// order, skipping language keywords and elementary type names.
std::vector<std::string> code_identifiers(std::string_view text);

bool is_keyword(std::string_view word);

}  // namespace solrepair::lex
