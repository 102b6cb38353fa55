#include "solrepair/lexer.hpp"

#include <algorithm>
#include <array>
#include <unordered_set>

#include "solrepair/error.hpp"

namespace solrepair::lex {

namespace {

constexpr std::array<std::string_view, 24> kTwoCharOps = {
    "==", "!=", "<=", ">=", "&&", "||", "=>", "->", "++", "--", "+=", "-=",
    "*=", "/=", "%=", "|=", "&=", "^=", "<<", ">>", "**", ":=", "::", "..",
};

const std::unordered_set<std::string_view>& keywords() {
  static const std::unordered_set<std::string_view> words = {
      "abstract", "address", "anonymous", "as", "assembly", "bool", "break",
      "bytes", "calldata", "catch", "constant", "constructor", "continue",
      "contract", "delete", "do", "else", "emit", "enum", "error", "event",
      "external", "fallback", "false", "for", "function", "if", "immutable",
      "import", "indexed", "interface", "internal", "is", "library", "mapping",
      "memory", "modifier", "new", "override", "payable", "pragma", "private",
      "public", "pure", "receive", "return", "returns", "revert", "storage",
      "string", "struct", "true", "try", "type", "unchecked", "using", "view",
      "virtual", "while", "byte", "int", "uint", "fixed", "ufixed", "var",
      "wei", "gwei", "ether", "seconds", "minutes", "hours", "days", "weeks",
      "this", "super", "solidity"};
  return words;
}

bool is_sized_type(std::string_view w) {
  for (std::string_view prefix : {"uint", "int", "bytes"}) {
    if (w.size() > prefix.size() && w.substr(0, prefix.size()) == prefix &&
        std::all_of(w.begin() + static_cast<long>(prefix.size()), w.end(),
                    [](char c) { return c >= '0' && c <= '9'; })) {
      return true;
    }
  }
  return false;
}

}  // namespace

bool is_identifier_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' ||
         c == '$';
}

bool is_identifier_char(char c) {
  return is_identifier_start(c) || (c >= '0' && c <= '9');
}

bool is_keyword(std::string_view word) {
  return keywords().count(word) > 0 || is_sized_type(word);
}

LineIndex::LineIndex(std::string_view text) : size_(text.size()) {
  starts_.push_back(0);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '\n' && i + 1 < text.size()) starts_.push_back(i + 1);
  }
}

std::size_t LineIndex::line_of(std::size_t offset) const {
  auto it = std::upper_bound(starts_.begin(), starts_.end(), offset);
  return static_cast<std::size_t>(it - starts_.begin());
}

std::size_t LineIndex::column_of(std::size_t offset) const {
  return offset - starts_[line_of(offset) - 1] + 1;
}

std::size_t LineIndex::line_begin(std::size_t line) const {
  if (line == 0) return 0;
  if (line > starts_.size()) return size_;
  return starts_[line - 1];
}

ScanResult scan(std::string_view text, std::string_view origin) {
  ScanResult out;
  LineIndex lines(text);
  auto fail = [&](std::size_t at, const std::string& what) {
    throw MalformedSource(std::string(origin), lines.line_of(at),
                          lines.column_of(at), what);
  };

  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    char c = text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
        c == '\v') {
      ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && text[i + 1] == '/') {
      std::size_t end = text.find('\n', i);
      if (end == std::string_view::npos) end = n;
      std::size_t stop = end;
      if (stop > i && text[stop - 1] == '\r') --stop;
      out.comments.push_back({i, stop, false});
      i = end;
      continue;
    }
    if (c == '/' && i + 1 < n && text[i + 1] == '*') {
      std::size_t end = text.find("*/", i + 2);
      if (end == std::string_view::npos) fail(i, "unterminated block comment");
      out.comments.push_back({i, end + 2, true});
      i = end + 2;
      continue;
    }
    if (c == '"' || c == '\'') {
      std::size_t j = i + 1;
      while (j < n && text[j] != c) {
        if (text[j] == '\\') ++j;
        else if (text[j] == '\n') fail(i, "unterminated string literal");
        ++j;
      }
      if (j >= n) fail(i, "unterminated string literal");
      out.tokens.push_back({TokenKind::String, text.substr(i, j + 1 - i), i});
      i = j + 1;
      continue;
    }
    if (is_identifier_start(c)) {
      std::size_t j = i + 1;
      while (j < n && is_identifier_char(text[j])) ++j;
      out.tokens.push_back({TokenKind::Identifier, text.substr(i, j - i), i});
      i = j;
      continue;
    }
    if (c >= '0' && c <= '9') {
      std::size_t j = i + 1;
      while (j < n && (is_identifier_char(text[j]) || text[j] == '.')) {
        // `1..2` never occurs in Solidity, but stop before a member access.
        if (text[j] == '.' && (j + 1 >= n || !(text[j + 1] >= '0' && text[j + 1] <= '9'))) break;
        ++j;
      }
      out.tokens.push_back({TokenKind::Number, text.substr(i, j - i), i});
      i = j;
      continue;
    }
    std::size_t len = 1;
    if (i + 1 < n) {
      std::string_view two = text.substr(i, 2);
      if (std::find(kTwoCharOps.begin(), kTwoCharOps.end(), two) !=
          kTwoCharOps.end()) {
        len = 2;
      }
    }
    out.tokens.push_back({TokenKind::Punct, text.substr(i, len), i});
    i += len;
  }
  return out;
}

void check_balanced(std::string_view text, const std::vector<Token>& tokens,
                    std::string_view origin) {
  std::vector<std::size_t> open;
  LineIndex lines(text);
  for (const Token& t : tokens) {
    if (t.kind != TokenKind::Punct) continue;
    if (t.is("{")) {
      open.push_back(t.offset);
    } else if (t.is("}")) {
      if (open.empty()) {
        throw MalformedSource(std::string(origin), lines.line_of(t.offset),
                              lines.column_of(t.offset), "unmatched '}'");
      }
      open.pop_back();
    }
  }
  if (!open.empty()) {
    std::size_t at = open.front();
    throw MalformedSource(std::string(origin), lines.line_of(at),
                          lines.column_of(at), "unmatched '{'");
  }
}

std::size_t match_brace(const std::vector<Token>& tokens, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < tokens.size(); ++i) {
    if (tokens[i].kind != TokenKind::Punct) continue;
    if (tokens[i].is("{")) {
      ++depth;
    } else if (tokens[i].is("}")) {
      if (--depth == 0) return i;
    }
  }
  return tokens.size();
}

std::vector<std::string> code_identifiers(std::string_view text) {
  std::vector<std::string> out;
  std::unordered_set<std::string_view> seen;
  ScanResult scanned;
  try {
    scanned = scan(text);
  } catch (const MalformedSource&) {
    // Model output is often truncated; fall back to raw identifier runs.
    std::size_t i = 0;
    while (i < text.size()) {
      if (is_identifier_start(text[i])) {
        std::size_t j = i + 1;
        while (j < text.size() && is_identifier_char(text[j])) ++j;
        std::string_view w = text.substr(i, j - i);
        if (!is_keyword(w) && seen.insert(w).second) out.emplace_back(w);
        i = j;
      } else {
        ++i;
      }
    }
    return out;
  }
  for (const Token& t : scanned.tokens) {
    if (!t.is_identifier() || is_keyword(t.text)) continue;
    if (seen.insert(t.text).second) out.emplace_back(t.text);
  }
  return out;
}

}  // namespace solrepair::lex
