#include "solrepair/corpus.hpp"

#include <algorithm>
#include <deque>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "solrepair/error.hpp"
#include "solrepair/lexer.hpp"
#include "solrepair/terms.hpp"

namespace solrepair::corpus {

namespace {

using lex::Token;

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
  });
}

std::string_view strip_leading(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

std::string_view line_text(std::string_view text, const lex::LineIndex& lines,
                           std::size_t line) {
  std::size_t b = lines.line_begin(line);
  std::size_t e = lines.line_begin(line + 1);
  std::string_view s = text.substr(b, e - b);
  if (!s.empty() && s.back() == '\n') s.remove_suffix(1);
  return s;
}

/// Lexed view of one source file, shared by extraction and filtering.
struct FileAnalysis {
  const SourceFile& file;
  lex::ScanResult scanned;
  lex::LineIndex lines;
  std::vector<FunctionDecl> decls;

  explicit FileAnalysis(const SourceFile& f)
      : file(f), scanned(lex::scan(f.text, f.path)), lines(f.text) {
    lex::check_balanced(f.text, scanned.tokens, f.path);
    collect_declarations();
  }

  std::size_t token_at(std::size_t offset) const {
    auto it = std::lower_bound(
        scanned.tokens.begin(), scanned.tokens.end(), offset,
        [](const Token& t, std::size_t off) { return t.offset < off; });
    return static_cast<std::size_t>(it - scanned.tokens.begin());
  }

  /// Tokens in [begin, end) byte range.
  std::pair<std::size_t, std::size_t> token_range(std::size_t begin,
                                                  std::size_t end) const {
    return {token_at(begin), token_at(end)};
  }

  void collect_declarations() {
    const auto& toks = scanned.tokens;
    std::string contract;
    std::size_t contract_close = toks.size();
    std::string pending_contract;
    int depth = 0;

    std::size_t i = 0;
    while (i < toks.size()) {
      const Token& t = toks[i];
      if (i == contract_close) {
        contract.clear();
        contract_close = toks.size();
        --depth;
        ++i;
        continue;
      }
      if (depth == 0 && t.is_identifier() &&
          (t.is("contract") || t.is("interface") || t.is("library")) &&
          i + 1 < toks.size() && toks[i + 1].is_identifier()) {
        pending_contract = std::string(toks[i + 1].text);
        i += 2;
        continue;
      }
      if (t.kind == lex::TokenKind::Punct && t.is("{")) {
        if (depth == 0 && !pending_contract.empty()) {
          contract = pending_contract;
          pending_contract.clear();
          contract_close = lex::match_brace(toks, i);
        }
        ++depth;
        ++i;
        continue;
      }
      if (t.kind == lex::TokenKind::Punct && t.is("}")) {
        --depth;
        ++i;
        continue;
      }
      bool is_function = t.is_identifier() && t.is("function");
      bool is_constructor = t.is_identifier() && t.is("constructor") &&
                            i + 1 < toks.size() && toks[i + 1].is("(");
      bool is_modifier = t.is_identifier() && t.is("modifier");
      if (!is_function && !is_constructor && !is_modifier) {
        ++i;
        continue;
      }

      // Header runs to the first `{` or `;` outside parentheses.
      std::size_t j = i + 1;
      int parens = 0;
      for (; j < toks.size(); ++j) {
        const Token& h = toks[j];
        if (h.kind != lex::TokenKind::Punct) continue;
        if (h.is("(")) ++parens;
        else if (h.is(")")) --parens;
        else if (parens == 0 && (h.is("{") || h.is(";"))) break;
      }
      if (j >= toks.size() || toks[j].is(";")) {
        i = j + 1;
        continue;
      }
      std::size_t close = lex::match_brace(toks, j);
      if (!is_modifier) {
        FunctionDecl d;
        d.contract = contract;
        if (is_constructor) {
          d.name = "constructor";
          d.is_constructor = true;
        } else {
          d.name = (i + 1 < toks.size() && toks[i + 1].is_identifier())
                       ? std::string(toks[i + 1].text)
                       : std::string();
          d.is_constructor = !contract.empty() && d.name == contract;
        }
        d.begin = t.offset;
        d.body_begin = toks[j].offset;
        d.body_end = toks[close].offset + 1;
        if (is_function) attach_comment(d);
        decls.push_back(std::move(d));
      }
      i = close + 1;
    }
  }

  void attach_comment(FunctionDecl& d) const {
    std::string_view text = file.text;
    std::size_t line = lines.line_of(d.begin);
    if (!is_blank(text.substr(lines.line_begin(line), d.begin - lines.line_begin(line)))) {
      return;
    }
    auto covered = [&](std::size_t off) {
      for (const lex::Comment& c : scanned.comments) {
        if (off >= c.begin && off < c.end) return true;
        if (c.begin > off) break;
      }
      return false;
    };
    auto is_comment_line = [&](std::size_t ln) {
      std::string_view s = line_text(text, lines, ln);
      if (is_blank(s)) return false;
      std::size_t base = lines.line_begin(ln);
      for (std::size_t k = 0; k < s.size(); ++k) {
        char c = s[k];
        if (c == ' ' || c == '\t' || c == '\r') continue;
        if (!covered(base + k)) return false;
      }
      return true;
    };
    auto starts_comment = [&](std::size_t ln) {
      std::string_view s = line_text(text, lines, ln);
      std::size_t base = lines.line_begin(ln);
      std::size_t k = s.size() - strip_leading(s).size();
      std::size_t off = base + k;
      return std::any_of(scanned.comments.begin(), scanned.comments.end(),
                         [&](const lex::Comment& c) { return c.begin == off; });
    };

    std::size_t top = line;
    while (top > 1 && is_comment_line(top - 1)) --top;
    while (top < line && !starts_comment(top)) ++top;
    if (top == line) return;
    d.comment_begin = lines.line_begin(top);
    d.comment_line = static_cast<int>(top);
  }

  FunctionRecord to_record(const FunctionDecl& d) const {
    std::string_view text = file.text;
    FunctionRecord r;
    r.source_id = file.path;
    r.contract = d.contract;
    r.name = d.name;
    std::size_t fn_line = lines.line_of(d.begin);
    for (std::size_t ln = static_cast<std::size_t>(d.comment_line); ln < fn_line; ++ln) {
      r.comment += strip_leading(line_text(text, lines, ln));
      r.comment += '\n';
    }
    r.signature = std::string(text.substr(d.begin, d.body_begin - d.begin));
    r.body = std::string(text.substr(d.body_begin, d.body_end - d.body_begin));
    r.span = {d.comment_line, static_cast<int>(lines.line_of(d.body_end - 1))};
    return r;
  }

  const FunctionDecl* find(const FunctionRecord& r) const {
    for (const FunctionDecl& d : decls) {
      if (d.is_constructor || !d.comment_begin) continue;
      if (d.contract == r.contract && d.name == r.name &&
          d.comment_line == r.span.start_line) {
        return &d;
      }
    }
    for (const FunctionDecl& d : decls) {
      if (d.contract == r.contract && d.name == r.name &&
          std::string_view(file.text).substr(d.body_begin, d.body_end - d.body_begin) == r.body) {
        return &d;
      }
    }
    return nullptr;
  }
};

/// Tokens of a free-standing snippet, used when a record cannot be located
/// in its file.
struct Snippet {
  std::string text;
  lex::ScanResult scanned;
};

struct FunctionTokens {
  std::string name;
  std::vector<Token> signature;
  std::vector<Token> body;
};

class DenyList {
 public:
  explicit DenyList(const FilterConfig& c)
      : config_(c),
        modifier_re_(c.owner_modifier_pattern),
        owner_re_(c.owner_identifier_pattern),
        mint_(c.mint_identifiers.begin(), c.mint_identifiers.end()) {}

  bool mint(const FunctionTokens& f) const {
    return std::any_of(f.body.begin(), f.body.end(), [&](const Token& t) {
      return t.is_identifier() && mint_.count(std::string(t.text)) > 0;
    });
  }

  bool owner_modifier(const FunctionTokens& f) const {
    // Skip the keyword and the function name.
    for (std::size_t i = 2; i < f.signature.size(); ++i) {
      const Token& t = f.signature[i];
      if (t.is_identifier() && std::regex_search(std::string(t.text), modifier_re_)) {
        return true;
      }
    }
    return false;
  }

  bool owner_check(const FunctionTokens& f) const {
    const auto& b = f.body;
    auto owner_ident = [&](std::size_t k) {
      return k < b.size() && b[k].is_identifier() &&
             std::regex_search(std::string(b[k].text), owner_re_);
    };
    auto is_cmp = [&](std::size_t k) {
      return k < b.size() && (b[k].is("==") || b[k].is("!="));
    };
    for (std::size_t i = 0; i + 2 < b.size(); ++i) {
      if (!(b[i].is("msg") && b[i + 1].is(".") && b[i + 2].is("sender"))) continue;
      // msg.sender == owner / owner()
      if (is_cmp(i + 3) && owner_ident(i + 4)) return true;
      // owner == msg.sender
      if (i >= 2 && is_cmp(i - 1) && owner_ident(i - 2)) return true;
      // owner() == msg.sender
      if (i >= 4 && is_cmp(i - 1) && b[i - 2].is(")") && b[i - 3].is("(") &&
          owner_ident(i - 4)) {
        return true;
      }
    }
    return false;
  }

  const FilterConfig& config() const { return config_; }

 private:
  const FilterConfig& config_;
  std::regex modifier_re_;
  std::regex owner_re_;
  std::unordered_set<std::string> mint_;
};

std::vector<Token> slice(const std::vector<Token>& toks, std::pair<std::size_t, std::size_t> r) {
  return {toks.begin() + static_cast<long>(r.first), toks.begin() + static_cast<long>(r.second)};
}

FilterDecision decide(const FileAnalysis* fa, const FunctionDecl* target,
                      const FunctionRecord& record, const FilterConfig& config) {
  DenyList deny(config);

  // Closure of the target and its same-contract callees, breadth first.
  std::vector<FunctionTokens> closure;
  std::unordered_set<std::string> assigned_in_constructor;
  std::optional<Snippet> standalone;

  if (fa != nullptr && target != nullptr) {
    const auto& toks = fa->scanned.tokens;
    std::unordered_map<std::string, std::vector<const FunctionDecl*>> by_name;
    for (const FunctionDecl& d : fa->decls) {
      if (d.contract != target->contract) continue;
      if (d.is_constructor) {
        auto body = slice(toks, fa->token_range(d.body_begin, d.body_end));
        for (std::size_t k = 0; k + 1 < body.size(); ++k) {
          if (body[k].is_identifier() && body[k + 1].is("=")) {
            assigned_in_constructor.insert(std::string(body[k].text));
          }
        }
      } else {
        by_name[d.name].push_back(&d);
      }
    }
    std::deque<const FunctionDecl*> queue{target};
    std::set<const FunctionDecl*> seen{target};
    while (!queue.empty()) {
      const FunctionDecl* d = queue.front();
      queue.pop_front();
      FunctionTokens ft;
      ft.name = d->name;
      ft.signature = slice(toks, fa->token_range(d->begin, d->body_begin));
      ft.body = slice(toks, fa->token_range(d->body_begin, d->body_end));
      for (std::size_t k = 0; k + 1 < ft.body.size(); ++k) {
        if (!ft.body[k].is_identifier() || !ft.body[k + 1].is("(")) continue;
        auto it = by_name.find(std::string(ft.body[k].text));
        if (it == by_name.end()) continue;
        for (const FunctionDecl* callee : it->second) {
          if (seen.insert(callee).second) queue.push_back(callee);
        }
      }
      closure.push_back(std::move(ft));
    }
  } else {
    standalone.emplace();
    standalone->text = record.signature + record.body;
    standalone->scanned = lex::scan(standalone->text, record.source_id);
    FunctionTokens ft;
    ft.name = record.name;
    std::size_t split = record.signature.size();
    for (const Token& t : standalone->scanned.tokens) {
      (t.offset < split ? ft.signature : ft.body).push_back(t);
    }
    closure.push_back(std::move(ft));
  }

  for (const auto& f : closure) {
    if (deny.mint(f)) return {false, FilterReason::Mint, f.name};
  }
  for (const auto& f : closure) {
    if (deny.owner_modifier(f)) return {false, FilterReason::OwnerModifier, f.name};
  }
  for (const auto& f : closure) {
    if (deny.owner_check(f)) return {false, FilterReason::OwnerCheck, f.name};
  }
  if (config.constructor_state && !assigned_in_constructor.empty()) {
    for (const auto& f : closure) {
      for (const Token& t : f.body) {
        if (t.is_identifier() && assigned_in_constructor.count(std::string(t.text))) {
          return {false, FilterReason::ConstructorState, f.name};
        }
      }
    }
  }
  return {};
}

std::set<std::string> term_set(const FunctionRecord& r) {
  auto terms = tokenize_terms(r.full_text());
  return {terms.begin(), terms.end()};
}

}  // namespace

std::string FunctionRecord::id() const {
  return source_id + "::" + contract + "." + name + "@" + std::to_string(span.start_line);
}

SourceFile SourceFile::from_text(std::string path, std::string text) {
  SourceFile f{std::move(path), std::move(text), {}};
  auto scanned = lex::scan(f.text, f.path);
  lex::check_balanced(f.text, scanned.tokens, f.path);
  int depth = 0;
  const auto& toks = scanned.tokens;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const Token& t = toks[i];
    if (t.is("{")) ++depth;
    else if (t.is("}")) --depth;
    else if (depth == 0 && t.is_identifier() &&
             (t.is("contract") || t.is("interface") || t.is("library")) &&
             i + 1 < toks.size() && toks[i + 1].is_identifier()) {
      f.contract_names.emplace_back(toks[i + 1].text);
    }
  }
  return f;
}

std::vector<FunctionDecl> scan_declarations(const SourceFile& file) {
  return FileAnalysis(file).decls;
}

std::vector<FunctionRecord> extract_functions(const SourceFile& file) {
  FileAnalysis fa(file);
  std::vector<FunctionRecord> out;
  for (const FunctionDecl& d : fa.decls) {
    if (d.is_constructor || !d.comment_begin) continue;
    out.push_back(fa.to_record(d));
  }
  return out;
}

FunctionRecord inject_verification_statement(const FunctionRecord& record) {
  std::size_t open = record.body.find('{');
  if (open == std::string::npos || record.body.find('}', open) == std::string::npos) {
    throw MalformedRecord("function body has no braces: " + record.id());
  }
  FunctionRecord out = record;
  std::string insert = " ";
  insert += kVerificationStatement;
  char next = open + 1 < record.body.size() ? record.body[open + 1] : '\0';
  if (next != ' ' && next != '\t' && next != '\n' && next != '\r') insert += ' ';
  out.body.insert(open + 1, insert);
  return out;
}

std::string_view to_string(FilterReason reason) {
  switch (reason) {
    case FilterReason::None: return "none";
    case FilterReason::Mint: return "mint";
    case FilterReason::OwnerModifier: return "owner-modifier";
    case FilterReason::OwnerCheck: return "owner-check";
    case FilterReason::ConstructorState: return "constructor-state";
  }
  return "unknown";
}

FilterDecision filter_state_dependent(const FunctionRecord& record,
                                      const SourceFile& file,
                                      const FilterConfig& config) {
  std::optional<FileAnalysis> fa;
  try {
    fa.emplace(file);
  } catch (const MalformedSource&) {
    return decide(nullptr, nullptr, record, config);
  }
  return decide(&*fa, fa->find(record), record, config);
}

void FilterReport::finalize() {
  std::size_t denom = total_extracted > exclusions() ? total_extracted - exclusions() : 0;
  duplication_rate = static_cast<double>(dedup_removed) /
                     static_cast<double>(std::max<std::size_t>(1, denom));
}

std::string dedup_key(const FunctionRecord& record) {
  std::string full = record.full_text();
  std::string key;
  key.reserve(full.size());
  std::size_t start = 0;
  while (start <= full.size()) {
    std::size_t nl = full.find('\n', start);
    std::size_t end = nl == std::string::npos ? full.size() : nl;
    std::size_t trimmed = end;
    while (trimmed > start && (full[trimmed - 1] == ' ' || full[trimmed - 1] == '\t' ||
                               full[trimmed - 1] == '\r')) {
      --trimmed;
    }
    key.append(full, start, trimmed - start);
    if (nl == std::string::npos) break;
    key += '\n';
    start = nl + 1;
  }
  return key;
}

std::pair<std::vector<FunctionRecord>, FilterReport> dedup_exact(
    std::vector<FunctionRecord> records) {
  FilterReport report;
  report.total_extracted = records.size();
  std::unordered_set<std::string> seen;
  std::vector<FunctionRecord> kept;
  for (auto& r : records) {
    if (seen.insert(dedup_key(r)).second) {
      kept.push_back(std::move(r));
    } else {
      ++report.dedup_removed;
    }
  }
  report.retained = kept.size();
  report.finalize();
  return {std::move(kept), report};
}

double jaccard_overlap(const FunctionRecord& a, const FunctionRecord& b) {
  auto sa = term_set(a);
  auto sb = term_set(b);
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : sa) inter += sb.count(t);
  std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::pair<std::size_t, std::size_t>> overlapping_pairs(
    const std::vector<FunctionRecord>& records, double threshold) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = i + 1; j < records.size(); ++j) {
      if (jaccard_overlap(records[i], records[j]) >= threshold) out.emplace_back(i, j);
    }
  }
  return out;
}

DatasetBuild build_dataset(const std::vector<SourceFile>& files,
                           const FilterConfig& config) {
  DatasetBuild out;
  std::vector<FunctionRecord> kept;
  for (const SourceFile& file : files) {
    FileAnalysis fa(file);
    for (const FunctionDecl& d : fa.decls) {
      if (d.is_constructor) continue;
      ++out.report.total_extracted;
      if (!d.comment_begin) {
        ++out.report.excluded_no_comment;
        continue;
      }
      FunctionRecord r = fa.to_record(d);
      FilterDecision decision = decide(&fa, &d, r, config);
      if (decision.keep) {
        kept.push_back(std::move(r));
      } else if (decision.reason == FilterReason::Mint) {
        ++out.report.excluded_mint;
      } else {
        ++out.report.excluded_state_dependent;
      }
    }
  }
  auto [unique, dedup] = dedup_exact(std::move(kept));
  out.records = std::move(unique);
  out.report.dedup_removed = dedup.dedup_removed;
  out.report.retained = out.records.size();
  out.report.finalize();
  return out;
}

}  // namespace solrepair::corpus
