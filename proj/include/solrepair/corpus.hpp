#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace solrepair::corpus {

/// 1-based inclusive line range within a source file.
struct LineSpan {
  int start_line = 0;
  int end_line = 0;

  friend bool operator==(const LineSpan&, const LineSpan&) = default;
};

struct SourceFile {
  std::string path;
  std::string text;
  /// Top-level contract, interface and library names in declaration order.
  std::vector<std::string> contract_names;

  /// Scans `text` for declaration names. Throws MalformedSource when the
  /// text does not lex or braces do not balance.
  static SourceFile from_text(std::string path, std::string text);
};

/// One commented function extracted from a source file.
///
/// `comment` holds the comment block with leading indentation removed from
/// each line, every line newline-terminated. `signature` is the raw text
/// from the `function` keyword up to the opening brace, and `body` the
/// brace-delimited block, so `comment + signature + body` reproduces the
/// source slice once leading indentation is ignored.
struct FunctionRecord {
  std::string source_id;
  std::string contract;
  std::string name;
  std::string comment;
  std::string signature;
  std::string body;
  LineSpan span;
  std::string contract_type;

  std::string full_text() const { return comment + signature + body; }
  /// `<source>::<contract>.<name>@<start_line>`
  std::string id() const;
  std::string qualified_name() const { return contract + "." + name; }

  friend bool operator==(const FunctionRecord&, const FunctionRecord&) = default;
};

/// Every function-like declaration in a file, commented or not. Offsets are
/// byte positions in the source text.
struct FunctionDecl {
  std::string contract;
  std::string name;
  bool is_constructor = false;
  std::size_t begin = 0;      // `function` / `constructor` keyword
  std::size_t body_begin = 0; // opening brace
  std::size_t body_end = 0;   // one past the closing brace
  std::optional<std::size_t> comment_begin;
  int comment_line = 0;       // first line of the comment block, if any
};

std::vector<FunctionDecl> scan_declarations(const SourceFile& file);

std::vector<FunctionRecord> extract_functions(const SourceFile& file);

inline constexpr std::string_view kVerificationStatement =
    "uint256 this_is_a_test_variable;";

/// Inserts the verification statement as the first statement of the body.
/// Throws MalformedRecord when the body has no braces.
FunctionRecord inject_verification_statement(const FunctionRecord& record);

enum class FilterReason { None, Mint, OwnerModifier, OwnerCheck, ConstructorState };

std::string_view to_string(FilterReason reason);

struct FilterDecision {
  bool keep = true;
  FilterReason reason = FilterReason::None;
  /// Name of the function (the record itself or a same-contract callee)
  /// that matched the deny-list.
  std::string via;
};

/// Syntactic deny-list approximating "needs on-chain state to verify".
struct FilterConfig {
  std::vector<std::string> mint_identifiers = {"mint", "_mint"};
  /// Modifiers matching this ECMAScript regex gate on an owner/role.
  std::string owner_modifier_pattern = "^only[A-Z_][A-Za-z0-9_]*$";
  /// Identifiers compared against msg.sender that count as owner checks.
  std::string owner_identifier_pattern = "[Oo]wner|[Aa]dmin";
  /// Exclude functions reading state assigned in the constructor.
  bool constructor_state = true;
};

FilterDecision filter_state_dependent(const FunctionRecord& record,
                                      const SourceFile& file,
                                      const FilterConfig& config = {});

struct FilterReport {
  std::size_t total_extracted = 0;
  std::size_t excluded_no_comment = 0;
  std::size_t excluded_state_dependent = 0;
  std::size_t excluded_mint = 0;
  std::size_t retained = 0;
  std::size_t dedup_removed = 0;
  double duplication_rate = 0.0;

  std::size_t exclusions() const {
    return excluded_no_comment + excluded_state_dependent + excluded_mint;
  }
  /// Recomputes duplication_rate from the counts.
  void finalize();
  friend bool operator==(const FilterReport&, const FilterReport&) = default;
};

/// Key used for exact deduplication: the full text with trailing whitespace
/// trimmed on every line.
std::string dedup_key(const FunctionRecord& record);

std::pair<std::vector<FunctionRecord>, FilterReport> dedup_exact(
    std::vector<FunctionRecord> records);

double jaccard_overlap(const FunctionRecord& a, const FunctionRecord& b);

/// Pairs (i, j), i < j, whose overlap reaches `threshold`.
std::vector<std::pair<std::size_t, std::size_t>> overlapping_pairs(
    const std::vector<FunctionRecord>& records, double threshold = 0.9);

struct DatasetBuild {
  std::vector<FunctionRecord> records;
  FilterReport report;
  /// Files that failed to scan, with the error text.
  std::vector<std::pair<std::string, std::string>> skipped;
};

/// Extraction, state-dependence filtering and deduplication over a corpus.
DatasetBuild build_dataset(const std::vector<SourceFile>& files,
                           const FilterConfig& config = {});

}  // namespace solrepair::corpus
