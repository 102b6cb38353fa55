#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace solrepair::retrieval {

enum class Method { Lcs, Bm25, Tfidf, Jaccard, Dense };

std::string_view to_string(Method m);
/// Throws ConfigError on an unknown name.
Method method_from_string(std::string_view name);

struct RetrievalConfig {
  Method method = Method::Lcs;
  int window_lines = 1;
  int step_lines = 1;
  int max_snippets = 2;
  double bm25_k1 = 1.2;
  double bm25_b = 0.75;
  /// LCS matches shorter than this are ignored.
  int lcs_min_length = 2;

  /// Throws InvalidArgument when a size field is below 1.
  void validate() const;
};

struct Query {
  enum class Kind { Identifier, Line };
  Kind kind = Kind::Identifier;
  std::string text;

  static Query identifier(std::string t) { return {Kind::Identifier, std::move(t)}; }
  static Query line(std::string t) { return {Kind::Line, std::move(t)}; }
  friend bool operator==(const Query&, const Query&) = default;
};

struct RetrievedSnippet {
  std::size_t line_index = 0;  // first context line of the window, 0-based
  std::string text;
  double score = 0.0;
  std::string matched_fragment;  // LCS only

  friend bool operator==(const RetrievedSnippet&, const RetrievedSnippet&) = default;
};

/// A retrieval unit: consecutive context lines joined with '\n'.
struct Window {
  std::size_t line_index = 0;
  std::string text;
};

std::vector<Window> make_windows(const std::vector<std::string>& lines,
                                 const RetrievalConfig& cfg);

/// Longest-substring matching: candidate substrings of the query are tried
/// from longest to shortest; the first length with any containing window
/// defines the match set.
std::vector<RetrievedSnippet> lcs_retrieve(const Query& query,
                                           const std::vector<std::string>& context_lines,
                                           const RetrievalConfig& cfg);

std::vector<RetrievedSnippet> bm25_retrieve(const Query& query,
                                            const std::vector<std::string>& context_lines,
                                            const RetrievalConfig& cfg);

std::vector<RetrievedSnippet> tfidf_retrieve(const Query& query,
                                             const std::vector<std::string>& context_lines,
                                             const RetrievalConfig& cfg);

std::vector<RetrievedSnippet> jaccard_retrieve(const Query& query,
                                               const std::vector<std::string>& context_lines,
                                               const RetrievalConfig& cfg);

/// Source of fixed-dimension embeddings for dense retrieval.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  /// One vector per text. Throws RetrievalUnavailable on failure.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
  /// Whether embed may be called from several threads at once.
  virtual bool concurrent() const { return false; }
};

/// Deterministic local provider: signed feature hashing of term counts.
class HashingEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HashingEmbeddingProvider(std::size_t dimension = 256) : dimension_(dimension) {}
  std::string name() const override { return "hashing"; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  bool concurrent() const override { return true; }

 private:
  std::size_t dimension_;
};

/// JSON-over-HTTP provider: POST {"texts":[...]} -> {"vectors":[[...],...]}.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  /// `url` like http://host:port/embed. Dimension is learned from the first
  /// response unless given.
  explicit HttpEmbeddingProvider(std::string url, std::size_t dimension = 0,
                                 double timeout_seconds = 30.0);
  std::string name() const override { return "http:" + url_; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  /// Not concurrent: the dimension is learned from the first response.

 private:
  std::string url_;
  std::size_t dimension_;
  double timeout_seconds_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Cosine similarity between embed(query) and each window. Zero vectors
/// score 0. Every window is ranked; nothing is filtered by score.
std::vector<RetrievedSnippet> dense_retrieve(const Query& query,
                                             const std::vector<std::string>& context_lines,
                                             EmbeddingProvider& provider,
                                             const RetrievalConfig& cfg);

/// Dispatch on cfg.method. `provider` is required for Method::Dense.
std::vector<RetrievedSnippet> retrieve(const Query& query,
                                       const std::vector<std::string>& context_lines,
                                       const RetrievalConfig& cfg,
                                       EmbeddingProvider* provider = nullptr);

/// Runs one retrieval per query and merges: best score per window, then
/// (score desc, line_index asc), truncated to max_snippets.
std::vector<RetrievedSnippet> retrieve_all(const std::vector<Query>& queries,
                                           const std::vector<std::string>& context_lines,
                                           const RetrievalConfig& cfg,
                                           EmbeddingProvider* provider = nullptr);

}  // namespace solrepair::retrieval
