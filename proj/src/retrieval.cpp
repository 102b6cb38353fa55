#include "solrepair/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <unordered_map>

#include "json.hpp"
#include "solrepair/error.hpp"
#include "solrepair/http.hpp"
#include "solrepair/terms.hpp"

namespace solrepair::retrieval {

namespace {

void rank(std::vector<RetrievedSnippet>& hits, int max_snippets) {
  std::stable_sort(hits.begin(), hits.end(),
                   [](const RetrievedSnippet& a, const RetrievedSnippet& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.line_index < b.line_index;
                   });
  if (hits.size() > static_cast<std::size_t>(max_snippets)) {
    hits.resize(static_cast<std::size_t>(max_snippets));
  }
}

std::vector<RetrievedSnippet> keep_positive(const std::vector<Window>& windows,
                                            const std::vector<double>& scores,
                                            int max_snippets) {
  std::vector<RetrievedSnippet> hits;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (scores[i] > 0.0 && std::isfinite(scores[i])) {
      hits.push_back({windows[i].line_index, windows[i].text, scores[i], {}});
    }
  }
  rank(hits, max_snippets);
  return hits;
}

std::map<std::string, int> term_counts(std::string_view text) {
  std::map<std::string, int> counts;
  for (auto& t : tokenize_terms(text)) ++counts[t];
  return counts;
}

/// Longest common substring of query and text; among the longest, the one
/// starting earliest in the query. Returns {length, start in query}.
std::pair<std::size_t, std::size_t> longest_common(std::string_view query,
                                                   std::string_view text) {
  std::vector<std::size_t> prev(query.size() + 1, 0), cur(query.size() + 1, 0);
  std::size_t best = 0, best_start = 0;
  for (char c : text) {
    for (std::size_t j = 0; j < query.size(); ++j) {
      cur[j + 1] = query[j] == c ? prev[j] + 1 : 0;
      std::size_t len = cur[j + 1];
      if (len == 0) continue;
      std::size_t start = j + 1 - len;
      if (len > best || (len == best && start < best_start)) {
        best = len;
        best_start = start;
      }
    }
    std::swap(prev, cur);
  }
  return {best, best_start};
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Lcs: return "lcs";
    case Method::Bm25: return "bm25";
    case Method::Tfidf: return "tfidf";
    case Method::Jaccard: return "jaccard";
    case Method::Dense: return "dense";
  }
  return "unknown";
}

Method method_from_string(std::string_view name) {
  for (Method m : {Method::Lcs, Method::Bm25, Method::Tfidf, Method::Jaccard, Method::Dense}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown retrieval method: " + std::string(name));
}

void RetrievalConfig::validate() const {
  if (window_lines < 1) throw InvalidArgument("retrieval.window_lines must be >= 1");
  if (step_lines < 1) throw InvalidArgument("retrieval.step_lines must be >= 1");
  if (max_snippets < 1) throw InvalidArgument("retrieval.max_snippets must be >= 1");
  if (lcs_min_length < 1) throw InvalidArgument("retrieval.lcs_min_length must be >= 1");
}

std::vector<Window> make_windows(const std::vector<std::string>& lines,
                                 const RetrievalConfig& cfg) {
  cfg.validate();
  std::vector<Window> out;
  const auto w = static_cast<std::size_t>(cfg.window_lines);
  const auto step = static_cast<std::size_t>(cfg.step_lines);
  for (std::size_t i = 0; i < lines.size(); i += step) {
    Window win;
    win.line_index = i;
    for (std::size_t k = i; k < std::min(lines.size(), i + w); ++k) {
      if (k > i) win.text += '\n';
      win.text += lines[k];
    }
    out.push_back(std::move(win));
    if (i + w >= lines.size()) break;
  }
  return out;
}

std::vector<RetrievedSnippet> lcs_retrieve(const Query& query,
                                           const std::vector<std::string>& context_lines,
                                           const RetrievalConfig& cfg) {
  auto windows = make_windows(context_lines, cfg);
  const auto min_len = static_cast<std::size_t>(cfg.lcs_min_length);
  std::size_t best = 0;
  std::vector<std::pair<std::size_t, std::size_t>> found(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    found[i] = longest_common(query.text, windows[i].text);
    best = std::max(best, found[i].first);
  }
  std::vector<RetrievedSnippet> hits;
  if (best < min_len) return hits;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (found[i].first != best) continue;
    hits.push_back({windows[i].line_index, windows[i].text, static_cast<double>(best),
                    query.text.substr(found[i].second, best)});
  }
  rank(hits, cfg.max_snippets);
  return hits;
}

std::vector<RetrievedSnippet> bm25_retrieve(const Query& query,
                                            const std::vector<std::string>& context_lines,
                                            const RetrievalConfig& cfg) {
  auto windows = make_windows(context_lines, cfg);
  if (windows.empty()) return {};
  std::vector<std::map<std::string, int>> docs;
  std::vector<double> lengths;
  std::unordered_map<std::string, int> df;
  double total = 0;
  for (const auto& w : windows) {
    auto terms = tokenize_terms(w.text);
    lengths.push_back(static_cast<double>(terms.size()));
    total += static_cast<double>(terms.size());
    std::map<std::string, int> counts;
    for (auto& t : terms) ++counts[t];
    for (const auto& [t, _] : counts) ++df[t];
    docs.push_back(std::move(counts));
  }
  const double n = static_cast<double>(windows.size());
  const double avgdl = total / n;
  const double k1 = cfg.bm25_k1, b = cfg.bm25_b;

  std::vector<double> scores(windows.size(), 0.0);
  if (avgdl > 0) {
    for (const auto& term : tokenize_terms(query.text)) {
      auto it = df.find(term);
      if (it == df.end()) continue;
      double d = it->second;
      double idf = std::max(0.0, std::log(1.0 + (n - d + 0.5) / (d + 0.5)));
      for (std::size_t i = 0; i < docs.size(); ++i) {
        auto tf_it = docs[i].find(term);
        if (tf_it == docs[i].end()) continue;
        double tf = tf_it->second;
        scores[i] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * lengths[i] / avgdl));
      }
    }
  }
  return keep_positive(windows, scores, cfg.max_snippets);
}

std::vector<RetrievedSnippet> tfidf_retrieve(const Query& query,
                                             const std::vector<std::string>& context_lines,
                                             const RetrievalConfig& cfg) {
  auto windows = make_windows(context_lines, cfg);
  if (windows.empty()) return {};
  std::vector<std::map<std::string, int>> docs;
  std::unordered_map<std::string, int> df;
  for (const auto& w : windows) {
    docs.push_back(term_counts(w.text));
    for (const auto& [t, _] : docs.back()) ++df[t];
  }
  const double n = static_cast<double>(windows.size());
  auto idf = [&](const std::string& t) {
    auto it = df.find(t);
    double d = it == df.end() ? 1.0 : std::max(1, it->second);
    return std::log(n / d);
  };

  std::map<std::string, double> qvec;
  for (const auto& [t, c] : term_counts(query.text)) qvec[t] = c * idf(t);
  double qnorm = 0;
  for (const auto& [_, v] : qvec) qnorm += v * v;
  qnorm = std::sqrt(qnorm);
  if (qnorm == 0.0) return {};

  std::vector<double> scores(windows.size(), 0.0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double dot = 0, dnorm = 0;
    for (const auto& [t, c] : docs[i]) {
      double v = c * idf(t);
      dnorm += v * v;
      auto q = qvec.find(t);
      if (q != qvec.end()) dot += v * q->second;
    }
    if (dnorm > 0) scores[i] = dot / (qnorm * std::sqrt(dnorm));
  }
  return keep_positive(windows, scores, cfg.max_snippets);
}

std::vector<RetrievedSnippet> jaccard_retrieve(const Query& query,
                                               const std::vector<std::string>& context_lines,
                                               const RetrievalConfig& cfg) {
  auto windows = make_windows(context_lines, cfg);
  auto qterms = tokenize_terms(query.text);
  std::set<std::string> qset(qterms.begin(), qterms.end());
  std::vector<double> scores(windows.size(), 0.0);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    auto terms = tokenize_terms(windows[i].text);
    std::set<std::string> wset(terms.begin(), terms.end());
    std::size_t inter = 0;
    for (const auto& t : qset) inter += wset.count(t);
    std::size_t uni = qset.size() + wset.size() - inter;
    if (uni > 0) scores[i] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return keep_positive(windows, scores, cfg.max_snippets);
}

std::vector<std::vector<double>> HashingEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<double> v(dimension_, 0.0);
    for (const auto& t : tokenize_terms(text)) {
      std::uint64_t h = fnv1a(t);
      v[h % dimension_] += (h >> 63) != 0U ? -1.0 : 1.0;
    }
    out.push_back(std::move(v));
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string url, std::size_t dimension,
                                             double timeout_seconds)
    : url_(std::move(url)), dimension_(dimension), timeout_seconds_(timeout_seconds) {}

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
  nlohmann::json req = {{"texts", texts}};
  auto res = http::post_json(url_, req.dump(), {}, timeout_seconds_);
  if (!res.error.empty()) {
    throw RetrievalUnavailable("embedding provider " + url_ + ": " + res.error);
  }
  if (res.status != 200) {
    throw RetrievalUnavailable("embedding provider " + url_ + " returned HTTP " +
                               std::to_string(res.status) + ": " + res.body);
  }
  std::vector<std::vector<double>> vectors;
  try {
    vectors = nlohmann::json::parse(res.body).at("vectors").get<std::vector<std::vector<double>>>();
  } catch (const std::exception& e) {
    throw RetrievalUnavailable("embedding provider " + url_ + " sent a bad response: " + e.what());
  }
  if (vectors.size() != texts.size()) {
    throw RetrievalUnavailable("embedding provider returned " + std::to_string(vectors.size()) +
                               " vectors for " + std::to_string(texts.size()) + " texts");
  }
  for (const auto& v : vectors) {
    if (dimension_ == 0) dimension_ = v.size();
    if (v.size() != dimension_) {
      throw RetrievalUnavailable("embedding provider returned inconsistent dimensions");
    }
  }
  return vectors;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<RetrievedSnippet> dense_retrieve(const Query& query,
                                             const std::vector<std::string>& context_lines,
                                             EmbeddingProvider& provider,
                                             const RetrievalConfig& cfg) {
  auto windows = make_windows(context_lines, cfg);
  if (windows.empty()) return {};
  std::vector<std::string> texts{query.text};
  for (const auto& w : windows) texts.push_back(w.text);
  auto vectors = provider.embed(texts);
  if (vectors.size() != texts.size()) {
    throw RetrievalUnavailable("embedding provider " + provider.name() +
                               " returned the wrong number of vectors");
  }
  const std::size_t dim = vectors.front().size();
  if (dim == 0) {
    throw RetrievalUnavailable("embedding provider " + provider.name() +
                               " returned zero-dimension vectors");
  }
  std::vector<RetrievedSnippet> hits;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (vectors[i + 1].size() != dim) {
      throw RetrievalUnavailable("embedding provider " + provider.name() +
                                 " returned inconsistent dimensions");
    }
    hits.push_back({windows[i].line_index, windows[i].text, cosine(vectors[0], vectors[i + 1]), {}});
  }
  rank(hits, cfg.max_snippets);
  return hits;
}

std::vector<RetrievedSnippet> retrieve(const Query& query,
                                       const std::vector<std::string>& context_lines,
                                       const RetrievalConfig& cfg,
                                       EmbeddingProvider* provider) {
  switch (cfg.method) {
    case Method::Lcs: return lcs_retrieve(query, context_lines, cfg);
    case Method::Bm25: return bm25_retrieve(query, context_lines, cfg);
    case Method::Tfidf: return tfidf_retrieve(query, context_lines, cfg);
    case Method::Jaccard: return jaccard_retrieve(query, context_lines, cfg);
    case Method::Dense:
      if (provider == nullptr) {
        throw RetrievalUnavailable("dense retrieval requires an embedding provider");
      }
      return dense_retrieve(query, context_lines, *provider, cfg);
  }
  return {};
}

std::vector<RetrievedSnippet> retrieve_all(const std::vector<Query>& queries,
                                           const std::vector<std::string>& context_lines,
                                           const RetrievalConfig& cfg,
                                           EmbeddingProvider* provider) {
  std::map<std::size_t, RetrievedSnippet> best;
  for (const Query& q : queries) {
    for (auto& hit : retrieve(q, context_lines, cfg, provider)) {
      auto it = best.find(hit.line_index);
      if (it == best.end() || hit.score > it->second.score) {
        best[hit.line_index] = std::move(hit);
      }
    }
  }
  std::vector<RetrievedSnippet> merged;
  for (auto& [_, hit] : best) merged.push_back(std::move(hit));
  rank(merged, cfg.max_snippets);
  return merged;
}

}  // namespace solrepair::retrieval
