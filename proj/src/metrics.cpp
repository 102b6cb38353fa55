#include "solrepair/metrics.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <cstdio>
#include <map>

#include "solrepair/error.hpp"
#include "solrepair/terms.hpp"

namespace solrepair::metrics {

namespace mp = boost::multiprecision;

namespace {

mp::cpp_int binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  mp::cpp_int r = 1;
  for (int i = 1; i <= k; ++i) {
    r *= n - k + i;
    r /= i;
  }
  return r;
}

std::map<Ngram, std::int64_t> ngram_counts(const std::vector<std::string>& tokens, int order) {
  std::map<Ngram, std::int64_t> counts;
  if (tokens.size() < static_cast<std::size_t>(order)) return counts;
  for (std::size_t i = 0; i + static_cast<std::size_t>(order) <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + static_cast<long>(i),
                   tokens.begin() + static_cast<long>(i) + order)];
  }
  return counts;
}

}  // namespace

void TaskOutcome::validate() const {
  if (n < 0 || c < 0 || c_compile < 0 || c > n || c_compile > n || c > c_compile) {
    throw InvalidArgument("inconsistent outcome for task " + task_id + ": n=" + std::to_string(n) +
                          " c=" + std::to_string(c) + " c_compile=" + std::to_string(c_compile));
  }
}

double pass_at_k_estimate(int n, int c, int k) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (k > n) throw InvalidArgument("k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  if (c < 0 || c > n) throw InvalidArgument("c out of range");
  if (n - c < k) return 1.0;
  mp::cpp_rational miss(binomial(n - c, k), binomial(n, k));
  return static_cast<double>(mp::cpp_rational(1) - miss);
}

double pass_at_k(const std::vector<TaskOutcome>& outcomes, int k) {
  double sum = 0.0;
  std::size_t tasks = 0;
  for (const auto& o : outcomes) {
    o.validate();
    if (o.n == 0) continue;
    if (k > o.n) {
      throw InvalidArgument("pass@" + std::to_string(k) + " undefined for task " + o.task_id +
                            " with n=" + std::to_string(o.n));
    }
    sum += pass_at_k_estimate(o.n, o.c, k);
    ++tasks;
  }
  return tasks == 0 ? 0.0 : 100.0 * sum / static_cast<double>(tasks);
}

double compilation_at_1(const std::vector<TaskOutcome>& outcomes) {
  std::vector<TaskOutcome> compiled = outcomes;
  for (auto& o : compiled) {
    o.validate();
    o.c = o.c_compile;
  }
  return pass_at_k(compiled, 1);
}

double round_half_even(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  double scaled = std::round(value * scale * 1e6) / 1e6;
  return std::nearbyint(scaled) / scale;
}

std::string format_percent(double percent) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", round_half_even(percent, 2));
  return buf;
}

void BleuStats::add(std::string_view candidate, std::string_view reference,
                    const NgramSet* trivially_shared) {
  auto cand = tokenize_terms(candidate);
  auto ref = tokenize_terms(reference);
  candidate_length += static_cast<std::int64_t>(cand.size());
  reference_length += static_cast<std::int64_t>(ref.size());
  for (int order = 1; order <= kBleuOrder; ++order) {
    auto cc = ngram_counts(cand, order);
    auto rc = ngram_counts(ref, order);
    for (const auto& [gram, count] : cc) {
      totals[order - 1] += count;
      if (trivially_shared != nullptr && trivially_shared->count(gram) > 0) continue;
      auto it = rc.find(gram);
      if (it != rc.end()) matches[order - 1] += std::min(count, it->second);
    }
  }
}

double BleuStats::score() const {
  if (candidate_length == 0) return 0.0;
  double log_sum = 0.0;
  int orders = 0;
  for (int i = 0; i < kBleuOrder; ++i) {
    if (totals[i] == 0) continue;
    double m = matches[i] > 0 ? static_cast<double>(matches[i]) : kBleuEpsilon;
    log_sum += std::log(m / static_cast<double>(totals[i]));
    ++orders;
  }
  if (orders == 0) return 0.0;
  double bp = 1.0;
  if (candidate_length < reference_length) {
    bp = std::exp(1.0 - static_cast<double>(reference_length) / static_cast<double>(candidate_length));
  }
  return 100.0 * bp * std::exp(log_sum / orders);
}

double bleu(std::string_view candidate, std::string_view reference) {
  BleuStats s;
  s.add(candidate, reference);
  return s.score();
}

NgramSet trivially_shared_ngrams(const std::vector<std::string>& corpus, std::size_t k) {
  std::map<Ngram, std::int64_t> counts;
  for (const auto& text : corpus) {
    auto tokens = tokenize_terms(text);
    for (int order = 1; order <= kBleuOrder; ++order) {
      for (auto& [gram, c] : ngram_counts(tokens, order)) counts[gram] += c;
    }
  }
  std::vector<std::pair<Ngram, std::int64_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  NgramSet out;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.insert(ranked[i].first);
  return out;
}

double crystal_bleu(std::string_view candidate, std::string_view reference,
                    const NgramSet& trivially_shared) {
  BleuStats s;
  s.add(candidate, reference, &trivially_shared);
  return s.score();
}

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("pearson: series lengths differ");
  if (xs.size() < 2) throw InvalidArgument("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

void CostModel::validate() const {
  if (price_per_1m_prompt < 0 || price_per_1m_completion < 0) {
    throw InvalidArgument("token prices must be non-negative");
  }
}

CostLedger& CostLedger::operator+=(const CostLedger& o) {
  total += o.total;
  for (const auto& [stage, v] : o.by_stage) by_stage[stage] += v;
  tokens += o.tokens;
  return *this;
}

double cost(const Usage& usage, const CostModel& model) {
  return static_cast<double>(usage.prompt_tokens) * model.price_per_1m_prompt / 1e6 +
         static_cast<double>(usage.completion_tokens) * model.price_per_1m_completion / 1e6;
}

CostLedger cost_of(const StageUsage& usage, const CostModel& model) {
  model.validate();
  CostLedger ledger;
  for (const auto& [stage, u] : usage) {
    double c = cost(u, model);
    ledger.by_stage[stage] += c;
    ledger.total += c;
    ledger.tokens += u;
  }
  return ledger;
}

}  // namespace solrepair::metrics
