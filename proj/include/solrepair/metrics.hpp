#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace solrepair::metrics {

/// Sampling tallies for one task. Samples lost to infrastructure failures
/// are not counted in n.
struct TaskOutcome {
  std::string task_id;
  int n = 0;
  int c = 0;
  int c_compile = 0;

  /// Throws InvalidArgument unless 0 <= c <= c_compile <= n.
  void validate() const;
};

/// Unbiased pass@k estimate for one task, 1 - C(n-c, k) / C(n, k), from
/// exact integer binomials. Returns a fraction in [0, 1].
double pass_at_k_estimate(int n, int c, int k);

/// Mean estimate over tasks with n > 0, as a percentage. Throws
/// InvalidArgument naming the first task with k > n.
double pass_at_k(const std::vector<TaskOutcome>& outcomes, int k);

/// pass@1 with c_compile in place of c, as a percentage.
double compilation_at_1(const std::vector<TaskOutcome>& outcomes);

/// Round half to even at `decimals` places.
double round_half_even(double value, int decimals = 2);

/// "12.34"
std::string format_percent(double percent);

using Ngram = std::vector<std::string>;
using NgramSet = std::set<Ngram>;

inline constexpr int kBleuOrder = 4;
inline constexpr double kBleuEpsilon = 1e-9;

/// Clipped n-gram match statistics accumulated over candidate/reference
/// pairs.
struct BleuStats {
  std::int64_t matches[kBleuOrder] = {0, 0, 0, 0};
  std::int64_t totals[kBleuOrder] = {0, 0, 0, 0};
  std::int64_t candidate_length = 0;
  std::int64_t reference_length = 0;

  void add(std::string_view candidate, std::string_view reference,
           const NgramSet* trivially_shared = nullptr);
  /// BLEU-4 on [0, 100]. Orders with no candidate n-grams are dropped from
  /// the geometric mean; a zero match count contributes epsilon.
  double score() const;
};

double bleu(std::string_view candidate, std::string_view reference);

/// The `k` most frequent 1..4-grams across `corpus` (ties broken
/// lexicographically).
NgramSet trivially_shared_ngrams(const std::vector<std::string>& corpus, std::size_t k = 500);

/// BLEU with trivially shared n-grams removed from the match counts.
double crystal_bleu(std::string_view candidate, std::string_view reference,
                    const NgramSet& trivially_shared);

/// Sample Pearson correlation. Throws InvalidArgument for mismatched or
/// short inputs and UndefinedCorrelation for zero variance.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

struct CostModel {
  double price_per_1m_prompt = 0.0;
  double price_per_1m_completion = 0.0;

  /// $0.15 / $0.60 per million prompt / completion tokens.
  static CostModel gpt_4o_mini() { return {0.15, 0.6}; }
  void validate() const;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;

  Usage& operator+=(const Usage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    return *this;
  }
  friend Usage operator+(Usage a, const Usage& b) { return a += b; }
  friend bool operator==(const Usage&, const Usage&) = default;
};

/// Stages that consume model tokens.
inline constexpr std::string_view kStageCompletion = "completion";
inline constexpr std::string_view kStageRepair = "repair";
inline constexpr std::string_view kStageDebugExplanation = "debug_explanation";

using StageUsage = std::map<std::string, Usage, std::less<>>;

struct CostLedger {
  double total = 0.0;
  std::map<std::string, double, std::less<>> by_stage;
  Usage tokens;

  CostLedger& operator+=(const CostLedger& o);
};

double cost(const Usage& usage, const CostModel& model);
CostLedger cost_of(const StageUsage& usage, const CostModel& model);

}  // namespace solrepair::metrics
