#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tnhg/corpus.hpp"

namespace tnhg {

/// ROUGE-N F1 in [0, 1]. Zero when either side has no n-grams.
double rouge_n_f(const Tokens& candidate, const Tokens& reference, int n);

/// Length of the longest common subsequence.
std::size_t lcs_length(const Tokens& a, const Tokens& b);

/// LCS-based ROUGE-L F1 (beta = 1) in [0, 1].
double rouge_l_f(const Tokens& candidate, const Tokens& reference);

struct RougeRow {
  double rouge1_f = 0.0;  // percentages
  double rouge2_f = 0.0;
  double rougeL_f = 0.0;
  std::size_t n = 0;
};

struct RougeReport {
  RougeRow overall;
  std::map<int, RougeRow> per_topic;
};

struct ScoredPair {
  Tokens candidate;
  Tokens reference;
  std::optional<int> topic;
};

/// Macro average of per-example F, times 100, overall and per topic.
RougeReport evaluate(std::span<const ScoredPair> pairs);

nlohmann::json report_to_json(const RougeReport& report);

/// Aligned plain-text table: one "overall" row, then one per topic.
/// `topic_names` optionally labels topics (defaults to "topic <k>").
std::string format_report(const RougeReport& report, const std::string& system_name,
                          const std::vector<std::string>& topic_names = {});

/// Side-by-side "baseline/topic" per-topic table plus the two overall rows.
std::string format_comparison(const RougeReport& baseline, const RougeReport& topic_model,
                              const std::vector<std::string>& topic_names = {});

}  // namespace tnhg
