#include "tnhg/rouge.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tnhg {

namespace {

std::map<std::vector<std::string>, long> ngram_counts(const Tokens& toks, std::size_t n) {
  std::map<std::vector<std::string>, long> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++counts[std::vector<std::string>(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
  }
  return counts;
}

double f1(double overlap, double cand_total, double ref_total) {
  if (overlap <= 0.0 || cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
  const double p = overlap / cand_total;
  const double r = overlap / ref_total;
  return 2.0 * p * r / (p + r);
}

std::string topic_label(int k, const std::vector<std::string>& names) {
  if (k >= 0 && static_cast<std::size_t>(k) < names.size()) return names[static_cast<std::size_t>(k)];
  return "topic " + std::to_string(k);
}

// tokens are a few bytes; an inline loop beats a memcmp call in the LCS inner loop
bool same_token(const std::string& x, const std::string& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != y[i]) return false;
  return true;
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace

double rouge_n_f(const Tokens& candidate, const Tokens& reference, int n) {
  if (n < 1) throw std::invalid_argument("rouge_n_f: n must be >= 1");
  if (reference.empty()) throw std::invalid_argument("rouge_n_f: empty reference");
  const auto un = static_cast<std::size_t>(n);
  if (candidate.size() < un || reference.size() < un) return 0.0;
  const auto cand = ngram_counts(candidate, un);
  const auto ref = ngram_counts(reference, un);
  long overlap = 0;
  for (const auto& [g, c] : cand) {
    if (auto it = ref.find(g); it != ref.end()) overlap += std::min(c, it->second);
  }
  return f1(static_cast<double>(overlap), static_cast<double>(candidate.size() - un + 1),
            static_cast<double>(reference.size() - un + 1));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  // one DP row plus the diagonal; short rows live on the stack
  constexpr std::size_t kStackRow = 64;
  std::array<std::size_t, kStackRow + 1> stack_row;
  std::vector<std::size_t> heap_row;
  std::size_t* row = stack_row.data();
  if (b.size() > kStackRow) {
    heap_row.resize(b.size() + 1);
    row = heap_row.data();
  }
  std::fill_n(row, b.size() + 1, std::size_t{0});
  for (const auto& token : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = same_token(token, b[j - 1]) ? diag + 1 : std::max(up, row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

double rouge_l_f(const Tokens& candidate, const Tokens& reference) {
  if (reference.empty()) throw std::invalid_argument("rouge_l_f: empty reference");
  return f1(static_cast<double>(lcs_length(candidate, reference)), static_cast<double>(candidate.size()),
            static_cast<double>(reference.size()));
}

RougeReport evaluate(std::span<const ScoredPair> pairs) {
  if (pairs.empty()) throw std::invalid_argument("evaluate: no pairs");
  // sums run over sorted values so the result does not depend on input order
  struct Sum {
    std::vector<double> r1, r2, rl;
    void add(double a, double b, double c) {
      r1.push_back(a);
      r2.push_back(b);
      rl.push_back(c);
    }
    static double percent_mean(std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return 100.0 * std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    }
    RougeRow row() const { return {percent_mean(r1), percent_mean(r2), percent_mean(rl), r1.size()}; }
  };
  Sum overall;
  std::map<int, Sum> topics;
  for (const auto& p : pairs) {
    const double r1 = rouge_n_f(p.candidate, p.reference, 1);
    const double r2 = rouge_n_f(p.candidate, p.reference, 2);
    const double rl = rouge_l_f(p.candidate, p.reference);
    overall.add(r1, r2, rl);
    if (p.topic) topics[*p.topic].add(r1, r2, rl);
  }
  RougeReport report;
  report.overall = overall.row();
  for (const auto& [k, s] : topics) report.per_topic[k] = s.row();
  return report;
}

nlohmann::json report_to_json(const RougeReport& report) {
  auto row = [](const RougeRow& r) {
    return nlohmann::json{{"rouge1_f", r.rouge1_f}, {"rouge2_f", r.rouge2_f}, {"rougeL_f", r.rougeL_f}, {"n", r.n}};
  };
  nlohmann::json j;
  j["overall"] = row(report.overall);
  j["per_topic"] = nlohmann::json::object();
  for (const auto& [k, r] : report.per_topic) j["per_topic"][std::to_string(k)] = row(r);
  return j;
}

std::string format_report(const RougeReport& report, const std::string& system_name,
                          const std::vector<std::string>& topic_names) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %6s\n", "ROUGE-F(%)", "Rouge-1", "Rouge-2", "Rouge-L", "n");
  out << line;
  auto emit = [&](const std::string& label, const RougeRow& r) {
    std::snprintf(line, sizeof line, "%-16s %8.1f %8.1f %8.1f %6zu\n", label.c_str(), r.rouge1_f, r.rouge2_f,
                  r.rougeL_f, r.n);
    out << line;
  };
  emit(system_name, report.overall);
  for (const auto& [k, r] : report.per_topic) emit("  " + topic_label(k, topic_names), r);
  return out.str();
}

std::string format_comparison(const RougeReport& baseline, const RougeReport& topic_model,
                              const std::vector<std::string>& topic_names) {
  std::ostringstream out;
  char line[200];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %8s\n", "ROUGE-F(%)", "Rouge-1", "Rouge-2", "Rouge-L");
  out << line;
  auto overall = [&](const char* name, const RougeRow& r) {
    std::snprintf(line, sizeof line, "%-16s %8.1f %8.1f %8.1f\n", name, r.rouge1_f, r.rouge2_f, r.rougeL_f);
    out << line;
  };
  overall("Baseline", baseline.overall);
  overall("TopicNHG", topic_model.overall);
  out << "\nPer topic (Baseline/TopicNHG)\n";
  std::snprintf(line, sizeof line, "%-16s %12s %12s %12s\n", "", "Rouge-1", "Rouge-2", "Rouge-L");
  out << line;
  for (const auto& [k, b] : baseline.per_topic) {
    auto it = topic_model.per_topic.find(k);
    if (it == topic_model.per_topic.end()) continue;
    const auto& t = it->second;
    std::snprintf(line, sizeof line, "%-16s %12s %12s %12s\n", topic_label(k, topic_names).c_str(),
                  (fixed1(b.rouge1_f) + "/" + fixed1(t.rouge1_f)).c_str(),
                  (fixed1(b.rouge2_f) + "/" + fixed1(t.rouge2_f)).c_str(),
                  (fixed1(b.rougeL_f) + "/" + fixed1(t.rougeL_f)).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace tnhg
