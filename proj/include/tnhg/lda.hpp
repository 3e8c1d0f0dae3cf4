#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "tnhg/corpus.hpp"

namespace tnhg {

struct LdaFitOptions {
  int topics = 5;
  /// Non-positive means 50 / topics.
  double alpha = 0.0;
  double beta = 0.01;
  int iterations = 200;
  std::uint64_t seed = 0;
  /// Word types appearing in more than this fraction of documents are not
  /// counted (stopword proxy). 1.0 disables the filter.
  double max_doc_fraction = 0.4;
};

/// Collapsed-Gibbs LDA statistics over a fixed vocabulary. Immutable after
/// fitting; safe to share across threads for inference.
class LdaModel {
 public:
  LdaModel(int topics, double alpha, double beta, int vocab_size, std::vector<bool> counted,
           std::string vocab_hash);

  int topics() const { return topics_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  int vocab_size() const { return vocab_size_; }
  const std::string& vocab_hash() const { return vocab_hash_; }

  /// Whether word id `w` participates in topic statistics.
  bool counted(int w) const { return w >= 0 && w < vocab_size_ && counted_[static_cast<std::size_t>(w)]; }
  /// Number of counted word types; the |V| of the smoothing denominators.
  int counted_vocab_size() const { return counted_size_; }

  std::int64_t topic_word_count(int k, int w) const { return counts_[index(k, w)]; }
  std::int64_t topic_total(int k) const { return totals_[static_cast<std::size_t>(k)]; }

  /// (n_kw + beta) / (n_k + |V| beta)
  double word_probability(int k, int w) const;

  /// Re-derives every topic total from the count matrix and compares.
  bool totals_consistent() const;

  nlohmann::json to_json() const;
  static LdaModel from_json(const nlohmann::json& j);
  /// `extra` is merged into the top-level object (e.g. a config hash).
  void save(const std::string& path, const nlohmann::json& extra = nlohmann::json::object()) const;
  /// Throws if `expected_vocab_hash` is nonempty and differs from the stored one.
  static LdaModel load(const std::string& path, const std::string& expected_vocab_hash = "");

 private:
  friend class LdaTrainer;
  std::size_t index(int k, int w) const {
    return static_cast<std::size_t>(k) * static_cast<std::size_t>(vocab_size_) + static_cast<std::size_t>(w);
  }

  int topics_;
  double alpha_;
  double beta_;
  int vocab_size_;
  std::vector<bool> counted_;
  int counted_size_ = 0;
  std::string vocab_hash_;
  std::vector<std::int64_t> counts_;  // topics x vocab_size, row-major
  std::vector<std::int64_t> totals_;
};

struct TopicAssignment {
  std::size_t doc_index = 0;
  int label = 0;
  std::vector<double> distribution;
};

/// Fits LDA by collapsed Gibbs sampling over encoded documents.
LdaModel fit_gibbs(const std::vector<Ids>& docs, int vocab_size, const LdaFitOptions& options,
                   const std::string& vocab_hash = "");

/// Convenience overload: encodes each document's text with `vocab`.
LdaModel fit_gibbs(const std::vector<Document>& docs, const Vocabulary& vocab, const LdaFitOptions& options);

/// Fold-in Gibbs against frozen topic-word counts. Returns the per-document
/// topic proportions averaged over the last quarter of sweeps. Documents with
/// no counted tokens get the uniform distribution.
std::vector<double> infer_topic_dist(const LdaModel& model, std::span<const int> doc, int iterations,
                                     std::uint64_t seed);

struct AssignOptions {
  int iterations = 50;
  std::uint64_t seed = 0;
};

/// Hard label: argmax of infer_topic_dist, lowest index on ties.
TopicAssignment assign_topic(const LdaModel& model, std::span<const int> doc,
                             const AssignOptions& options = {}, std::size_t doc_index = 0);

/// Index of the largest entry; lowest index wins ties.
int argmax_lowest(std::span<const double> values);

/// The n counted word ids of topic k with highest word_probability, descending;
/// ties broken by id.
std::vector<int> top_words(const LdaModel& model, int k, int n);

/// Same, rendered as tokens, ties broken by token byte order.
Tokens top_words(const LdaModel& model, const Vocabulary& vocab, int k, int n);

}  // namespace tnhg
