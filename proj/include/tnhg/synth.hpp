#pragma once

#include <cstdint>
#include <vector>

#include "tnhg/corpus.hpp"

namespace tnhg {

struct SynthOptions {
  int topics = 3;
  int train = 3000;
  /// Number of test pairs with score >= 3; another test/4 low-scored pairs
  /// are mixed in for the score filter to remove.
  int test = 300;
  int words_per_topic = 64;
  int shared_words = 4;
  double shared_rate = 0.15;
  int min_len = 10;
  int max_len = 16;
  std::uint64_t seed = 7;
};

/// Topic-pattern corpus: every topic draws its source text from its own
/// alphabet of CJK characters (plus shared punctuation fillers), and has its
/// own headline rule, cycling through
///   0: the first four source characters
///   1: the last four source characters
///   2: the characters at even (0-based) positions
struct SynthCorpus {
  std::vector<Document> train;
  std::vector<Document> test;
  std::vector<int> train_topics;  // planted topic per document
  std::vector<int> test_topics;
};

SynthCorpus make_topic_pattern_corpus(const SynthOptions& options);

/// Headline rule `pattern` (taken mod 3) applied to `source`.
Tokens apply_headline_pattern(int pattern, const Tokens& source);

}  // namespace tnhg
