#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tnhg/lda.hpp"
#include "tnhg/nhg.hpp"

namespace tnhg {

/// Bad key, bad value, or out-of-range setting. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of the pipeline. Defaults are the desk-scale settings; the
/// topic count and the 10:1 baseline/topic step ratio follow the original
/// experimental setup.
struct RunConfig {
  // paths
  std::string corpus, test, out_dir = ".", train, vocab, lda_model, baseline, topic_model, input, output,
      predictions, report, dump_attention;

  // data
  int min_count = 1;
  int min_score = 3;
  double train_fraction = 0.9;
  double dev_fraction = 0.05;
  std::uint64_t split_seed = 3;

  // lda
  int topics = 5;
  double lda_alpha = 0.0;  // 0 -> 50 / topics
  double lda_beta = 0.01;
  int lda_iterations = 200;
  double lda_max_doc_fraction = 0.4;
  std::uint64_t lda_seed = 0;
  int assign_iterations = 50;
  std::uint64_t assign_seed = 0;

  // model
  int embed = 32;
  int hidden = 64;
  int decoder = 128;
  int attention_size = 0;
  bool attention = true;
  bool bias = true;
  bool fork_embeddings = false;
  double init_scale = 0.08;
  std::uint64_t model_seed = 1;

  // training
  double learning_rate = 0.1;
  double clip = 5.0;
  int batch = 16;
  int baseline_steps = 20000;
  int topic_steps = 2000;
  int topic = -1;
  std::uint64_t train_seed = 2;
  int log_every = 1000;
  int threads = 1;

  // decoding
  int max_len = 32;
  int beam = 1;
  bool length_norm = false;

  // synthetic corpus
  int synth_topics = 3;
  int synth_train = 3000;
  int synth_test = 300;
  int synth_words_per_topic = 64;
  int synth_shared_words = 4;
  double synth_shared_rate = 0.15;
  int synth_min_len = 10;
  int synth_max_len = 16;
  std::uint64_t synth_seed = 7;

  /// Sets one key from its text form. Throws ConfigError for unknown keys,
  /// unparsable values, or values outside the documented range.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Parses `key = value` lines; '#' starts a comment.
  void merge_text(std::string_view text);
  void merge_file(const std::string& path);

  /// Sorted `key = value` lines of every setting.
  std::string canonical() const;
  /// SHA-256 of canonical(), first 16 hex digits.
  std::string hash() const;

  static const std::vector<std::string>& keys();
  static std::string help(std::string_view key);

  LdaFitOptions lda_options() const;
  AssignOptions assign_options() const;
  NhgConfig model_config(const Vocabulary& vocab) const;
  DecodeConfig decode_config() const;
};

}  // namespace tnhg
