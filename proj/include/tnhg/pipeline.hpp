#pragma once

#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "tnhg/config.hpp"
#include "tnhg/lda.hpp"
#include "tnhg/nhg.hpp"
#include "tnhg/rouge.hpp"
#include "tnhg/synth.hpp"
#include "tnhg/topic_nhg.hpp"

namespace tnhg {

std::vector<Example> make_examples(const Vocabulary& vocab, const std::vector<Document>& docs);

/// Epoch-shuffled minibatches: each epoch visits every example once in a
/// seeded random order. Returns `steps` batches of size min(batch, |examples|).
std::vector<std::vector<Example>> make_batches(const std::vector<Example>& examples, int batch, int steps,
                                               std::uint64_t seed);

using LossLogger = std::function<void(int step, double loss)>;

/// Runs `steps` train_steps over epoch-shuffled batches. Returns the losses.
std::vector<double> train_baseline(NhgModel& model, const std::vector<Example>& examples, const RunConfig& cfg,
                                   int steps, const LossLogger& log = {});

SynthOptions synth_options(const RunConfig& cfg);

/// Hard LDA label for every document's text.
std::vector<int> assign_labels(const LdaModel& lda, const Vocabulary& vocab, const std::vector<Document>& docs,
                               const AssignOptions& options);

/// Fine-tunes every replica on the examples labelled with its topic. Topics
/// with no examples are left as forked. Uses cfg.threads parallel jobs.
void train_all_topics(TopicNhgModel& model, const std::vector<Example>& examples, const std::vector<int>& labels,
                      const RunConfig& cfg);

struct ExperimentResult {
  RougeReport baseline;
  RougeReport topic_model;
  std::vector<int> train_topic_counts;
  std::vector<int> test_topic_counts;
  /// Plain-text comparison table followed by the JSON report; byte-stable for
  /// equal inputs and config.
  std::string report;
  nlohmann::json json;
};

/// Full pipeline on in-memory data: vocabulary, LDA, baseline, fork,
/// per-topic fine-tuning, generation, ROUGE. Test documents are filtered by
/// cfg.min_score first.
ExperimentResult run_experiment(const RunConfig& cfg, const std::vector<Document>& train,
                                const std::vector<Document>& test);

}  // namespace tnhg
