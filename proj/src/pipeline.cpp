#include "tnhg/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <numeric>
#include <thread>

#include "tnhg/random.hpp"

namespace tnhg {

std::vector<Example> make_examples(const Vocabulary& vocab, const std::vector<Document>& docs) {
  std::vector<Example> out;
  out.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) out.push_back(make_example(vocab, docs[i], i));
  return out;
}

std::vector<std::vector<Example>> make_batches(const std::vector<Example>& examples, int batch, int steps,
                                               std::uint64_t seed) {
  if (examples.empty() || steps <= 0) return {};
  if (batch < 1) throw std::invalid_argument("batch size must be >= 1");
  Rng rng(seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  const auto size = std::min(static_cast<std::size_t>(batch), examples.size());
  std::vector<std::vector<Example>> batches(static_cast<std::size_t>(steps));
  for (auto& b : batches) {
    b.reserve(size);
    while (b.size() < size) {
      if (cursor == order.size()) {
        shuffle(std::span<std::size_t>(order), rng);
        cursor = 0;
      }
      b.push_back(examples[order[cursor++]]);
    }
  }
  return batches;
}

std::vector<double> train_baseline(NhgModel& model, const std::vector<Example>& examples, const RunConfig& cfg,
                                   int steps, const LossLogger& log) {
  const nn::Sgd opt(cfg.learning_rate, cfg.clip);
  const auto batches = make_batches(examples, cfg.batch, steps, cfg.train_seed);
  std::vector<double> losses;
  losses.reserve(batches.size());
  for (std::size_t s = 0; s < batches.size(); ++s) {
    losses.push_back(train_step(model, batches[s], opt));
    if (log) log(static_cast<int>(s) + 1, losses.back());
  }
  return losses;
}

SynthOptions synth_options(const RunConfig& cfg) {
  SynthOptions o;
  o.topics = cfg.synth_topics;
  o.train = cfg.synth_train;
  o.test = cfg.synth_test;
  o.words_per_topic = cfg.synth_words_per_topic;
  o.shared_words = cfg.synth_shared_words;
  o.shared_rate = cfg.synth_shared_rate;
  o.min_len = cfg.synth_min_len;
  o.max_len = cfg.synth_max_len;
  o.seed = cfg.synth_seed;
  return o;
}

std::vector<int> assign_labels(const LdaModel& lda, const Vocabulary& vocab, const std::vector<Document>& docs,
                               const AssignOptions& options) {
  std::vector<int> labels;
  labels.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    labels.push_back(assign_topic(lda, encode(vocab, docs[i].text), options, i).label);
  }
  return labels;
}

void train_all_topics(TopicNhgModel& model, const std::vector<Example>& examples, const std::vector<int>& labels,
                      const RunConfig& cfg) {
  const nn::Sgd opt(cfg.learning_rate, cfg.clip);
  auto job = [&](int topic) {
    std::vector<Example> subset;
    for (std::size_t i = 0; i < examples.size(); ++i) {
      if (labels[i] == topic) subset.push_back(examples[i]);
    }
    if (subset.empty()) {
      spdlog::warn("topic {} has no training examples; replica left as forked", topic);
      return;
    }
    const auto batches = make_batches(subset, cfg.batch, cfg.topic_steps, cfg.train_seed + 1 + static_cast<std::uint64_t>(topic));
    const auto losses = model.train_topic(topic, batches, opt, cfg.topic_steps);
    if (!losses.empty()) spdlog::info("topic {}: {} examples, final loss {:.4f}", topic, subset.size(), losses.back());
  };
  const int K = model.topics();
  if (cfg.threads <= 1) {
    for (int k = 0; k < K; ++k) job(k);
    return;
  }
  // replica parameter sets are disjoint and a shared embedding is never
  // written during topic training, so jobs need no locking
  std::vector<std::thread> pool;
  for (int start = 0; start < K; start += cfg.threads) {
    pool.clear();
    for (int k = start; k < std::min(K, start + cfg.threads); ++k) pool.emplace_back(job, k);
    for (auto& t : pool) t.join();
  }
}

ExperimentResult run_experiment(const RunConfig& cfg, const std::vector<Document>& train_docs,
                                const std::vector<Document>& test_docs) {
  const auto test = filter_by_score(test_docs, cfg.min_score);
  if (test.empty()) throw std::invalid_argument("no test documents left after score filtering");
  const Vocabulary vocab = build_vocab(train_docs, cfg.min_count);
  spdlog::info("vocabulary: {} entries ({} train / {} test pairs)", vocab.size(), train_docs.size(), test.size());

  auto lda = std::make_shared<const LdaModel>(fit_gibbs(train_docs, vocab, cfg.lda_options()));
  const auto train_labels = assign_labels(*lda, vocab, train_docs, cfg.assign_options());

  const auto examples = make_examples(vocab, train_docs);
  NhgModel baseline(cfg.model_config(vocab), cfg.model_seed, cfg.init_scale);
  const int every = cfg.log_every;
  train_baseline(baseline, examples, cfg, cfg.baseline_steps, [every](int step, double loss) {
    if (every > 0 && step % every == 0) spdlog::info("baseline step {}: loss {:.4f}", step, loss);
  });

  auto topic_model = TopicNhgModel::fork(baseline, cfg.topics, lda, cfg.fork_embeddings, cfg.assign_options());
  train_all_topics(topic_model, examples, train_labels, cfg);

  const DecodeConfig dcfg = cfg.decode_config();
  std::vector<ScoredPair> base_pairs, topic_pairs;
  ExperimentResult result;
  result.train_topic_counts.assign(static_cast<std::size_t>(cfg.topics), 0);
  result.test_topic_counts.assign(static_cast<std::size_t>(cfg.topics), 0);
  for (int l : train_labels) ++result.train_topic_counts[static_cast<std::size_t>(l)];
  for (const auto& d : test) {
    const Ids src = encode(vocab, d.text);
    const auto routed = topic_model.generate(src, dcfg);
    ++result.test_topic_counts[static_cast<std::size_t>(routed.topic)];
    base_pairs.push_back({decode(vocab, baseline.generate(src, dcfg)), d.headline, routed.topic});
    topic_pairs.push_back({decode(vocab, routed.ids), d.headline, routed.topic});
  }
  result.baseline = evaluate(base_pairs);
  result.topic_model = evaluate(topic_pairs);

  result.json = {{"config_hash", cfg.hash()},
                 {"vocab_hash", vocab.hash()},
                 {"lda_hash", lda_hash(*lda)},
                 {"baseline", report_to_json(result.baseline)},
                 {"topic_model", report_to_json(result.topic_model)},
                 {"train_topic_counts", result.train_topic_counts},
                 {"test_topic_counts", result.test_topic_counts}};
  result.report = "config " + cfg.hash() + "\n" + format_comparison(result.baseline, result.topic_model) + "\n" +
                  result.json.dump(2) + "\n";
  return result;
}

}  // namespace tnhg
