#include <doctest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "tnhg/hash.hpp"
#include "tnhg/topic_nhg.hpp"

using namespace tnhg;
using nn::Index;

namespace {

constexpr int kWordsPerTopic = 6;

// Topic k owns ids 4 + 6k .. 4 + 6k + 5.
std::vector<Ids> planted_docs(int topics, int per_topic, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Ids> docs;
  for (int d = 0; d < topics * per_topic; ++d) {
    const int k = d % topics;
    Ids doc;
    for (int i = 0; i < 12; ++i) doc.push_back(kReservedCount + kWordsPerTopic * k + static_cast<int>(uniform_index(rng, kWordsPerTopic)));
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::shared_ptr<const LdaModel> fit_planted(int topics, int vocab_size) {
  LdaFitOptions opts;
  opts.topics = topics;
  opts.alpha = 0.5;
  opts.iterations = 100;
  opts.seed = 1;
  opts.max_doc_fraction = 1.0;
  return std::make_shared<const LdaModel>(fit_gibbs(planted_docs(topics, 40, 3), vocab_size, opts));
}

NhgConfig small_config(int vocab) {
  NhgConfig c;
  c.vocab_size = vocab;
  c.embed_size = 4;
  c.hidden_size = 3;
  c.decoder_size = 5;
  return c;
}

Ids random_ids(Rng& rng, int vocab, std::size_t max_len) {
  Ids ids;
  const auto len = 1 + uniform_index(rng, max_len);
  for (std::size_t i = 0; i < len; ++i) ids.push_back(kReservedCount + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(vocab - kReservedCount))));
  return ids;
}

// LDA labels are a permutation of the planted groups, so sources are drawn
// from random groups until they route to `topic`.
std::vector<Example> examples_for_topic(const TopicNhgModel& m, int topic, int count, std::uint64_t seed) {
  std::vector<Example> out;
  Rng rng(seed);
  std::size_t id = 0;
  for (int attempt = 0; static_cast<int>(out.size()) < count; ++attempt) {
    REQUIRE(attempt < 10000);
    const int group = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(m.topics())));
    Ids src;
    for (int i = 0; i < 8; ++i) src.push_back(kReservedCount + kWordsPerTopic * group + static_cast<int>(uniform_index(rng, kWordsPerTopic)));
    if (m.route(src).label != topic) continue;
    Ids tgt(src.begin(), src.begin() + 3);
    tgt.push_back(kEos);
    out.push_back({src, tgt, id++});
  }
  return out;
}

void perturb(NhgModel& m, std::uint64_t seed, bool embedding) {
  Rng rng(seed);
  for (auto* p : m.parameters(embedding)) {
    for (Index i = 0; i < p->size(); ++i) p->value(i) += uniform(rng, -0.5, 0.5);
  }
  if (embedding) m.embedding().value.row(kPad).setZero();
}

}  // namespace

TEST_CASE("fork produces baseline-identical replicas") {
  const int V = kReservedCount + 3 * kWordsPerTopic;
  const auto lda = fit_planted(3, V);
  const NhgModel baseline(small_config(V), 5, 0.5);
  for (bool fork_embeddings : {false, true}) {
    const auto model = TopicNhgModel::fork(baseline, 3, lda, fork_embeddings);
    CHECK(model.topics() == 3);
    CHECK(model.shared_embedding() == !fork_embeddings);
    CHECK(model.baseline_hash() == sha256_hex(baseline.checkpoint_bytes()));
    Rng rng(7);
    DecodeConfig cfg;
    cfg.max_len = 6;
    for (int trial = 0; trial < 100; ++trial) {
      const Ids src = random_ids(rng, V, 8);
      const auto eb = baseline.encode(src);
      const auto base = baseline.decode_step(baseline.initial_state(eb), kBos, eb);
      for (int k = 0; k < 3; ++k) {
        const auto& r = model.replica(k);
        const auto er = r.encode(src);
        CHECK(r.decode_step(r.initial_state(er), kBos, er).logits == base.logits);
      }
      const auto gen = model.generate(src, cfg);
      CHECK(gen.ids == baseline.generate(src, cfg));
      CHECK(gen.topic == assign_topic(*lda, src).label);
    }
  }
}

TEST_CASE("fork validates its arguments") {
  const int V = kReservedCount + 2 * kWordsPerTopic;
  const auto lda = fit_planted(2, V);
  const NhgModel baseline(small_config(V), 1);
  CHECK_THROWS(TopicNhgModel::fork(baseline, 3, lda));
  CHECK_THROWS(TopicNhgModel::fork(baseline, 0, lda));
  CHECK_THROWS(TopicNhgModel::fork(NhgModel(small_config(V + 1), 1), 2, lda));
  const auto model = TopicNhgModel::fork(baseline, 2, lda);
  CHECK_THROWS(model.replica(2));
  CHECK_THROWS(model.replica(-1));
  CHECK_THROWS(model.joint_logprob(Ids{4}, Ids{kEos}, 2));
}

TEST_CASE("fine-tuning one replica leaves the others untouched") {
  const int V = kReservedCount + 3 * kWordsPerTopic;
  const auto lda = fit_planted(3, V);
  const NhgModel baseline(small_config(V), 2, 0.3);
  for (bool fork_embeddings : {false, true}) {
    auto model = TopicNhgModel::fork(baseline, 3, lda, fork_embeddings);
    std::vector<std::string> before;
    for (int k = 0; k < 3; ++k) before.push_back(sha256_hex(model.replica(k).checkpoint_bytes()));
    const std::vector<std::vector<Example>> batches = {examples_for_topic(model, 0, 4, 1),
                                                       examples_for_topic(model, 0, 4, 2)};
    const auto losses = model.train_topic(0, batches, nn::Sgd(0.5, 5.0), 10);
    CHECK(losses.size() == 10);
    CHECK(sha256_hex(model.replica(0).checkpoint_bytes()) != before[0]);
    CHECK(sha256_hex(model.replica(1).checkpoint_bytes()) == before[1]);
    CHECK(sha256_hex(model.replica(2).checkpoint_bytes()) == before[2]);
    CHECK(model.replica(1).checkpoint_bytes() == baseline.checkpoint_bytes());
    if (!fork_embeddings) CHECK(model.replica(0).embedding().value == baseline.embedding().value);
  }
}

TEST_CASE("train_topic edge cases") {
  const int V = kReservedCount + 2 * kWordsPerTopic;
  const auto lda = fit_planted(2, V);
  const NhgModel baseline(small_config(V), 3, 0.3);
  auto model = TopicNhgModel::fork(baseline, 2, lda);
  const std::vector<std::vector<Example>> batches = {examples_for_topic(model, 1, 3, 5)};
  const std::string before = model.replica(1).checkpoint_bytes();

  CHECK(model.train_topic(1, batches, nn::Sgd(0.5, 5.0), 0).empty());
  CHECK(model.replica(1).checkpoint_bytes() == before);

  const auto losses = model.train_topic(1, batches, nn::Sgd(0.0, 5.0), 3);
  CHECK(losses.size() == 3);
  CHECK(losses[0] == losses[2]);
  CHECK(losses[0] > 0.0);
  CHECK(model.replica(1).checkpoint_bytes() == before);

  auto wrong = examples_for_topic(model, 0, 2, 6);
  wrong[1].id = 4242;
  const std::vector<std::vector<Example>> mixed = {{batches[0][0], wrong[1]}};
  try {
    model.train_topic(1, mixed, nn::Sgd(0.5, 5.0), 1);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("4242") != std::string::npos);
  }
  CHECK(model.replica(1).checkpoint_bytes() == before);
  CHECK_THROWS(model.train_topic(1, std::span<const std::vector<Example>>{}, nn::Sgd(0.5, 5.0), 1));
}

TEST_CASE("a single-topic fork continues baseline training exactly") {
  const int V = kReservedCount + kWordsPerTopic;
  LdaFitOptions opts;
  opts.topics = 1;
  opts.iterations = 5;
  const auto lda = std::make_shared<const LdaModel>(fit_gibbs(planted_docs(1, 10, 1), V, opts));
  NhgModel baseline(small_config(V), 4, 0.3);
  auto model = TopicNhgModel::fork(baseline, 1, lda, true);
  const std::vector<std::vector<Example>> batches = {examples_for_topic(model, 0, 4, 1),
                                                     examples_for_topic(model, 0, 3, 2)};
  const nn::Sgd opt(0.3, 5.0);
  const auto topic_losses = model.train_topic(0, batches, opt, 12);
  std::vector<double> base_losses;
  for (int s = 0; s < 12; ++s) base_losses.push_back(train_step(baseline, batches[static_cast<std::size_t>(s) % 2], opt));
  REQUIRE(topic_losses.size() == base_losses.size());
  for (std::size_t i = 0; i < base_losses.size(); ++i) CHECK(std::abs(topic_losses[i] - base_losses[i]) <= 1e-12);
  CHECK(model.replica(0).checkpoint_bytes() == baseline.checkpoint_bytes());

  const Ids src{4, 5, 6}, tgt{4, kEos};
  CHECK(model.log_prior(src, 0) == 0.0);
  CHECK(model.joint_logprob(src, tgt, 0) == -baseline.sequence_nll(src, tgt));
  CHECK(model.generate(src, DecodeConfig{}).topic == 0);
  CHECK(model.generate(src, DecodeConfig{}).ids == baseline.generate(src, DecodeConfig{}));
}

TEST_CASE("joint log-probability decomposes and normalizes") {
  for (int V : {4, 6}) {
    std::shared_ptr<const LdaModel> lda;
    LdaFitOptions opts;
    opts.topics = 2;
    opts.alpha = 0.5;
    opts.iterations = 50;
    opts.max_doc_fraction = 1.0;
    if (V == 4) {
      lda = std::make_shared<const LdaModel>(fit_gibbs(std::vector<Ids>{{kUnk}}, V, opts));
    } else {
      lda = std::make_shared<const LdaModel>(fit_gibbs(std::vector<Ids>{{4, 4, 4, 4}, {5, 5, 5, 5}, {4, 4, 4}}, V, opts));
    }
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      NhgModel baseline(small_config(V), seed, 1.0);
      auto model = TopicNhgModel::fork(baseline, 2, lda, true);
      perturb(model.replica(1), seed + 100, true);
      const Ids src = V == 4 ? Ids{3, 3} : Ids{4, 5, 4};
      const auto dist = infer_topic_dist(*lda, src, model.assign_options().iterations, model.assign_options().seed);
      if (V == 6) CHECK(dist[0] != dist[1]);
      double total = 0.0;
      for (int a = 0; a < V; ++a) {
        for (int b = 0; b < V; ++b) {
          const Ids y{a, b};
          for (int l = 0; l < 2; ++l) {
            const double joint = model.joint_logprob(src, y, l);
            CHECK(std::abs(joint - (std::log(dist[static_cast<std::size_t>(l)]) -
                                    model.replica(l).sequence_nll(src, y))) <= 1e-12);
            CHECK(model.log_prior(src, l) == std::log(dist[static_cast<std::size_t>(l)]));
            total += std::exp(joint);
          }
        }
      }
      CHECK(std::abs(total - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("routing follows the planted topics") {
  const int V = kReservedCount + 3 * kWordsPerTopic;
  const auto lda = fit_planted(3, V);
  const NhgModel baseline(small_config(V), 6, 0.5);
  auto model = TopicNhgModel::fork(baseline, 3, lda);
  for (int k = 0; k < 3; ++k) perturb(model.replica(k), static_cast<std::uint64_t>(k), false);
  std::set<int> labels;
  for (int k = 0; k < 3; ++k) {
    Ids src;
    for (int i = 0; i < 10; ++i) src.push_back(kReservedCount + kWordsPerTopic * k + i % kWordsPerTopic);
    const auto gen = model.generate(src, DecodeConfig{});
    CHECK(gen.topic == assign_topic(*lda, src).label);
    CHECK(gen.ids == model.replica(gen.topic).generate(src, DecodeConfig{}));
    labels.insert(gen.topic);
  }
  CHECK(labels.size() == 3);
}

TEST_CASE("save and load") {
  testing::TempDir dir("topic");
  const int V = kReservedCount + 2 * kWordsPerTopic;
  const auto lda = fit_planted(2, V);
  const NhgModel baseline(small_config(V), 7, 0.5);
  for (bool fork_embeddings : {false, true}) {
    auto model = TopicNhgModel::fork(baseline, 2, lda, fork_embeddings);
    perturb(model.replica(1), 9, fork_embeddings);
    const auto sub = dir.file(fork_embeddings ? "forked" : "shared");
    model.save(sub, {{"config_hash", "abc"}});
    CHECK(std::filesystem::exists(std::filesystem::path(sub) / "manifest.json"));
    CHECK(std::filesystem::exists(std::filesystem::path(sub) / "embedding.ckpt") == !fork_embeddings);
    const auto loaded = TopicNhgModel::load(sub, lda);
    CHECK(loaded.topics() == 2);
    CHECK(loaded.shared_embedding() == model.shared_embedding());
    CHECK(loaded.baseline_hash() == model.baseline_hash());
    for (int k = 0; k < 2; ++k) CHECK(loaded.replica_checkpoint_bytes(k) == model.replica_checkpoint_bytes(k));
    const Ids src{4, 5, 10}, tgt{11, kEos};
    CHECK(loaded.joint_logprob(src, tgt, 1) == model.joint_logprob(src, tgt, 1));

    LdaFitOptions opts;
    opts.topics = 2;
    opts.iterations = 3;
    const auto other = std::make_shared<const LdaModel>(fit_gibbs(planted_docs(2, 5, 9), V, opts));
    CHECK_THROWS(TopicNhgModel::load(sub, other));
  }
}
