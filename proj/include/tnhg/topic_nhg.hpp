#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tnhg/lda.hpp"
#include "tnhg/nhg.hpp"

namespace tnhg {

struct TopicGeneration {
  Ids ids;
  int topic = 0;
};

/// K copies of a trained baseline, one per LDA topic. Inference routes the
/// source through the replica of its hard LDA label.
///
/// By default the embedding table is shared by all replicas and frozen during
/// per-topic training, so replicas never write to common state and may be
/// trained concurrently. With fork_embeddings each replica owns its table.
class TopicNhgModel {
 public:
  static TopicNhgModel fork(const NhgModel& baseline, int topics, std::shared_ptr<const LdaModel> lda,
                            bool fork_embeddings = false, const AssignOptions& assign = {});

  int topics() const { return static_cast<int>(replicas_.size()); }
  bool shared_embedding() const { return shared_embedding_; }
  const std::string& baseline_hash() const { return baseline_hash_; }
  const LdaModel& lda() const { return *lda_; }
  const AssignOptions& assign_options() const { return assign_; }

  NhgModel& replica(int topic);
  const NhgModel& replica(int topic) const;

  TopicAssignment route(std::span<const int> source) const;

  /// Runs `steps` train_steps on replica `topic`, cycling through `batches`.
  /// Every example must be routed to `topic` by the LDA model; the first one
  /// that is not raises std::invalid_argument naming its id. Returns the
  /// per-step losses.
  std::vector<double> train_topic(int topic, std::span<const std::vector<Example>> batches, const nn::Sgd& opt,
                                  int steps);

  TopicGeneration generate(std::span<const int> source, const DecodeConfig& cfg) const;

  /// log p(topic | x) from the LDA fold-in distribution.
  double log_prior(std::span<const int> source, int topic) const;
  /// log p(topic | x) + log p(y | x, topic).
  double joint_logprob(std::span<const int> source, std::span<const int> target, int topic) const;

  /// Checkpoint bytes of one replica (without the shared embedding).
  std::string replica_checkpoint_bytes(int topic) const;

  /// Writes manifest.json, replica_<k>.ckpt and, when shared, embedding.ckpt.
  void save(const std::string& dir, const nlohmann::json& extra = nlohmann::json::object()) const;
  /// Rewrites only replica_<topic>.ckpt; per-topic training jobs use this so
  /// they never touch each other's files.
  void save_replica(const std::string& dir, int topic) const;
  static std::string replica_file_name(int topic);
  /// The LDA model must hash to the manifest's lda_hash.
  static TopicNhgModel load(const std::string& dir, std::shared_ptr<const LdaModel> lda);

 private:
  TopicNhgModel() = default;
  void check_topic(int topic) const;

  std::vector<NhgModel> replicas_;
  std::shared_ptr<const LdaModel> lda_;
  std::shared_ptr<nn::Parameter> embedding_;  // null unless shared
  bool shared_embedding_ = true;
  std::string baseline_hash_;
  AssignOptions assign_;
};

/// SHA-256 of the LDA model's canonical JSON.
std::string lda_hash(const LdaModel& lda);

}  // namespace tnhg
