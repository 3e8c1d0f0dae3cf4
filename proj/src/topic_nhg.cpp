#include "tnhg/topic_nhg.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tnhg/hash.hpp"

namespace tnhg {

std::string lda_hash(const LdaModel& lda) { return sha256_hex(lda.to_json().dump()); }

TopicNhgModel TopicNhgModel::fork(const NhgModel& baseline, int topics, std::shared_ptr<const LdaModel> lda,
                                  bool fork_embeddings, const AssignOptions& assign) {
  if (topics < 1) throw std::invalid_argument("fork: need at least one topic");
  if (!lda) throw std::invalid_argument("fork: no LDA model");
  if (lda->topics() != topics) {
    throw std::invalid_argument("fork: LDA model has " + std::to_string(lda->topics()) + " topics, asked for " +
                                std::to_string(topics));
  }
  if (lda->vocab_size() != baseline.config().vocab_size) {
    throw std::invalid_argument("fork: LDA and baseline vocabularies differ in size");
  }
  TopicNhgModel m;
  m.lda_ = std::move(lda);
  m.assign_ = assign;
  m.shared_embedding_ = !fork_embeddings;
  m.baseline_hash_ = sha256_hex(baseline.checkpoint_bytes());
  if (m.shared_embedding_) m.embedding_ = std::make_shared<nn::Parameter>(baseline.embedding());
  m.replicas_.reserve(static_cast<std::size_t>(topics));
  for (int k = 0; k < topics; ++k) {
    m.replicas_.push_back(baseline);
    if (m.shared_embedding_) m.replicas_.back().share_embedding(m.embedding_);
  }
  return m;
}

void TopicNhgModel::check_topic(int topic) const {
  if (topic < 0 || topic >= topics()) {
    throw std::out_of_range("topic " + std::to_string(topic) + " out of range [0, " + std::to_string(topics()) + ")");
  }
}

NhgModel& TopicNhgModel::replica(int topic) {
  check_topic(topic);
  return replicas_[static_cast<std::size_t>(topic)];
}

const NhgModel& TopicNhgModel::replica(int topic) const {
  check_topic(topic);
  return replicas_[static_cast<std::size_t>(topic)];
}

TopicAssignment TopicNhgModel::route(std::span<const int> source) const { return assign_topic(*lda_, source, assign_); }

std::vector<double> TopicNhgModel::train_topic(int topic, std::span<const std::vector<Example>> batches,
                                               const nn::Sgd& opt, int steps) {
  check_topic(topic);
  if (steps < 0) throw std::invalid_argument("train_topic: negative step count");
  for (const auto& batch : batches) {
    for (const auto& ex : batch) {
      const int label = route(ex.source).label;
      if (label != topic) {
        throw std::invalid_argument("train_topic: document " + std::to_string(ex.id) + " is assigned topic " +
                                    std::to_string(label) + ", not " + std::to_string(topic));
      }
    }
  }
  std::vector<double> losses;
  if (steps == 0) return losses;
  if (batches.empty()) throw std::invalid_argument("train_topic: no batches");
  losses.reserve(static_cast<std::size_t>(steps));
  NhgModel& model = replica(topic);
  for (int s = 0; s < steps; ++s) {
    const auto& batch = batches[static_cast<std::size_t>(s) % batches.size()];
    losses.push_back(train_step(model, batch, opt, /*train_embedding=*/!shared_embedding_));
  }
  return losses;
}

TopicGeneration TopicNhgModel::generate(std::span<const int> source, const DecodeConfig& cfg) const {
  TopicGeneration out;
  out.topic = route(source).label;
  out.ids = replica(out.topic).generate(source, cfg);
  return out;
}

double TopicNhgModel::log_prior(std::span<const int> source, int topic) const {
  check_topic(topic);
  const auto dist = infer_topic_dist(*lda_, source, assign_.iterations, assign_.seed);
  return std::log(dist[static_cast<std::size_t>(topic)]);
}

double TopicNhgModel::joint_logprob(std::span<const int> source, std::span<const int> target, int topic) const {
  return log_prior(source, topic) - replica(topic).sequence_nll(source, target);
}

std::string TopicNhgModel::replica_checkpoint_bytes(int topic) const {
  return replica(topic).checkpoint_bytes(!shared_embedding_, {{"topic", topic}});
}

std::string TopicNhgModel::replica_file_name(int topic) { return "replica_" + std::to_string(topic) + ".ckpt"; }

void TopicNhgModel::save_replica(const std::string& dir, int topic) const {
  nn::write_file((std::filesystem::path(dir) / replica_file_name(topic)).string(), replica_checkpoint_bytes(topic));
}

void TopicNhgModel::save(const std::string& dir, const nlohmann::json& extra) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest = extra;
  manifest["format"] = "tnhg-topic-model";
  manifest["version"] = 1;
  manifest["topics"] = topics();
  manifest["baseline_hash"] = baseline_hash_;
  manifest["lda_hash"] = lda_hash(*lda_);
  manifest["shared_embedding"] = shared_embedding_;
  manifest["assign_iterations"] = assign_.iterations;
  manifest["assign_seed"] = assign_.seed;
  auto files = nlohmann::json::array();
  for (int k = 0; k < topics(); ++k) {
    save_replica(dir, k);
    files.push_back(replica_file_name(k));
  }
  manifest["replicas"] = files;
  if (shared_embedding_) {
    const std::string bytes = nn::serialize_checkpoint({{"kind", "embedding"}}, {embedding_.get()});
    nn::write_file((fs::path(dir) / "embedding.ckpt").string(), bytes);
    manifest["embedding"] = {{"file", "embedding.ckpt"}, {"sha256", sha256_hex(bytes)}};
  }
  nn::write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

TopicNhgModel TopicNhgModel::load(const std::string& dir, std::shared_ptr<const LdaModel> lda) {
  namespace fs = std::filesystem;
  const auto manifest = nlohmann::json::parse(nn::read_file((fs::path(dir) / "manifest.json").string()));
  if (manifest.value("format", "") != "tnhg-topic-model" || manifest.value("version", 0) != 1) {
    throw std::runtime_error(dir + " is not a version-1 topic model");
  }
  if (!lda || lda_hash(*lda) != manifest.at("lda_hash").get<std::string>()) {
    throw std::runtime_error("LDA model does not match the topic model manifest");
  }
  TopicNhgModel m;
  m.lda_ = std::move(lda);
  m.shared_embedding_ = manifest.at("shared_embedding").get<bool>();
  m.baseline_hash_ = manifest.at("baseline_hash").get<std::string>();
  m.assign_.iterations = manifest.at("assign_iterations").get<int>();
  m.assign_.seed = manifest.at("assign_seed").get<std::uint64_t>();
  if (m.shared_embedding_) {
    const auto ckpt = nn::parse_checkpoint(nn::read_file((fs::path(dir) / "embedding.ckpt").string()));
    const auto* t = ckpt.find("embedding");
    if (!t) throw std::runtime_error("embedding.ckpt has no embedding tensor");
    m.embedding_ = std::make_shared<nn::Parameter>("embedding", t->value.rows(), t->value.cols());
    m.embedding_->value = t->value;
  }
  const int K = manifest.at("topics").get<int>();
  if (m.lda_->topics() != K) throw std::runtime_error("LDA topic count differs from the topic model");
  for (int k = 0; k < K; ++k) {
    const auto name = manifest.at("replicas").at(static_cast<std::size_t>(k)).get<std::string>();
    const std::string bytes = nn::read_file((fs::path(dir) / name).string());
    m.replicas_.push_back(NhgModel::from_checkpoint(nn::parse_checkpoint(bytes), m.embedding_));
  }
  return m;
}

}  // namespace tnhg
