#include "tnhg/lda.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "tnhg/random.hpp"

namespace tnhg {

LdaModel::LdaModel(int topics, double alpha, double beta, int vocab_size, std::vector<bool> counted,
                   std::string vocab_hash)
    : topics_(topics),
      alpha_(alpha),
      beta_(beta),
      vocab_size_(vocab_size),
      counted_(std::move(counted)),
      vocab_hash_(std::move(vocab_hash)),
      counts_(static_cast<std::size_t>(topics) * static_cast<std::size_t>(vocab_size), 0),
      totals_(static_cast<std::size_t>(topics), 0) {
  if (topics < 1) throw std::invalid_argument("LDA needs at least one topic");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("LDA priors must be positive");
  if (vocab_size < 1 || counted_.size() != static_cast<std::size_t>(vocab_size)) {
    throw std::invalid_argument("LDA counted-word mask does not match vocabulary size");
  }
  counted_size_ = static_cast<int>(std::count(counted_.begin(), counted_.end(), true));
}

double LdaModel::word_probability(int k, int w) const {
  return (static_cast<double>(topic_word_count(k, w)) + beta_) /
         (static_cast<double>(topic_total(k)) + counted_size_ * beta_);
}

bool LdaModel::totals_consistent() const {
  for (int k = 0; k < topics_; ++k) {
    std::int64_t sum = 0;
    for (int w = 0; w < vocab_size_; ++w) {
      if (topic_word_count(k, w) < 0) return false;
      sum += topic_word_count(k, w);
    }
    if (sum != topic_total(k)) return false;
  }
  return true;
}

nlohmann::json LdaModel::to_json() const {
  nlohmann::json j;
  j["format"] = "tnhg-lda";
  j["version"] = 1;
  j["topics"] = topics_;
  j["alpha"] = alpha_;
  j["beta"] = beta_;
  j["vocab_size"] = vocab_size_;
  j["vocab_hash"] = vocab_hash_;
  std::vector<int> mask(counted_.begin(), counted_.end());
  j["counted"] = mask;
  auto rows = nlohmann::json::array();
  for (int k = 0; k < topics_; ++k) {
    rows.push_back(std::vector<std::int64_t>(counts_.begin() + static_cast<long>(index(k, 0)),
                                             counts_.begin() + static_cast<long>(index(k, 0) + vocab_size_)));
  }
  j["topic_word_counts"] = std::move(rows);
  return j;
}

LdaModel LdaModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tnhg-lda" || j.value("version", 0) != 1) {
    throw std::runtime_error("not a version-1 LDA model file");
  }
  const auto mask = j.at("counted").get<std::vector<int>>();
  LdaModel m(j.at("topics").get<int>(), j.at("alpha").get<double>(), j.at("beta").get<double>(),
             j.at("vocab_size").get<int>(), std::vector<bool>(mask.begin(), mask.end()),
             j.at("vocab_hash").get<std::string>());
  const auto& rows = j.at("topic_word_counts");
  if (rows.size() != static_cast<std::size_t>(m.topics_)) throw std::runtime_error("LDA count matrix has wrong row count");
  for (int k = 0; k < m.topics_; ++k) {
    const auto row = rows[static_cast<std::size_t>(k)].get<std::vector<std::int64_t>>();
    if (row.size() != static_cast<std::size_t>(m.vocab_size_)) throw std::runtime_error("LDA count row has wrong width");
    for (int w = 0; w < m.vocab_size_; ++w) {
      if (row[static_cast<std::size_t>(w)] < 0) throw std::runtime_error("negative LDA count");
      m.counts_[m.index(k, w)] = row[static_cast<std::size_t>(w)];
      m.totals_[static_cast<std::size_t>(k)] += row[static_cast<std::size_t>(w)];
    }
  }
  return m;
}

void LdaModel::save(const std::string& path, const nlohmann::json& extra) const {
  auto j = to_json();
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump() << '\n';
}

LdaModel LdaModel::load(const std::string& path, const std::string& expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  auto m = from_json(nlohmann::json::parse(in));
  if (!expected_vocab_hash.empty() && m.vocab_hash() != expected_vocab_hash) {
    throw std::runtime_error("LDA model " + path + " was fitted against a different vocabulary");
  }
  return m;
}

namespace {

int sample_discrete(std::span<const double> weights, double total, Rng& rng) {
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(weights.size()) - 1;
}

}  // namespace

class LdaTrainer {
 public:
  static LdaModel fit(const std::vector<Ids>& docs, int vocab_size, const LdaFitOptions& opt,
                      const std::string& vocab_hash) {
    if (opt.topics < 1) throw std::invalid_argument("LDA needs at least one topic");
    if (opt.iterations < 1) throw std::invalid_argument("LDA needs at least one iteration");
    if (docs.empty()) throw std::invalid_argument("cannot fit LDA on an empty corpus");
    const int K = opt.topics;
    const double alpha = opt.alpha > 0.0 ? opt.alpha : 50.0 / K;

    // document frequency for the stopword proxy
    std::vector<std::size_t> df(static_cast<std::size_t>(vocab_size), 0);
    for (const auto& d : docs) {
      std::vector<int> seen(d.begin(), d.end());
      std::sort(seen.begin(), seen.end());
      seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
      for (int w : seen) {
        if (w < 0 || w >= vocab_size) throw std::out_of_range("word id outside LDA vocabulary");
        ++df[static_cast<std::size_t>(w)];
      }
    }
    std::vector<bool> counted(static_cast<std::size_t>(vocab_size), false);
    const double limit = opt.max_doc_fraction * static_cast<double>(docs.size());
    for (int w = kReservedCount; w < vocab_size; ++w) {
      const auto n = df[static_cast<std::size_t>(w)];
      counted[static_cast<std::size_t>(w)] = n > 0 && static_cast<double>(n) <= limit;
    }

    LdaModel m(K, alpha, opt.beta, vocab_size, std::move(counted), vocab_hash);
    const double vbeta = m.counted_size_ * m.beta_;

    std::vector<std::vector<int>> words(docs.size());
    std::vector<std::vector<int>> z(docs.size());
    std::vector<std::vector<std::int64_t>> doc_topic(docs.size(), std::vector<std::int64_t>(static_cast<std::size_t>(K), 0));
    Rng rng(opt.seed);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      for (int w : docs[d]) {
        if (!m.counted(w)) continue;
        const int k = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(K)));
        words[d].push_back(w);
        z[d].push_back(k);
        ++doc_topic[d][static_cast<std::size_t>(k)];
        ++m.counts_[m.index(k, w)];
        ++m.totals_[static_cast<std::size_t>(k)];
      }
    }

    std::vector<double> p(static_cast<std::size_t>(K));
    for (int it = 0; it < opt.iterations; ++it) {
      for (std::size_t d = 0; d < docs.size(); ++d) {
        auto& nd = doc_topic[d];
        for (std::size_t i = 0; i < words[d].size(); ++i) {
          const int w = words[d][i];
          int k = z[d][i];
          --nd[static_cast<std::size_t>(k)];
          --m.counts_[m.index(k, w)];
          --m.totals_[static_cast<std::size_t>(k)];
          double total = 0.0;
          for (int t = 0; t < K; ++t) {
            const auto ts = static_cast<std::size_t>(t);
            p[ts] = (static_cast<double>(nd[ts]) + alpha) *
                    (static_cast<double>(m.counts_[m.index(t, w)]) + m.beta_) /
                    (static_cast<double>(m.totals_[ts]) + vbeta);
            total += p[ts];
          }
          k = sample_discrete(p, total, rng);
          z[d][i] = k;
          ++nd[static_cast<std::size_t>(k)];
          ++m.counts_[m.index(k, w)];
          ++m.totals_[static_cast<std::size_t>(k)];
        }
      }
    }
    return m;
  }
};

LdaModel fit_gibbs(const std::vector<Ids>& docs, int vocab_size, const LdaFitOptions& options,
                   const std::string& vocab_hash) {
  return LdaTrainer::fit(docs, vocab_size, options, vocab_hash);
}

LdaModel fit_gibbs(const std::vector<Document>& docs, const Vocabulary& vocab, const LdaFitOptions& options) {
  std::vector<Ids> encoded;
  encoded.reserve(docs.size());
  for (const auto& d : docs) encoded.push_back(encode(vocab, d.text));
  return fit_gibbs(encoded, vocab.size(), options, vocab.hash());
}

std::vector<double> infer_topic_dist(const LdaModel& model, std::span<const int> doc, int iterations,
                                     std::uint64_t seed) {
  if (iterations < 1) throw std::invalid_argument("topic inference needs at least one iteration");
  const int K = model.topics();
  const auto Ks = static_cast<std::size_t>(K);
  std::vector<int> words;
  for (int w : doc) {
    if (model.counted(w)) words.push_back(w);
  }
  if (words.empty()) return std::vector<double>(Ks, 1.0 / K);

  const double alpha = model.alpha();
  const double vbeta = model.counted_vocab_size() * model.beta();
  Rng rng(seed);
  std::vector<int> z(words.size());
  std::vector<std::int64_t> nd(Ks, 0);
  for (auto& k : z) {
    k = static_cast<int>(uniform_index(rng, Ks));
    ++nd[static_cast<std::size_t>(k)];
  }

  const int window = std::max(1, iterations / 4);
  const double denom = static_cast<double>(words.size()) + K * alpha;
  std::vector<double> avg(Ks, 0.0);
  std::vector<double> p(Ks);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      const int w = words[i];
      --nd[static_cast<std::size_t>(z[i])];
      double total = 0.0;
      for (int t = 0; t < K; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        p[ts] = (static_cast<double>(nd[ts]) + alpha) *
                (static_cast<double>(model.topic_word_count(t, w)) + model.beta()) /
                (static_cast<double>(model.topic_total(t)) + vbeta);
        total += p[ts];
      }
      z[i] = sample_discrete(p, total, rng);
      ++nd[static_cast<std::size_t>(z[i])];
    }
    if (it >= iterations - window) {
      for (std::size_t t = 0; t < Ks; ++t) avg[t] += (static_cast<double>(nd[t]) + alpha) / denom;
    }
  }
  double sum = 0.0;
  for (auto& a : avg) {
    a /= window;
    sum += a;
  }
  for (auto& a : avg) a /= sum;
  return avg;
}

int argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

TopicAssignment assign_topic(const LdaModel& model, std::span<const int> doc, const AssignOptions& options,
                             std::size_t doc_index) {
  TopicAssignment a;
  a.doc_index = doc_index;
  a.distribution = infer_topic_dist(model, doc, options.iterations, options.seed);
  a.label = argmax_lowest(a.distribution);
  return a;
}

namespace {

void check_topic(const LdaModel& model, int k, int n) {
  if (k < 0 || k >= model.topics()) throw std::out_of_range("topic index " + std::to_string(k) + " out of range");
  if (n < 1) throw std::invalid_argument("top_words needs n >= 1");
}

}  // namespace

std::vector<int> top_words(const LdaModel& model, int k, int n) {
  check_topic(model, k, n);
  std::vector<int> ids;
  for (int w = 0; w < model.vocab_size(); ++w) {
    if (model.counted(w)) ids.push_back(w);
  }
  std::stable_sort(ids.begin(), ids.end(),
                   [&](int a, int b) { return model.topic_word_count(k, a) > model.topic_word_count(k, b); });
  ids.resize(std::min(ids.size(), static_cast<std::size_t>(n)));
  return ids;
}

Tokens top_words(const LdaModel& model, const Vocabulary& vocab, int k, int n) {
  check_topic(model, k, n);
  std::vector<int> ids;
  for (int w = 0; w < model.vocab_size(); ++w) {
    if (model.counted(w)) ids.push_back(w);
  }
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    const auto ca = model.topic_word_count(k, a);
    const auto cb = model.topic_word_count(k, b);
    if (ca != cb) return ca > cb;
    return vocab.token(a) < vocab.token(b);
  });
  ids.resize(std::min(ids.size(), static_cast<std::size_t>(n)));
  Tokens out;
  for (int w : ids) out.push_back(vocab.token(w));
  return out;
}

}  // namespace tnhg
