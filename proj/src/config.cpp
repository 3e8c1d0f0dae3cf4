#include "tnhg/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <variant>

#include "tnhg/hash.hpp"

namespace tnhg {

namespace {

struct IntField {
  int RunConfig::*member;
  long long lo, hi;
};
struct U64Field {
  std::uint64_t RunConfig::*member;
};
struct RealField {
  double RunConfig::*member;
  double lo, hi;
  bool lo_open;
};
struct BoolField {
  bool RunConfig::*member;
};
struct PathField {
  std::string RunConfig::*member;
};
using Field = std::variant<IntField, U64Field, RealField, BoolField, PathField>;

struct Entry {
  Field field;
  const char* help;
};

constexpr long long kBig = std::numeric_limits<int>::max();

const std::map<std::string, Entry, std::less<>>& registry() {
  static const std::map<std::string, Entry, std::less<>> r = {
      {"corpus", {PathField{&RunConfig::corpus}, "input corpus (JSONL)"}},
      {"test", {PathField{&RunConfig::test}, "held-out test corpus (JSONL), filtered by min_score"}},
      {"out_dir", {PathField{&RunConfig::out_dir}, "output directory"}},
      {"train", {PathField{&RunConfig::train}, "training data (JSONL)"}},
      {"vocab", {PathField{&RunConfig::vocab}, "vocabulary file"}},
      {"lda_model", {PathField{&RunConfig::lda_model}, "LDA model file"}},
      {"baseline", {PathField{&RunConfig::baseline}, "baseline checkpoint"}},
      {"topic_model", {PathField{&RunConfig::topic_model}, "topic model directory"}},
      {"input", {PathField{&RunConfig::input}, "input data (JSONL)"}},
      {"output", {PathField{&RunConfig::output}, "output file"}},
      {"predictions", {PathField{&RunConfig::predictions}, "predictions file (JSONL)"}},
      {"report", {PathField{&RunConfig::report}, "report output path (JSON)"}},
      {"dump_attention", {PathField{&RunConfig::dump_attention}, "write per-step attention weights here (JSONL)"}},
      {"min_count", {IntField{&RunConfig::min_count, 1, kBig}, "minimum token frequency for the vocabulary"}},
      {"min_score", {IntField{&RunConfig::min_score, 1, 5}, "keep test pairs scored at least this"}},
      {"train_fraction", {RealField{&RunConfig::train_fraction, 0.0, 1.0, false}, "training share of the corpus"}},
      {"dev_fraction", {RealField{&RunConfig::dev_fraction, 0.0, 1.0, false}, "dev share of the corpus"}},
      {"split_seed", {U64Field{&RunConfig::split_seed}, "seed for the train/dev/test split"}},
      {"topics", {IntField{&RunConfig::topics, 1, 1000}, "number of LDA topics / model replicas"}},
      {"lda_alpha", {RealField{&RunConfig::lda_alpha, 0.0, 1e6, false}, "document-topic prior (0 = 50/topics)"}},
      {"lda_beta", {RealField{&RunConfig::lda_beta, 0.0, 1e6, true}, "topic-word prior"}},
      {"lda_iterations", {IntField{&RunConfig::lda_iterations, 1, kBig}, "Gibbs sweeps"}},
      {"lda_max_doc_fraction",
       {RealField{&RunConfig::lda_max_doc_fraction, 0.0, 1.0, true}, "drop words in more than this share of documents"}},
      {"lda_seed", {U64Field{&RunConfig::lda_seed}, "Gibbs sampler seed"}},
      {"assign_iterations", {IntField{&RunConfig::assign_iterations, 1, kBig}, "fold-in sweeps for topic assignment"}},
      {"assign_seed", {U64Field{&RunConfig::assign_seed}, "fold-in seed for topic assignment"}},
      {"embed", {IntField{&RunConfig::embed, 1, 4096}, "embedding size"}},
      {"hidden", {IntField{&RunConfig::hidden, 1, 4096}, "encoder hidden size per direction"}},
      {"decoder", {IntField{&RunConfig::decoder, 1, 4096}, "decoder hidden size"}},
      {"attention_size", {IntField{&RunConfig::attention_size, 0, 4096}, "attention size (0 = decoder size)"}},
      {"attention", {BoolField{&RunConfig::attention}, "use attention (false = static mean-pooled context)"}},
      {"bias", {BoolField{&RunConfig::bias}, "GRU biases"}},
      {"fork_embeddings", {BoolField{&RunConfig::fork_embeddings}, "give every topic replica its own embedding"}},
      {"init_scale", {RealField{&RunConfig::init_scale, 0.0, 10.0, false}, "uniform init half-width"}},
      {"model_seed", {U64Field{&RunConfig::model_seed}, "parameter initialization seed"}},
      {"learning_rate", {RealField{&RunConfig::learning_rate, 0.0, 100.0, false}, "SGD learning rate"}},
      {"clip", {RealField{&RunConfig::clip, 0.0, 1e9, true}, "global gradient-norm clip"}},
      {"batch", {IntField{&RunConfig::batch, 1, kBig}, "pairs per training step"}},
      {"baseline_steps", {IntField{&RunConfig::baseline_steps, 0, kBig}, "baseline training steps"}},
      {"topic_steps", {IntField{&RunConfig::topic_steps, 0, kBig}, "fine-tuning steps per topic"}},
      {"topic", {IntField{&RunConfig::topic, -1, 1000}, "topic replica to fine-tune"}},
      {"train_seed", {U64Field{&RunConfig::train_seed}, "batch sampling seed"}},
      {"log_every", {IntField{&RunConfig::log_every, 0, kBig}, "log the loss every n steps (0 = never)"}},
      {"threads", {IntField{&RunConfig::threads, 1, 256}, "parallel per-topic fine-tuning jobs"}},
      {"max_len", {IntField{&RunConfig::max_len, 1, 4096}, "maximum generated length"}},
      {"beam", {IntField{&RunConfig::beam, 1, 4096}, "beam width (1 = greedy)"}},
      {"length_norm", {BoolField{&RunConfig::length_norm}, "length-normalize beam scores"}},
      {"synth_topics", {IntField{&RunConfig::synth_topics, 1, 26}, "synthetic corpus: planted topics"}},
      {"synth_train", {IntField{&RunConfig::synth_train, 1, kBig}, "synthetic corpus: training pairs"}},
      {"synth_test", {IntField{&RunConfig::synth_test, 1, kBig}, "synthetic corpus: test pairs scored >= 3"}},
      {"synth_words_per_topic", {IntField{&RunConfig::synth_words_per_topic, 1, 64}, "synthetic corpus: topic alphabet size"}},
      {"synth_shared_words", {IntField{&RunConfig::synth_shared_words, 0, 10}, "synthetic corpus: shared filler characters"}},
      {"synth_shared_rate", {RealField{&RunConfig::synth_shared_rate, 0.0, 1.0, false}, "synthetic corpus: filler probability"}},
      {"synth_min_len", {IntField{&RunConfig::synth_min_len, 4, 1000}, "synthetic corpus: shortest source"}},
      {"synth_max_len", {IntField{&RunConfig::synth_max_len, 4, 1000}, "synthetic corpus: longest source"}},
      {"synth_seed", {U64Field{&RunConfig::synth_seed}, "synthetic corpus seed"}},
  };
  return r;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

// shortest text that parses back to the same double
std::string format_real(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view raw) {
  const auto it = registry().find(key);
  if (it == registry().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  const std::string_view value = trim(raw);
  std::visit(
      [&](const auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, IntField>) {
          const auto v = parse_number<long long>(key, value);
          if (v < f.lo || v > f.hi) {
            throw ConfigError(std::string(key) + " must be in [" + std::to_string(f.lo) + ", " + std::to_string(f.hi) + "]");
          }
          this->*f.member = static_cast<int>(v);
        } else if constexpr (std::is_same_v<F, U64Field>) {
          this->*f.member = parse_number<std::uint64_t>(key, value);
        } else if constexpr (std::is_same_v<F, RealField>) {
          const auto v = parse_number<double>(key, value);
          if (!std::isfinite(v) || v < f.lo || v > f.hi || (f.lo_open && v == f.lo)) {
            throw ConfigError(std::string(key) + " must be in " + (f.lo_open ? "(" : "[") + format_real(f.lo) + ", " +
                              format_real(f.hi) + "]");
          }
          this->*f.member = v;
        } else if constexpr (std::is_same_v<F, BoolField>) {
          if (value == "true" || value == "1" || value == "on") {
            this->*f.member = true;
          } else if (value == "false" || value == "0" || value == "off") {
            this->*f.member = false;
          } else {
            throw ConfigError("invalid boolean '" + std::string(value) + "' for " + std::string(key));
          }
        } else {
          this->*f.member = std::string(value);
        }
      },
      it->second.field);
}

std::string RunConfig::get(std::string_view key) const {
  const auto it = registry().find(key);
  if (it == registry().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return std::visit(
      [&](const auto& f) -> std::string {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, RealField>) {
          return format_real(this->*f.member);
        } else if constexpr (std::is_same_v<F, BoolField>) {
          return this->*f.member ? "true" : "false";
        } else if constexpr (std::is_same_v<F, PathField>) {
          return this->*f.member;
        } else {
          return std::to_string(this->*f.member);
        }
      },
      it->second.field);
}

void RunConfig::merge_text(std::string_view text) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str());
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [key, entry] : registry()) out += key + " = " + get(key) + "\n";
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(canonical()).substr(0, 16); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [key, entry] : registry()) out.push_back(key);
    return out;
  }();
  return k;
}

std::string RunConfig::help(std::string_view key) {
  const auto it = registry().find(key);
  return it == registry().end() ? std::string{} : it->second.help;
}

LdaFitOptions RunConfig::lda_options() const {
  LdaFitOptions o;
  o.topics = topics;
  o.alpha = lda_alpha;
  o.beta = lda_beta;
  o.iterations = lda_iterations;
  o.seed = lda_seed;
  o.max_doc_fraction = lda_max_doc_fraction;
  return o;
}

AssignOptions RunConfig::assign_options() const { return {assign_iterations, assign_seed}; }

NhgConfig RunConfig::model_config(const Vocabulary& vocab) const {
  NhgConfig c;
  c.vocab_size = vocab.size();
  c.embed_size = embed;
  c.hidden_size = hidden;
  c.decoder_size = decoder;
  c.attention_size = attention_size;
  c.use_attention = attention;
  c.use_bias = bias;
  c.vocab_hash = vocab.hash();
  return c;
}

DecodeConfig RunConfig::decode_config() const { return {max_len, beam, length_norm}; }

}  // namespace tnhg
