// tnhg: command-line driver for the topic-sensitive headline generation pipeline.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "tnhg/config.hpp"
#include "tnhg/corpus.hpp"
#include "tnhg/hash.hpp"
#include "tnhg/lda.hpp"
#include "tnhg/nhg.hpp"
#include "tnhg/pipeline.hpp"
#include "tnhg/rouge.hpp"
#include "tnhg/synth.hpp"
#include "tnhg/topic_nhg.hpp"

namespace fs = std::filesystem;
using namespace tnhg;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Failures that are the caller's fault; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Context {
  RunConfig cfg;
  std::string system = "topic";
  std::string baseline_predictions;
};

std::string flag_name(const std::string& key) {
  std::string s = key;
  for (auto& c : s)
    if (c == '_') c = '-';
  return "--" + s;
}

std::string path_or(const std::string& given, const RunConfig& cfg, const std::string& file) {
  return given.empty() ? (fs::path(cfg.out_dir) / file).string() : given;
}

std::string meta_path(const std::string& path) { return path + ".meta.json"; }

void write_meta(const std::string& path, const RunConfig& cfg, const std::string& command, json extra = json::object()) {
  extra["config_hash"] = cfg.hash();
  extra["command"] = command;
  extra["seeds"] = {{"split", cfg.split_seed}, {"lda", cfg.lda_seed},     {"assign", cfg.assign_seed},
                    {"model", cfg.model_seed}, {"train", cfg.train_seed}, {"synth", cfg.synth_seed}};
  std::ofstream out(meta_path(path), std::ios::binary);
  out << extra.dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + meta_path(path));
}

json read_meta(const std::string& path) {
  std::ifstream in(meta_path(path), std::ios::binary);
  if (!in) return json();
  return json::parse(in);
}

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

void ensure_parent(const std::string& path) { ensure_dir(fs::path(path).parent_path().string()); }

void log_run(const RunConfig& cfg, const std::string& command) {
  spdlog::info("{}: config {} seeds split={} lda={} assign={} model={} train={} synth={}", command, cfg.hash(),
               cfg.split_seed, cfg.lda_seed, cfg.assign_seed, cfg.model_seed, cfg.train_seed, cfg.synth_seed);
}

std::vector<Document> keep_scored(const std::vector<Document>& docs, int min_score) {
  std::vector<Document> out;
  for (const auto& d : docs)
    if (!d.score || *d.score >= min_score) out.push_back(d);
  return out;
}

Vocabulary load_vocab(const RunConfig& cfg) { return Vocabulary::load(path_or(cfg.vocab, cfg, "vocab.txt")); }

std::shared_ptr<const LdaModel> load_lda(const RunConfig& cfg, const Vocabulary& vocab) {
  return std::make_shared<const LdaModel>(LdaModel::load(path_or(cfg.lda_model, cfg, "lda.json"), vocab.hash()));
}

void check_model_vocab(const NhgModel& model, const Vocabulary& vocab) {
  if (model.config().vocab_hash != vocab.hash()) {
    throw std::runtime_error("model was trained with a different vocabulary");
  }
}

// ---- subcommands ----

void cmd_synth(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto corpus = make_topic_pattern_corpus(synth_options(cfg));
  const auto train = path_or(cfg.train, cfg, "train.jsonl");
  const auto test = path_or(cfg.test, cfg, "test.jsonl");
  ensure_parent(train);
  ensure_parent(test);
  save_corpus(train, corpus.train);
  save_corpus(test, corpus.test);
  write_meta(train, cfg, "synth", {{"planted_topics", corpus.train_topics}});
  write_meta(test, cfg, "synth", {{"planted_topics", corpus.test_topics}});
  spdlog::info("wrote {} train and {} test documents", corpus.train.size(), corpus.test.size());
}

void cmd_prepare(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  ensure_dir(cfg.out_dir);
  std::vector<Document> train;
  if (!cfg.corpus.empty()) {
    const auto split = split_dataset(load_corpus(cfg.corpus), cfg.train_fraction, cfg.dev_fraction, cfg.split_seed);
    train = split.train;
    const auto dev = keep_scored(split.dev, cfg.min_score);
    const auto test = keep_scored(split.test, cfg.min_score);
    using Part = std::pair<const char*, const std::vector<Document>*>;
    for (const auto& [name, docs] : {Part{"train.jsonl", &train}, Part{"dev.jsonl", &dev}, Part{"test.jsonl", &test}}) {
      const auto path = (fs::path(cfg.out_dir) / name).string();
      save_corpus(path, *docs);
      write_meta(path, cfg, "prepare");
    }
    spdlog::info("split {} / {} / {} documents", train.size(), dev.size(), test.size());
  } else if (!cfg.train.empty()) {
    train = load_corpus(cfg.train);
  } else {
    throw UsageError("prepare needs --corpus or --train");
  }
  const auto vocab = build_vocab(train, cfg.min_count);
  const auto path = path_or(cfg.vocab, cfg, "vocab.txt");
  ensure_parent(path);
  vocab.save(path);
  write_meta(path, cfg, "prepare", {{"vocab_hash", vocab.hash()}, {"size", vocab.size()}});
  spdlog::info("vocabulary: {} entries, hash {}", vocab.size(), vocab.hash());
}

void cmd_lda_fit(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto vocab = load_vocab(cfg);
  const auto docs = load_corpus(path_or(cfg.train, cfg, "train.jsonl"));
  const auto lda = fit_gibbs(docs, vocab, cfg.lda_options());
  const auto path = path_or(cfg.lda_model, cfg, "lda.json");
  ensure_parent(path);
  lda.save(path, {{"config_hash", cfg.hash()}});
  for (int k = 0; k < lda.topics(); ++k) {
    std::cout << "topic " << k << ":";
    for (const auto& w : top_words(lda, vocab, k, 10)) std::cout << ' ' << w;
    std::cout << '\n';
  }
}

void cmd_lda_assign(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto vocab = load_vocab(cfg);
  const auto lda = load_lda(cfg, vocab);
  const auto input = path_or(cfg.input, cfg, "train.jsonl");
  auto docs = load_corpus(input);
  const auto labels = assign_labels(*lda, vocab, docs, cfg.assign_options());
  std::vector<int> counts(static_cast<std::size_t>(lda->topics()), 0);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    docs[i].topic = labels[i];
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  const auto output = path_or(cfg.output, cfg, fs::path(input).stem().string() + ".labeled.jsonl");
  ensure_parent(output);
  save_corpus(output, docs);
  write_meta(output, cfg, "lda-assign", {{"vocab_hash", vocab.hash()}, {"lda_hash", lda_hash(*lda)}, {"topic_counts", counts}});
  for (std::size_t k = 0; k < counts.size(); ++k) spdlog::info("topic {}: {} documents", k, counts[k]);
}

void cmd_train_baseline(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto vocab = load_vocab(cfg);
  const auto examples = make_examples(vocab, load_corpus(path_or(cfg.train, cfg, "train.jsonl")));
  if (examples.empty()) throw std::runtime_error("no training documents");
  NhgModel model(cfg.model_config(vocab), cfg.model_seed, cfg.init_scale);
  const int every = cfg.log_every;
  train_baseline(model, examples, cfg, cfg.baseline_steps, [every](int step, double loss) {
    if (every > 0 && step % every == 0) spdlog::info("step {}: loss {:.4f}", step, loss);
  });
  const auto path = path_or(cfg.baseline, cfg, "baseline.ckpt");
  ensure_parent(path);
  model.save(path, true, {{"config_hash", cfg.hash()}, {"steps", cfg.baseline_steps}});
}

void cmd_fork(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto vocab = load_vocab(cfg);
  const auto lda = load_lda(cfg, vocab);
  const auto baseline = NhgModel::load(path_or(cfg.baseline, cfg, "baseline.ckpt"));
  check_model_vocab(baseline, vocab);
  const auto model = TopicNhgModel::fork(baseline, cfg.topics, lda, cfg.fork_embeddings, cfg.assign_options());
  model.save(path_or(cfg.topic_model, cfg, "topic_model"), {{"config_hash", cfg.hash()}, {"vocab_hash", vocab.hash()}});
  spdlog::info("forked {} replicas from baseline {}", model.topics(), model.baseline_hash().substr(0, 16));
}

void cmd_train_topic(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto vocab = load_vocab(cfg);
  const auto lda = load_lda(cfg, vocab);
  const auto dir = path_or(cfg.topic_model, cfg, "topic_model");
  auto model = TopicNhgModel::load(dir, lda);
  if (cfg.topic >= model.topics()) throw UsageError("--topic must be below " + std::to_string(model.topics()));

  const auto docs = load_corpus(path_or(cfg.train, cfg, "train.labeled.jsonl"));
  const auto examples = make_examples(vocab, docs);
  std::vector<int> labels;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (!docs[i].topic) {
      throw std::runtime_error("document " + std::to_string(i) + " has no topic; run lda-assign first");
    }
    labels.push_back(*docs[i].topic);
  }
  if (cfg.topic < 0) {
    train_all_topics(model, examples, labels, cfg);
    model.save(dir, {{"config_hash", cfg.hash()}, {"vocab_hash", vocab.hash()}});
    return;
  }
  std::vector<Example> subset;
  for (std::size_t i = 0; i < examples.size(); ++i)
    if (labels[i] == cfg.topic) subset.push_back(examples[i]);
  if (subset.empty()) throw std::runtime_error("no training documents for topic " + std::to_string(cfg.topic));
  const auto batches =
      make_batches(subset, cfg.batch, cfg.topic_steps, cfg.train_seed + 1 + static_cast<std::uint64_t>(cfg.topic));
  const auto losses = model.train_topic(cfg.topic, batches, nn::Sgd(cfg.learning_rate, cfg.clip), cfg.topic_steps);
  if (!losses.empty()) spdlog::info("topic {}: {} examples, final loss {:.4f}", cfg.topic, subset.size(), losses.back());
  model.save_replica(dir, cfg.topic);
}

void cmd_generate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto vocab = load_vocab(cfg);
  const auto dcfg = cfg.decode_config();
  if (!cfg.dump_attention.empty() && dcfg.beam_width > 1) throw UsageError("--dump-attention needs --beam 1");

  std::optional<TopicNhgModel> topic_model;
  std::optional<NhgModel> baseline;
  std::string model_hash;
  if (ctx.system == "topic") {
    const auto dir = path_or(cfg.topic_model, cfg, "topic_model");
    topic_model.emplace(TopicNhgModel::load(dir, load_lda(cfg, vocab)));
    check_model_vocab(topic_model->replica(0), vocab);
    model_hash = sha256_file((fs::path(dir) / "manifest.json").string());
  } else {
    const auto path = path_or(cfg.baseline, cfg, "baseline.ckpt");
    baseline.emplace(NhgModel::load(path));
    check_model_vocab(*baseline, vocab);
    model_hash = sha256_file(path);
  }

  const auto docs = keep_scored(load_corpus(path_or(cfg.input, cfg, "test.jsonl")), cfg.min_score);
  const auto output = path_or(cfg.output, cfg, ctx.system + ".predictions.jsonl");
  ensure_parent(output);
  std::ofstream out(output, std::ios::binary);
  json attention = json::array();
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const Ids src = encode(vocab, docs[i].text);
    const NhgModel* model = baseline ? &*baseline : nullptr;
    std::optional<int> topic = docs[i].topic;
    if (topic_model) {
      const auto routed = topic_model->route(src);
      topic = routed.label;
      model = &topic_model->replica(routed.label);
    }
    Ids ids;
    if (!cfg.dump_attention.empty()) {
      std::vector<nn::Vector> trace;
      ids = model->generate_greedy(src, dcfg, &trace);
      json steps = json::array();
      for (const auto& w : trace) steps.push_back(std::vector<double>(w.data(), w.data() + w.size()));
      attention.push_back({{"index", i}, {"source", join_tokens(docs[i].text)}, {"generated", join_tokens(decode(vocab, ids))}, {"weights", steps}});
    } else {
      ids = model->generate(src, dcfg);
    }
    ordered_json line;
    line["text"] = join_tokens(docs[i].text);
    line["headline"] = join_tokens(docs[i].headline);
    line["generated"] = join_tokens(decode(vocab, ids));
    line["topic"] = topic ? ordered_json(*topic) : ordered_json(nullptr);
    out << line.dump() << '\n';
  }
  out.close();
  if (!out) throw std::runtime_error("cannot write " + output);
  write_meta(output, cfg, "generate", {{"vocab_hash", vocab.hash()}, {"system", ctx.system}, {"model_hash", model_hash}});
  if (!cfg.dump_attention.empty()) {
    ensure_parent(cfg.dump_attention);
    std::ofstream(cfg.dump_attention, std::ios::binary) << attention.dump() << '\n';
  }
  spdlog::info("generated {} headlines into {}", docs.size(), output);
}

std::vector<ScoredPair> load_predictions(const std::string& path, const RunConfig& cfg) {
  const auto meta = read_meta(path);
  if (meta.contains("vocab_hash")) {
    const auto vocab_path = path_or(cfg.vocab, cfg, "vocab.txt");
    if (!cfg.vocab.empty() || fs::exists(vocab_path)) {
      const auto expected = Vocabulary::load(vocab_path).hash();
      if (meta["vocab_hash"] != expected) {
        throw std::runtime_error(path + " was generated with a different vocabulary than " + vocab_path);
      }
    }
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<ScoredPair> pairs;
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = json::parse(line);
      ScoredPair p{tokenize_chars(j.at("generated").get<std::string>()), tokenize_chars(j.at("headline").get<std::string>()), {}};
      if (j.contains("topic") && !j["topic"].is_null()) p.topic = j["topic"].get<int>();
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw std::runtime_error(path + " line " + std::to_string(no) + ": " + e.what());
    }
  }
  if (pairs.empty()) throw std::runtime_error(path + " has no predictions");
  return pairs;
}

void cmd_evaluate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto predictions = path_or(cfg.predictions, cfg, "topic.predictions.jsonl");
  const auto report = evaluate(load_predictions(predictions, cfg));
  json out = {{"config_hash", cfg.hash()}, {"predictions", predictions}, {"report", report_to_json(report)}};
  if (ctx.baseline_predictions.empty()) {
    std::cout << format_report(report, ctx.system == "baseline" ? "Baseline" : "TopicNHG");
  } else {
    auto base_pairs = load_predictions(ctx.baseline_predictions, cfg);
    const auto topic_pairs = load_predictions(predictions, cfg);
    if (base_pairs.size() != topic_pairs.size()) {
      throw std::runtime_error("prediction files cover different numbers of pairs");
    }
    // per-topic rows are keyed by the topic system's routing
    for (std::size_t i = 0; i < base_pairs.size(); ++i) {
      if (base_pairs[i].reference != topic_pairs[i].reference) {
        throw std::runtime_error("prediction files disagree at pair " + std::to_string(i));
      }
      base_pairs[i].topic = topic_pairs[i].topic;
    }
    const auto base = evaluate(base_pairs);
    std::cout << format_comparison(base, report);
    out["baseline_predictions"] = ctx.baseline_predictions;
    out["baseline_report"] = report_to_json(base);
  }
  if (!cfg.report.empty()) {
    ensure_parent(cfg.report);
    std::ofstream f(cfg.report, std::ios::binary);
    f << out.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + cfg.report);
  }
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("tnhg");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%l] %v");
  if (const char* level = std::getenv("TNHG_LOG_LEVEL")) spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();

  CLI::App app{"Topic-sensitive neural headline generation"};
  app.require_subcommand(1);
  app.fallthrough();

  Context ctx;
  std::string config_file;
  std::map<std::string, std::string> overrides;
  app.add_option("--config", config_file, "key = value settings file (flags override it)");
  for (const auto& key : RunConfig::keys()) {
    if (key == "topic") continue;
    app.add_option(flag_name(key), overrides[key], RunConfig::help(key));
  }

  using Handler = void (*)(const Context&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands = {
      {"synth", "write the synthetic topic-pattern corpus", cmd_synth},
      {"prepare", "split a corpus and build the vocabulary", cmd_prepare},
      {"lda-fit", "fit the LDA topic model", cmd_lda_fit},
      {"lda-assign", "write hard topic labels into a corpus", cmd_lda_assign},
      {"train-baseline", "train the shared headline generator", cmd_train_baseline},
      {"fork", "copy the baseline into one replica per topic", cmd_fork},
      {"train-topic", "fine-tune one replica (all when --topic is omitted)", cmd_train_topic},
      {"generate", "generate headlines as JSONL", cmd_generate},
      {"evaluate", "ROUGE report for a predictions file", cmd_evaluate},
  };
  std::map<CLI::App*, Handler> handlers;
  std::string topic_flag;
  for (const auto& [name, description, handler] : commands) {
    auto* sub = app.add_subcommand(name, description);
    handlers[sub] = handler;
    if (std::string(name) == "train-topic") sub->add_option("--topic", topic_flag, RunConfig::help("topic"));
    if (std::string(name) == "generate" || std::string(name) == "evaluate") {
      sub->add_option("--system", ctx.system, "topic or baseline")->check(CLI::IsMember({"topic", "baseline"}));
    }
    if (std::string(name) == "evaluate") {
      sub->add_option("--baseline-predictions", ctx.baseline_predictions, "second predictions file for a side-by-side table");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    if (!config_file.empty()) ctx.cfg.merge_file(config_file);
    for (const auto& key : RunConfig::keys()) {
      if (key != "topic" && app.count(flag_name(key)) > 0) ctx.cfg.set(key, overrides[key]);
    }
    if (!topic_flag.empty()) ctx.cfg.set("topic", topic_flag);
    log_run(ctx.cfg, chosen->get_name());
    handlers.at(chosen)(ctx);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    std::cerr << chosen->help();
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
