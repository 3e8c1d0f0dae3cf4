#include "tnhg/nhg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tnhg {

using nn::Matrix;
using nn::Vector;
using nn::Index;

nlohmann::json NhgConfig::to_json() const {
  return {{"vocab_size", vocab_size},     {"embed_size", embed_size},       {"hidden_size", hidden_size},
          {"decoder_size", decoder_size}, {"attention_size", attention_size}, {"use_attention", use_attention},
          {"use_bias", use_bias},         {"vocab_hash", vocab_hash}};
}

NhgConfig NhgConfig::from_json(const nlohmann::json& j) {
  NhgConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.embed_size = j.at("embed_size").get<int>();
  c.hidden_size = j.at("hidden_size").get<int>();
  c.decoder_size = j.at("decoder_size").get<int>();
  c.attention_size = j.at("attention_size").get<int>();
  c.use_attention = j.at("use_attention").get<bool>();
  c.use_bias = j.at("use_bias").get<bool>();
  c.vocab_hash = j.at("vocab_hash").get<std::string>();
  c.validate();
  return c;
}

void NhgConfig::validate() const {
  if (vocab_size < kReservedCount) throw std::invalid_argument("vocab_size must cover the reserved ids");
  if (embed_size < 1 || hidden_size < 1 || decoder_size < 1 || attention_size < 0) {
    throw std::invalid_argument("model sizes must be positive");
  }
}

Example make_example(const Vocabulary& vocab, const Document& doc, std::size_t id) {
  Example ex;
  ex.source = encode(vocab, doc.text);
  ex.target = encode(vocab, doc.headline);
  ex.target.push_back(kEos);
  ex.id = id;
  return ex;
}

NhgModel::NhgModel(const NhgConfig& config, std::uint64_t seed, double init_scale) : config_(config) {
  config_.validate();
  const Index V = config_.vocab_size;
  const Index E = config_.embed_size;
  const Index H = config_.hidden_size;
  const Index D = config_.decoder_size;
  const Index A = config_.effective_attention_size();

  embedding_ = std::make_shared<nn::Parameter>("embedding", V, E);
  enc_fwd_ = nn::GruCell("encoder.fwd", E, H, config_.use_bias);
  enc_bwd_ = nn::GruCell("encoder.bwd", E, H, config_.use_bias);
  init_w_ = nn::Parameter("decoder.init.P", D, 2 * H);
  init_b_ = nn::Parameter("decoder.init.b", D, 1);
  attn_ = nn::AttentionLayer("attention", D, 2 * H, E, A);
  dec_ = nn::GruCell("decoder.gru", 2 * H + E, D, config_.use_bias);
  out_w_ = nn::Parameter("output.W", V, D);
  out_b_ = nn::Parameter("output.b", V, 1);

  Rng rng(seed);
  nn::init_uniform(*embedding_, init_scale, rng);
  embedding_->value.row(kPad).setZero();
  enc_fwd_.init(rng, init_scale);
  enc_bwd_.init(rng, init_scale);
  nn::init_uniform(init_w_, init_scale, rng);
  attn_.init(rng, init_scale);
  dec_.init(rng, init_scale);
  nn::init_uniform(out_w_, init_scale, rng);
}

NhgModel::NhgModel(const NhgModel& other)
    : config_(other.config_),
      embedding_(other.embedding_ ? std::make_shared<nn::Parameter>(*other.embedding_) : nullptr),
      enc_fwd_(other.enc_fwd_),
      enc_bwd_(other.enc_bwd_),
      init_w_(other.init_w_),
      init_b_(other.init_b_),
      attn_(other.attn_),
      dec_(other.dec_),
      out_w_(other.out_w_),
      out_b_(other.out_b_) {}

NhgModel& NhgModel::operator=(const NhgModel& other) {
  if (this != &other) {
    NhgModel copy(other);
    *this = std::move(copy);
  }
  return *this;
}

nn::ParameterList NhgModel::parameters(bool include_embedding) {
  nn::ParameterList out;
  if (include_embedding) out.push_back(embedding_.get());
  for (auto* p : enc_fwd_.parameters()) out.push_back(p);
  for (auto* p : enc_bwd_.parameters()) out.push_back(p);
  out.push_back(&init_w_);
  out.push_back(&init_b_);
  if (config_.use_attention) {
    for (auto* p : attn_.parameters()) out.push_back(p);
  }
  for (auto* p : dec_.parameters()) out.push_back(p);
  out.push_back(&out_w_);
  out.push_back(&out_b_);
  return out;
}

std::vector<const nn::Parameter*> NhgModel::parameters(bool include_embedding) const {
  auto mut = const_cast<NhgModel*>(this)->parameters(include_embedding);
  return {mut.begin(), mut.end()};
}

void NhgModel::set_zero() {
  for (auto* p : parameters()) p->value.setZero();
  for (auto* p : {&enc_fwd_.b_update, &enc_fwd_.b_reset, &enc_fwd_.b_candidate, &enc_bwd_.b_update,
                  &enc_bwd_.b_reset, &enc_bwd_.b_candidate, &dec_.b_update, &dec_.b_reset, &dec_.b_candidate}) {
    p->value.setZero();
  }
  for (auto* p : attn_.parameters()) p->value.setZero();
}

void NhgModel::share_embedding(std::shared_ptr<nn::Parameter> table) {
  if (!table || table->value.rows() != config_.vocab_size || table->value.cols() != config_.embed_size) {
    throw std::invalid_argument("shared embedding table has the wrong shape");
  }
  embedding_ = std::move(table);
}

void NhgModel::check_ids(std::span<const int> ids, const char* what) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= config_.vocab_size) {
      throw std::out_of_range(std::string(what) + ": token id " + std::to_string(ids[i]) + " at position " +
                              std::to_string(i) + " outside vocabulary of size " +
                              std::to_string(config_.vocab_size));
    }
  }
}

SourceEncoding NhgModel::encode(std::span<const int> source, bool keep_cache) const {
  if (source.empty()) throw std::invalid_argument("encode: empty source sequence");
  check_ids(source, "encode");
  SourceEncoding enc;
  enc.embedded.reserve(source.size());
  for (int id : source) enc.embedded.push_back(embed(id));
  enc.states = nn::encode_bidirectional(enc_fwd_, enc_bwd_, enc.embedded, keep_cache);
  nn::debug_require_finite(enc.states.h, "encoder outputs");
  if (config_.use_attention) enc.keys = nn::attention_keys(attn_, enc.states.h);
  return enc;
}

Vector NhgModel::initial_state(const SourceEncoding& enc) const {
  Vector a = init_w_.value * enc.states.v + init_b_.value.col(0);
  return a.array().tanh();
}

StepOutput NhgModel::decode_step(const Vector& state, int prev_token, const SourceEncoding& enc) const {
  if (prev_token < 0 || prev_token >= config_.vocab_size) {
    throw std::out_of_range("decode_step: token id " + std::to_string(prev_token) + " outside vocabulary");
  }
  StepOutput out;
  const Vector prev = embed(prev_token);
  Vector context;
  if (config_.use_attention) {
    auto att = nn::attend(attn_, enc.states.h, enc.keys, state, prev);
    context = std::move(att.context);
    out.attention = std::move(att.weights);
  } else {
    context = enc.states.v;
  }
  out.state = nn::gru_step(dec_, nn::concat(context, prev), state);
  out.logits = out_w_.value * out.state + out_b_.value.col(0);
  nn::debug_require_finite(out.logits, "decoder logits");
  return out;
}

std::vector<double> NhgModel::step_losses(std::span<const int> source, std::span<const int> target) const {
  if (target.empty()) throw std::invalid_argument("sequence_nll: empty target");
  check_ids(target, "sequence_nll");
  const auto enc = encode(source);
  Vector state = initial_state(enc);
  std::vector<double> losses;
  losses.reserve(target.size());
  int prev = kBos;
  for (int y : target) {
    auto step = decode_step(state, prev, enc);
    losses.push_back(nn::cross_entropy(nn::softmax(step.logits), y));
    state = std::move(step.state);
    prev = y;
  }
  return losses;
}

double NhgModel::sequence_nll(std::span<const int> source, std::span<const int> target) const {
  double total = 0.0;
  for (double l : step_losses(source, target)) total += l;
  return total;
}

double NhgModel::accumulate_gradients(std::span<const int> source, std::span<const int> target, double scale,
                                      bool embedding_grad) {
  if (target.empty()) throw std::invalid_argument("sequence_nll: empty target");
  check_ids(target, "sequence_nll");
  const Index E = config_.embed_size;
  const Index H2 = 2 * config_.hidden_size;
  const std::size_t n = target.size();

  auto enc = encode(source, /*keep_cache=*/true);
  const Vector s0 = initial_state(enc);

  struct StepRecord {
    int prev;
    nn::AttentionCache attention;
    nn::GruStepCache gru;
    Vector probs;
  };
  std::vector<StepRecord> steps(n);
  double loss = 0.0;
  Vector state = s0;
  for (std::size_t t = 0; t < n; ++t) {
    auto& rec = steps[t];
    rec.prev = t == 0 ? kBos : target[t - 1];
    const Vector prev = embed(rec.prev);
    Vector context = config_.use_attention
                         ? nn::attend(attn_, enc.states.h, enc.keys, state, prev, &rec.attention).context
                         : enc.states.v;
    state = nn::gru_step(dec_, nn::concat(context, prev), state, &rec.gru);
    const Vector logits = out_w_.value * state + out_b_.value.col(0);
    rec.probs = nn::softmax(logits);
    loss += nn::cross_entropy(rec.probs, target[t]);
  }
  if (!std::isfinite(loss)) return loss;

  Matrix& emb_grad = embedding_->grad;
  nn::AttentionGrad att_grad;
  Vector dv = Vector::Zero(H2);
  Vector carry = Vector::Zero(config_.decoder_size);
  for (std::size_t t = n; t-- > 0;) {
    const auto& rec = steps[t];
    const Vector dlogits = scale * nn::cross_entropy_logit_grad(rec.probs, target[t]);
    out_w_.grad.noalias() += dlogits * rec.gru.h.transpose();
    out_b_.grad.col(0) += dlogits;
    Vector ds = carry;
    ds.noalias() += out_w_.value.transpose() * dlogits;

    auto g = nn::gru_step_backward(dec_, rec.gru, ds);
    Vector dprev = g.dx.tail(E);
    const Vector dcontext = g.dx.head(H2);
    carry = std::move(g.dh_prev);
    if (config_.use_attention) {
      nn::attend_backward(attn_, enc.states.h, rec.attention, dcontext, att_grad);
      carry += att_grad.dstate;
      dprev += att_grad.dprev_embedding;
    } else {
      dv += dcontext;
    }
    if (embedding_grad) emb_grad.row(rec.prev) += dprev.transpose();
  }

  const Vector da0 = carry.array() * (1.0 - s0.array().square());
  init_w_.grad.noalias() += da0 * enc.states.v.transpose();
  init_b_.grad.col(0) += da0;
  dv.noalias() += init_w_.value.transpose() * da0;

  Matrix dh = att_grad.dh.size() ? att_grad.dh : Matrix::Zero(H2, enc.states.length());
  if (config_.use_attention && att_grad.dkeys.size()) nn::attention_keys_backward(attn_, enc.states.h, att_grad.dkeys, dh);
  const auto dxs = nn::encode_bidirectional_backward(enc_fwd_, enc_bwd_, enc.states, dh, dv);
  if (embedding_grad) {
    for (std::size_t i = 0; i < source.size(); ++i) emb_grad.row(source[i]) += dxs[i].transpose();
    emb_grad.row(kPad).setZero();
  }
  return loss;
}

Ids NhgModel::generate_greedy(std::span<const int> source, const DecodeConfig& cfg,
                              std::vector<Vector>* attention_trace) const {
  const auto enc = encode(source);
  Vector state = initial_state(enc);
  Ids out;
  int prev = kBos;
  for (int t = 0; t < cfg.max_len; ++t) {
    auto step = decode_step(state, prev, enc);
    if (attention_trace) attention_trace->push_back(step.attention);
    const Vector logp = nn::log_softmax(step.logits);
    Index best = 0;
    for (Index i = 1; i < logp.size(); ++i) {
      if (logp[i] > logp[best]) best = i;
    }
    if (best == kEos) break;
    out.push_back(static_cast<int>(best));
    state = std::move(step.state);
    prev = static_cast<int>(best);
  }
  return out;
}

namespace {

struct Candidate {
  double score;
  std::size_t parent;
  int token;
};

// Higher score first; equal scores by lexicographic ids.
bool better(double score_a, const Ids& ids_a, double score_b, const Ids& ids_b) {
  if (score_a != score_b) return score_a > score_b;
  return ids_a < ids_b;
}

}  // namespace

BeamHypothesis NhgModel::generate_beam(std::span<const int> source, const DecodeConfig& cfg) const {
  if (cfg.beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
  const auto enc = encode(source);

  struct Live {
    Ids ids;
    double score;
    Vector state;
  };
  std::vector<Live> beam{{{}, 0.0, initial_state(enc)}};
  std::vector<BeamHypothesis> finished;
  const auto width = static_cast<std::size_t>(cfg.beam_width);

  auto final_score = [&](const BeamHypothesis& h) {
    if (!cfg.length_norm) return h.score;
    return h.score / static_cast<double>(h.ids.size() + (h.finished ? 1 : 0));
  };

  for (int t = 0; t < cfg.max_len && !beam.empty(); ++t) {
    std::vector<Candidate> cands;
    std::vector<Vector> next_states;
    next_states.reserve(beam.size());
    for (std::size_t b = 0; b < beam.size(); ++b) {
      const int prev = beam[b].ids.empty() ? kBos : beam[b].ids.back();
      auto step = decode_step(beam[b].state, prev, enc);
      const Vector logp = nn::log_softmax(step.logits);
      for (Index v = 0; v < logp.size(); ++v) cands.push_back({beam[b].score + logp[v], b, static_cast<int>(v)});
      next_states.push_back(std::move(step.state));
    }
    auto ids_of = [&](const Candidate& c) {
      Ids ids = beam[c.parent].ids;
      ids.push_back(c.token);
      return ids;
    };
    // equal scores fall back to comparing the full id sequences
    const std::size_t keep = std::min(width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(keep), cands.end(),
                      [&](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        const Ids ia = ids_of(a), ib = ids_of(b);
                        return ia < ib;
                      });
    std::vector<Live> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      if (c.token == kEos) {
        finished.push_back({beam[c.parent].ids, c.score, true});
      } else {
        next.push_back({ids_of(c), c.score, next_states[c.parent]});
      }
    }
    beam = std::move(next);
    if (!cfg.length_norm && !finished.empty() && !beam.empty()) {
      double best_finished = finished.front().score;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.score);
      double best_live = beam.front().score;
      for (const auto& l : beam) best_live = std::max(best_live, l.score);
      if (best_finished >= best_live) break;
    }
  }

  std::vector<BeamHypothesis> pool = finished;
  if (pool.empty()) {
    for (auto& l : beam) pool.push_back({l.ids, l.score, false});
  }
  if (pool.empty()) return {};
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (better(final_score(pool[i]), pool[i].ids, final_score(pool[best]), pool[best].ids)) best = i;
  }
  return pool[best];
}

Ids NhgModel::generate(std::span<const int> source, const DecodeConfig& cfg) const {
  if (cfg.beam_width <= 1) return generate_greedy(source, cfg);
  return generate_beam(source, cfg).ids;
}

std::string NhgModel::checkpoint_bytes(bool include_embedding, const nlohmann::json& extra) const {
  nlohmann::json header = extra;
  header["kind"] = "nhg";
  header["config"] = config_.to_json();
  header["has_embedding"] = include_embedding;
  return nn::serialize_checkpoint(header, parameters(include_embedding));
}

void NhgModel::save(const std::string& path, bool include_embedding, const nlohmann::json& extra) const {
  nn::write_file(path, checkpoint_bytes(include_embedding, extra));
}

NhgModel NhgModel::from_checkpoint(const nn::Checkpoint& ckpt, std::shared_ptr<nn::Parameter> embedding) {
  if (ckpt.header.value("kind", "") != "nhg") throw std::runtime_error("checkpoint is not an NHG model");
  NhgModel m(NhgConfig::from_json(ckpt.header.at("config")), 0);
  m.set_zero();
  const bool has_embedding = ckpt.header.value("has_embedding", true);
  if (!has_embedding) {
    if (!embedding) throw std::runtime_error("checkpoint has no embedding table and none was supplied");
    m.share_embedding(std::move(embedding));
  }
  nn::restore_parameters(ckpt, m.parameters(has_embedding));
  return m;
}

NhgModel NhgModel::load(const std::string& path, std::shared_ptr<nn::Parameter> embedding) {
  return from_checkpoint(nn::parse_checkpoint(nn::read_file(path)), std::move(embedding));
}

double train_step(NhgModel& model, std::span<const Example> batch, const nn::Sgd& opt, bool train_embedding) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const auto params = model.parameters(train_embedding);
  nn::zero_grads(params);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    const double nll = model.accumulate_gradients(ex.source, ex.target, scale, train_embedding);
    if (!std::isfinite(nll)) {
      std::ostringstream msg;
      msg << "train_step: non-finite loss on example " << ex.id << " (source length " << ex.source.size()
          << ", target length " << ex.target.size() << ")";
      nn::zero_grads(params);
      throw nn::NonFiniteError(msg.str());
    }
    total += nll;
  }
  const double mean = total * scale;
  opt.step(params);
  return mean;
}

}  // namespace tnhg
