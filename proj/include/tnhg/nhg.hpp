#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "tnhg/attention.hpp"
#include "tnhg/checkpoint.hpp"
#include "tnhg/corpus.hpp"
#include "tnhg/gru.hpp"
#include "tnhg/nn_core.hpp"

namespace tnhg {

struct NhgConfig {
  int vocab_size = 0;
  int embed_size = 32;
  int hidden_size = 64;
  int decoder_size = 128;
  /// 0 means decoder_size.
  int attention_size = 0;
  bool use_attention = true;
  bool use_bias = true;
  std::string vocab_hash;

  int effective_attention_size() const { return attention_size > 0 ? attention_size : decoder_size; }
  nlohmann::json to_json() const;
  static NhgConfig from_json(const nlohmann::json& j);
  void validate() const;
};

struct DecodeConfig {
  int max_len = 32;
  int beam_width = 1;
  /// Rank finished beam hypotheses by score / length instead of raw score.
  bool length_norm = false;
};

/// One training pair. `target` ends with kEos. `id` identifies the source
/// record in error messages.
struct Example {
  Ids source;
  Ids target;
  std::size_t id = 0;
};

Example make_example(const Vocabulary& vocab, const Document& doc, std::size_t id);

/// Embedded and encoded source sentence, plus precomputed attention keys.
struct SourceEncoding {
  std::vector<nn::Vector> embedded;
  nn::EncoderOutputs states;
  nn::Matrix keys;
};

struct StepOutput {
  nn::Vector logits;
  nn::Vector state;
  nn::Vector attention;  // empty when attention is disabled
};

struct BeamHypothesis {
  Ids ids;  // excludes the final EOS
  double score = 0.0;  // sum of log-probabilities, including EOS when finished
  bool finished = false;
};

/// Character-level attention encoder-decoder:
///   embedding -> bidirectional GRU encoder -> s_0 = tanh(P v + b)
///   per step: context = attend(h, s_{t-1}, Emb(y_{t-1}))
///             s_t = GRU(context ++ Emb(y_{t-1}), s_{t-1})
///             logits = W_o s_t + b_o
/// With attention disabled the context is the mean-pooled v at every step.
///
/// Copies are deep, except that models tied with share_embedding() keep
/// pointing at one embedding table.
class NhgModel {
 public:
  NhgModel() = default;
  NhgModel(const NhgConfig& config, std::uint64_t seed, double init_scale = 0.08);

  NhgModel(const NhgModel& other);
  NhgModel& operator=(const NhgModel& other);
  NhgModel(NhgModel&&) noexcept = default;
  NhgModel& operator=(NhgModel&&) noexcept = default;

  const NhgConfig& config() const { return config_; }

  /// Every trainable tensor in checkpoint order.
  nn::ParameterList parameters(bool include_embedding = true);
  std::vector<const nn::Parameter*> parameters(bool include_embedding = true) const;

  void set_zero();

  nn::Parameter& embedding() { return *embedding_; }
  const nn::Parameter& embedding() const { return *embedding_; }
  /// Make this model use `table` as its embedding (shapes must match).
  void share_embedding(std::shared_ptr<nn::Parameter> table);
  std::shared_ptr<nn::Parameter> embedding_handle() const { return embedding_; }

  nn::GruCell& encoder_forward() { return enc_fwd_; }
  nn::GruCell& encoder_backward() { return enc_bwd_; }
  nn::GruCell& decoder_cell() { return dec_; }
  nn::AttentionLayer& attention() { return attn_; }
  nn::Parameter& init_weight() { return init_w_; }
  nn::Parameter& init_bias() { return init_b_; }
  nn::Parameter& output_weight() { return out_w_; }
  nn::Parameter& output_bias() { return out_b_; }
  const nn::GruCell& encoder_forward() const { return enc_fwd_; }
  const nn::GruCell& encoder_backward() const { return enc_bwd_; }
  const nn::GruCell& decoder_cell() const { return dec_; }
  const nn::AttentionLayer& attention() const { return attn_; }
  const nn::Parameter& init_weight() const { return init_w_; }
  const nn::Parameter& init_bias() const { return init_b_; }
  const nn::Parameter& output_weight() const { return out_w_; }
  const nn::Parameter& output_bias() const { return out_b_; }

  SourceEncoding encode(std::span<const int> source, bool keep_cache = false) const;
  nn::Vector initial_state(const SourceEncoding& enc) const;
  StepOutput decode_step(const nn::Vector& state, int prev_token, const SourceEncoding& enc) const;

  /// -sum_t log p(y_t | x, y_<t), teacher forced, first step conditioned on BOS.
  double sequence_nll(std::span<const int> source, std::span<const int> target) const;
  /// Per-step cross-entropy terms of sequence_nll.
  std::vector<double> step_losses(std::span<const int> source, std::span<const int> target) const;

  /// Forward and backward for one pair; adds scale * d(nll)/d(param) into the
  /// gradient buffers. Returns the unscaled nll. With embedding_grad false the
  /// embedding table's buffer is never written (it may be shared).
  double accumulate_gradients(std::span<const int> source, std::span<const int> target, double scale = 1.0,
                              bool embedding_grad = true);

  /// Argmax decoding (lowest id on ties) until EOS or max_len. EOS is not
  /// returned. When `attention_trace` is given it receives the weights of
  /// every step.
  Ids generate_greedy(std::span<const int> source, const DecodeConfig& cfg,
                      std::vector<nn::Vector>* attention_trace = nullptr) const;

  BeamHypothesis generate_beam(std::span<const int> source, const DecodeConfig& cfg) const;

  /// Greedy when beam_width == 1, beam search otherwise.
  Ids generate(std::span<const int> source, const DecodeConfig& cfg) const;

  /// Checkpoint bytes: header = config + `extra`. The embedding tensor is
  /// left out when include_embedding is false.
  std::string checkpoint_bytes(bool include_embedding = true, const nlohmann::json& extra = nlohmann::json::object()) const;
  void save(const std::string& path, bool include_embedding = true,
            const nlohmann::json& extra = nlohmann::json::object()) const;
  /// `embedding` supplies the table when the checkpoint does not carry one.
  static NhgModel from_checkpoint(const nn::Checkpoint& ckpt, std::shared_ptr<nn::Parameter> embedding = nullptr);
  static NhgModel load(const std::string& path, std::shared_ptr<nn::Parameter> embedding = nullptr);

 private:
  void check_ids(std::span<const int> ids, const char* what) const;
  nn::Vector embed(int id) const { return embedding_->value.row(id).transpose(); }

  NhgConfig config_;
  std::shared_ptr<nn::Parameter> embedding_;
  nn::GruCell enc_fwd_;
  nn::GruCell enc_bwd_;
  nn::Parameter init_w_;
  nn::Parameter init_b_;
  nn::AttentionLayer attn_;
  nn::GruCell dec_;
  nn::Parameter out_w_;
  nn::Parameter out_b_;
};

/// Mean sequence_nll gradient over the batch, clip, one SGD step, zero grads.
/// Returns the pre-step mean loss. Throws nn::NonFiniteError on a non-finite
/// loss. The embedding is left untouched when train_embedding is false.
double train_step(NhgModel& model, std::span<const Example> batch, const nn::Sgd& opt,
                  bool train_embedding = true);

}  // namespace tnhg
