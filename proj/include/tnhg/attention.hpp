#pragma once

#include <string>
#include <vector>

#include "tnhg/nn_core.hpp"

namespace tnhg::nn {

/// Additive attention over encoder columns:
///   e_i = w^T tanh(W_a s + U_a h_i + V_a y)
///   weights = softmax(e), context = sum_i weights_i h_i
class AttentionLayer {
 public:
  AttentionLayer() = default;
  AttentionLayer(const std::string& prefix, Index state_size, Index encoder_size, Index embed_size,
                 Index attention_size);

  Index state_size() const { return w_state.value.cols(); }
  Index encoder_size() const { return w_keys.value.cols(); }
  Index embed_size() const { return w_prev.value.cols(); }
  Index attention_size() const { return w_state.value.rows(); }

  ParameterList parameters();
  std::vector<const Parameter*> parameters() const;
  void init(Rng& rng, double scale);

  Parameter w_state;  // W_a, A x D_dec
  Parameter w_keys;   // U_a, A x 2H
  Parameter w_prev;   // V_a, A x E
  Parameter score;    // w, A x 1
};

/// U_a h for every encoder column (A x L). Independent of the decoder step, so
/// callers compute it once per source sequence.
Matrix attention_keys(const AttentionLayer& layer, const Matrix& h);

struct AttentionCache {
  Vector state;
  Vector prev_embedding;
  Matrix activations;  // tanh(...) per column, A x L
  Vector weights;
};

struct AttentionResult {
  Vector context;
  Vector weights;
};

AttentionResult attend(const AttentionLayer& layer, const Matrix& h, const Matrix& keys, const Vector& state,
                       const Vector& prev_embedding, AttentionCache* cache = nullptr);

/// Convenience form that computes the keys itself.
AttentionResult attend(const AttentionLayer& layer, const Matrix& h, const Vector& state,
                       const Vector& prev_embedding);

/// Gradients flowing out of one attend call. dh and dkeys are accumulated
/// into (they are shared across decoder steps); dstate and dprev_embedding are
/// overwritten.
struct AttentionGrad {
  Matrix dh;
  Matrix dkeys;
  Vector dstate;
  Vector dprev_embedding;
};

void attend_backward(AttentionLayer& layer, const Matrix& h, const AttentionCache& cache, const Vector& dcontext,
                     AttentionGrad& grad);

/// Backward through attention_keys: accumulates dU_a and adds into dh.
void attention_keys_backward(AttentionLayer& layer, const Matrix& h, const Matrix& dkeys, Matrix& dh);

}  // namespace tnhg::nn
