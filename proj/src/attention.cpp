#include "tnhg/attention.hpp"

namespace tnhg::nn {

AttentionLayer::AttentionLayer(const std::string& prefix, Index state_size, Index encoder_size, Index embed_size,
                               Index attention_size)
    : w_state(prefix + ".W_a", attention_size, state_size),
      w_keys(prefix + ".U_a", attention_size, encoder_size),
      w_prev(prefix + ".V_a", attention_size, embed_size),
      score(prefix + ".w", attention_size, 1) {
  if (attention_size < 1) throw std::invalid_argument("attention size must be >= 1");
}

ParameterList AttentionLayer::parameters() { return {&w_state, &w_keys, &w_prev, &score}; }

std::vector<const Parameter*> AttentionLayer::parameters() const { return {&w_state, &w_keys, &w_prev, &score}; }

void AttentionLayer::init(Rng& rng, double scale) {
  for (auto* p : parameters()) init_uniform(*p, scale, rng);
}

Matrix attention_keys(const AttentionLayer& layer, const Matrix& h) {
  if (h.rows() != layer.encoder_size()) throw std::invalid_argument("attention: encoder width mismatch");
  return layer.w_keys.value * h;
}

AttentionResult attend(const AttentionLayer& layer, const Matrix& h, const Matrix& keys, const Vector& state,
                       const Vector& prev_embedding, AttentionCache* cache) {
  if (h.cols() < 1) throw std::invalid_argument("attention: no encoder positions");
  if (state.size() != layer.state_size() || prev_embedding.size() != layer.embed_size() ||
      h.rows() != layer.encoder_size() || keys.rows() != layer.attention_size() || keys.cols() != h.cols()) {
    throw std::invalid_argument("attention: shape mismatch");
  }
  Vector query(layer.attention_size());
  query.noalias() = layer.w_state.value * state;
  query.noalias() += layer.w_prev.value * prev_embedding;
  Matrix act = (keys.colwise() + query).array().tanh();
  const Vector scores = act.transpose() * layer.score.value.col(0);
  AttentionResult out;
  out.weights = softmax(scores);
  out.context.noalias() = h * out.weights;
  if (cache) {
    cache->state = state;
    cache->prev_embedding = prev_embedding;
    cache->activations = std::move(act);
    cache->weights = out.weights;
  }
  return out;
}

AttentionResult attend(const AttentionLayer& layer, const Matrix& h, const Vector& state,
                       const Vector& prev_embedding) {
  return attend(layer, h, attention_keys(layer, h), state, prev_embedding);
}

void attend_backward(AttentionLayer& layer, const Matrix& h, const AttentionCache& cache, const Vector& dcontext,
                     AttentionGrad& grad) {
  const Vector& a = cache.weights;
  if (grad.dh.size() == 0) grad.dh = Matrix::Zero(h.rows(), h.cols());
  if (grad.dkeys.size() == 0) grad.dkeys = Matrix::Zero(layer.attention_size(), h.cols());

  grad.dh.noalias() += dcontext * a.transpose();
  const Vector da = h.transpose() * dcontext;
  const Vector dscores = a.cwiseProduct((da.array() - a.dot(da)).matrix());

  layer.score.grad.col(0).noalias() += cache.activations * dscores;
  const Matrix dpre = (layer.score.value.col(0) * dscores.transpose()).array() *
                      (1.0 - cache.activations.array().square());
  grad.dkeys += dpre;
  const Vector dquery = dpre.rowwise().sum();
  layer.w_state.grad.noalias() += dquery * cache.state.transpose();
  layer.w_prev.grad.noalias() += dquery * cache.prev_embedding.transpose();
  grad.dstate.noalias() = layer.w_state.value.transpose() * dquery;
  grad.dprev_embedding.noalias() = layer.w_prev.value.transpose() * dquery;
}

void attention_keys_backward(AttentionLayer& layer, const Matrix& h, const Matrix& dkeys, Matrix& dh) {
  layer.w_keys.grad.noalias() += dkeys * h.transpose();
  dh.noalias() += layer.w_keys.value.transpose() * dkeys;
}

}  // namespace tnhg::nn
