#include "tnhg/gru.hpp"

#include <algorithm>

namespace tnhg::nn {

GruCell::GruCell(const std::string& prefix, Index input_size, Index hidden_size, bool use_bias)
    : w_update(prefix + ".W_z", hidden_size, input_size),
      u_update(prefix + ".U_z", hidden_size, hidden_size),
      b_update(prefix + ".b_z", hidden_size, 1),
      w_reset(prefix + ".W_r", hidden_size, input_size),
      u_reset(prefix + ".U_r", hidden_size, hidden_size),
      b_reset(prefix + ".b_r", hidden_size, 1),
      w_candidate(prefix + ".W_h", hidden_size, input_size),
      u_candidate(prefix + ".U_h", hidden_size, hidden_size),
      b_candidate(prefix + ".b_h", hidden_size, 1),
      use_bias_(use_bias) {
  if (input_size < 1 || hidden_size < 1) throw std::invalid_argument("GRU sizes must be positive");
}

ParameterList GruCell::parameters() {
  ParameterList out = {&w_update, &u_update, &w_reset, &u_reset, &w_candidate, &u_candidate};
  if (use_bias_) out.insert(out.end(), {&b_update, &b_reset, &b_candidate});
  return out;
}

std::vector<const Parameter*> GruCell::parameters() const {
  auto mut = const_cast<GruCell*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

void GruCell::init(Rng& rng, double scale) {
  for (auto* p : {&w_update, &u_update, &w_reset, &u_reset, &w_candidate, &u_candidate}) init_uniform(*p, scale, rng);
  for (auto* p : {&b_update, &b_reset, &b_candidate}) p->value.setZero();
}

Vector gru_step(const GruCell& cell, const Vector& x, const Vector& h_prev, GruStepCache* cache) {
  if (x.size() != cell.input_size() || h_prev.size() != cell.hidden_size()) {
    throw std::invalid_argument("gru_step: expected input " + std::to_string(cell.input_size()) + " and state " +
                                std::to_string(cell.hidden_size()) + ", got " + std::to_string(x.size()) + " and " +
                                std::to_string(h_prev.size()));
  }
  Vector a(cell.hidden_size());
  a.noalias() = cell.w_update.value * x;
  a.noalias() += cell.u_update.value * h_prev;
  a += cell.b_update.value.col(0);
  Vector z = sigmoid(a);

  a.noalias() = cell.w_reset.value * x;
  a.noalias() += cell.u_reset.value * h_prev;
  a += cell.b_reset.value.col(0);
  Vector r = sigmoid(a);

  const Vector gated = r.cwiseProduct(h_prev);
  a.noalias() = cell.w_candidate.value * x;
  a.noalias() += cell.u_candidate.value * gated;
  a += cell.b_candidate.value.col(0);
  Vector c = a.array().tanh();

  Vector h = h_prev + z.cwiseProduct(c - h_prev);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->update = std::move(z);
    cache->reset = std::move(r);
    cache->candidate = std::move(c);
    cache->h = h;
  }
  return h;
}

GruStepGrad gru_step_backward(GruCell& cell, const GruStepCache& c, const Vector& dh) {
  const Vector& z = c.update;
  const Vector& r = c.reset;
  GruStepGrad g;

  const Vector dz = dh.cwiseProduct(c.candidate - c.h_prev);
  const Vector dcand = dh.cwiseProduct(z);
  g.dh_prev = dh - dh.cwiseProduct(z);

  const Vector da_cand = dcand.array() * (1.0 - c.candidate.array().square());
  const Vector gated = r.cwiseProduct(c.h_prev);
  cell.w_candidate.grad.noalias() += da_cand * c.x.transpose();
  cell.u_candidate.grad.noalias() += da_cand * gated.transpose();
  if (cell.use_bias()) cell.b_candidate.grad.col(0) += da_cand;
  g.dx.noalias() = cell.w_candidate.value.transpose() * da_cand;
  const Vector dgated = cell.u_candidate.value.transpose() * da_cand;
  const Vector dr = dgated.cwiseProduct(c.h_prev);
  g.dh_prev += dgated.cwiseProduct(r);

  const Vector da_r = dr.array() * r.array() * (1.0 - r.array());
  cell.w_reset.grad.noalias() += da_r * c.x.transpose();
  cell.u_reset.grad.noalias() += da_r * c.h_prev.transpose();
  if (cell.use_bias()) cell.b_reset.grad.col(0) += da_r;
  g.dx.noalias() += cell.w_reset.value.transpose() * da_r;
  g.dh_prev.noalias() += cell.u_reset.value.transpose() * da_r;

  const Vector da_z = dz.array() * z.array() * (1.0 - z.array());
  cell.w_update.grad.noalias() += da_z * c.x.transpose();
  cell.u_update.grad.noalias() += da_z * c.h_prev.transpose();
  if (cell.use_bias()) cell.b_update.grad.col(0) += da_z;
  g.dx.noalias() += cell.w_update.value.transpose() * da_z;
  g.dh_prev.noalias() += cell.u_update.value.transpose() * da_z;
  return g;
}

std::vector<Vector> run_sequence(const GruCell& cell, const std::vector<Vector>& xs, const Vector& h0,
                                 SequenceCache* cache) {
  std::vector<Vector> out;
  out.reserve(xs.size());
  if (cache) cache->steps.assign(xs.size(), {});
  Vector h = h0.size() == 0 ? Vector::Zero(cell.hidden_size()) : h0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    h = gru_step(cell, xs[t], h, cache ? &cache->steps[t] : nullptr);
    out.push_back(h);
  }
  return out;
}

SequenceGrad run_sequence_backward(GruCell& cell, const SequenceCache& cache, const std::vector<Vector>& d_outputs) {
  if (d_outputs.size() != cache.steps.size()) throw std::invalid_argument("run_sequence_backward: length mismatch");
  SequenceGrad g;
  g.dxs.resize(cache.steps.size());
  Vector carry = Vector::Zero(cell.hidden_size());
  for (std::size_t t = cache.steps.size(); t-- > 0;) {
    auto step = gru_step_backward(cell, cache.steps[t], d_outputs[t] + carry);
    g.dxs[t] = std::move(step.dx);
    carry = std::move(step.dh_prev);
  }
  g.dh0 = std::move(carry);
  return g;
}

EncoderOutputs encode_bidirectional(const GruCell& forward, const GruCell& backward, const std::vector<Vector>& xs,
                                    bool keep_cache) {
  if (xs.empty()) throw std::invalid_argument("encode_bidirectional: empty input");
  if (forward.input_size() != backward.input_size() || forward.hidden_size() != backward.hidden_size()) {
    throw std::invalid_argument("encode_bidirectional: direction cells differ in shape");
  }
  const Index H = forward.hidden_size();
  const auto L = static_cast<Index>(xs.size());
  EncoderOutputs enc;
  const auto fwd = run_sequence(forward, xs, {}, keep_cache ? &enc.forward_cache : nullptr);
  std::vector<Vector> reversed(xs.rbegin(), xs.rend());
  const auto bwd = run_sequence(backward, reversed, {}, keep_cache ? &enc.backward_cache : nullptr);
  enc.h.resize(2 * H, L);
  for (Index t = 0; t < L; ++t) {
    enc.h.col(t).head(H) = fwd[static_cast<std::size_t>(t)];
    enc.h.col(t).tail(H) = bwd[static_cast<std::size_t>(L - 1 - t)];
  }
  enc.v = mean_pool(enc.h);
  return enc;
}

std::vector<Vector> encode_bidirectional_backward(GruCell& forward, GruCell& backward, const EncoderOutputs& enc,
                                                  const Matrix& dh, const Vector& dv) {
  const Index H = forward.hidden_size();
  const Index L = enc.length();
  Matrix total = dh.size() == 0 ? Matrix::Zero(2 * H, L) : dh;
  if (dv.size() != 0) total.colwise() += dv / static_cast<double>(L);

  std::vector<Vector> d_fwd(static_cast<std::size_t>(L)), d_bwd(static_cast<std::size_t>(L));
  for (Index t = 0; t < L; ++t) {
    d_fwd[static_cast<std::size_t>(t)] = total.col(t).head(H);
    d_bwd[static_cast<std::size_t>(L - 1 - t)] = total.col(t).tail(H);
  }
  auto gf = run_sequence_backward(forward, enc.forward_cache, d_fwd);
  auto gb = run_sequence_backward(backward, enc.backward_cache, d_bwd);
  for (Index t = 0; t < L; ++t) gf.dxs[static_cast<std::size_t>(t)] += gb.dxs[static_cast<std::size_t>(L - 1 - t)];
  return std::move(gf.dxs);
}

Vector mean_pool(const std::vector<Vector>& h) {
  if (h.empty()) throw std::invalid_argument("mean_pool: empty sequence");
  Vector sum = Vector::Zero(h.front().size());
  for (const auto& v : h) {
    if (v.size() != sum.size()) throw std::invalid_argument("mean_pool: vectors differ in dimension");
    sum += v;
  }
  return sum / static_cast<double>(h.size());
}

Vector mean_pool(const Matrix& columns) {
  if (columns.cols() == 0) throw std::invalid_argument("mean_pool: empty sequence");
  return columns.rowwise().sum() / static_cast<double>(columns.cols());
}

}  // namespace tnhg::nn
