#pragma once

#include <string>
#include <vector>

#include "tnhg/nn_core.hpp"

namespace tnhg::nn {

/// Gated recurrent unit:
///   z = sigmoid(W_z x + U_z h + b_z)
///   r = sigmoid(W_r x + U_r h + b_r)
///   c = tanh(W_h x + U_h (r * h) + b_h)
///   h' = (1 - z) * h + z * c
/// Products between vectors are elementwise.
class GruCell {
 public:
  GruCell() = default;
  /// Tensors are named "<prefix>.W_z" etc.
  GruCell(const std::string& prefix, Index input_size, Index hidden_size, bool use_bias = true);

  Index input_size() const { return w_update.value.cols(); }
  Index hidden_size() const { return w_update.value.rows(); }
  bool use_bias() const { return use_bias_; }

  /// Biases are omitted when the cell is built without them.
  ParameterList parameters();
  std::vector<const Parameter*> parameters() const;

  /// Uniform(-scale, scale) weights, zero biases.
  void init(Rng& rng, double scale);

  Parameter w_update, u_update, b_update;
  Parameter w_reset, u_reset, b_reset;
  Parameter w_candidate, u_candidate, b_candidate;

 private:
  bool use_bias_ = true;
};

struct GruStepCache {
  Vector x, h_prev, update, reset, candidate, h;
};

Vector gru_step(const GruCell& cell, const Vector& x, const Vector& h_prev, GruStepCache* cache = nullptr);

struct GruStepGrad {
  Vector dx;
  Vector dh_prev;
};

/// Accumulates parameter gradients into `cell` given dL/dh for the step.
GruStepGrad gru_step_backward(GruCell& cell, const GruStepCache& cache, const Vector& dh);

struct SequenceCache {
  std::vector<GruStepCache> steps;
};

/// h_t = gru_step(x_t, h_{t-1}). An empty h0 means zeros.
std::vector<Vector> run_sequence(const GruCell& cell, const std::vector<Vector>& xs, const Vector& h0 = {},
                                 SequenceCache* cache = nullptr);

struct SequenceGrad {
  std::vector<Vector> dxs;
  Vector dh0;
};

/// Full-length BPTT. `d_outputs[t]` is dL/dh_t from outside the recurrence.
SequenceGrad run_sequence_backward(GruCell& cell, const SequenceCache& cache, const std::vector<Vector>& d_outputs);

/// Bidirectional encoder states. Column t of `h` is forward_t ++ backward_t,
/// `v` is the column mean.
struct EncoderOutputs {
  Matrix h;
  Vector v;
  SequenceCache forward_cache;
  SequenceCache backward_cache;

  Index length() const { return h.cols(); }
};

EncoderOutputs encode_bidirectional(const GruCell& forward, const GruCell& backward, const std::vector<Vector>& xs,
                                    bool keep_cache = true);

/// Backward through both directions. `dh` is 2H x L (gradient w.r.t. h) and
/// `dv` the gradient w.r.t. v; may be empty meaning zero. Returns dL/dx_t.
std::vector<Vector> encode_bidirectional_backward(GruCell& forward, GruCell& backward, const EncoderOutputs& enc,
                                                  const Matrix& dh, const Vector& dv);

Vector mean_pool(const std::vector<Vector>& h);
/// Mean of the columns.
Vector mean_pool(const Matrix& columns);

}  // namespace tnhg::nn
