#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tnhg/random.hpp"

namespace tnhg::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Thrown when a value that must be finite is not.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A named trainable tensor and its gradient accumulator (same shape).
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Index rows, Index cols)
      : name(std::move(name)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(); }
  Index size() const { return value.size(); }
};

/// Non-owning view of the parameters a model exposes to optimizers and checks.
using ParameterList = std::vector<Parameter*>;

/// Fills with uniform(-scale, scale) in row-major order.
void init_uniform(Parameter& p, double scale, Rng& rng);

Vector sigmoid(const Vector& v);
/// Max-subtracted softmax. Throws on an empty vector.
Vector softmax(const Vector& v);
/// log(softmax(v)), computed stably.
Vector log_softmax(const Vector& v);

inline constexpr double kProbFloor = 1e-12;

/// -log(probs[target] + 1e-12).
double cross_entropy(const Vector& probs, Index target);

/// Gradient of cross_entropy(softmax(logits), target) w.r.t. logits, given
/// probs = softmax(logits). Exact, including the probability floor.
Vector cross_entropy_logit_grad(const Vector& probs, Index target);

Vector concat(const Vector& a, const Vector& b);

/// Throws NonFiniteError naming `where` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view where);

#ifdef NDEBUG
inline void debug_require_finite(const Matrix&, std::string_view) {}
#else
inline void debug_require_finite(const Matrix& m, std::string_view where) { require_finite(m, where); }
#endif

void zero_grads(const ParameterList& params);
double global_grad_norm(const ParameterList& params);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(const ParameterList& params, double max_norm);

/// Plain SGD with global-norm gradient clipping.
class Sgd {
 public:
  Sgd(double learning_rate, double clip_norm);

  double learning_rate() const { return learning_rate_; }
  double clip_norm() const { return clip_norm_; }

  /// Clips, applies value -= lr * grad, zeroes grads. Returns the pre-clip norm.
  double step(const ParameterList& params) const;

 private:
  double learning_rate_;
  double clip_norm_;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  /// Parameters larger than this are sampled instead of checked exhaustively.
  Index sample_threshold = 10000;
  double sample_fraction = 0.01;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  std::string worst_parameter;
  Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool passed = false;
};

/// Compares analytic gradients against central differences.
///
/// `loss` evaluates the scalar objective from the current parameter values
/// without touching gradients. `backward` must leave d(loss)/d(param) in every
/// parameter's grad (grad_check zeroes grads before calling it). Relative error
/// per entry is |a - n| / max(1e-8, |a| + |n|).
GradCheckReport grad_check(const ParameterList& params, const std::function<double()>& loss,
                           const std::function<void()>& backward, const GradCheckOptions& options = {});

}  // namespace tnhg::nn
