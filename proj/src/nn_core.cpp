#include "tnhg/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tnhg::nn {

void init_uniform(Parameter& p, double scale, Rng& rng) {
  for (Index r = 0; r < p.value.rows(); ++r) {
    for (Index c = 0; c < p.value.cols(); ++c) p.value(r, c) = uniform(rng, -scale, scale);
  }
}

Vector sigmoid(const Vector& v) {
  // branch on sign so exp never overflows
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (x >= 0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

Vector softmax(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("softmax of an empty vector");
  Vector e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

Vector log_softmax(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("log_softmax of an empty vector");
  const double m = v.maxCoeff();
  const double lse = m + std::log((v.array() - m).exp().sum());
  return v.array() - lse;
}

double cross_entropy(const Vector& probs, Index target) {
  if (target < 0 || target >= probs.size()) {
    throw std::out_of_range("cross_entropy target " + std::to_string(target) + " out of range");
  }
  return -std::log(probs[target] + kProbFloor);
}

Vector cross_entropy_logit_grad(const Vector& probs, Index target) {
  // d/dlogit_j of -log(p_t + f) = (p_t / (p_t + f)) * (p_j - [j == t])
  const double scale = probs[target] / (probs[target] + kProbFloor);
  Vector g = probs * scale;
  g[target] -= scale;
  return g;
}

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out << a, b;
  return out;
}

void require_finite(const Matrix& m, std::string_view where) {
  if (!m.allFinite()) throw NonFiniteError("non-finite value in " + std::string(where));
}

void zero_grads(const ParameterList& params) {
  for (auto* p : params) p->zero_grad();
}

double global_grad_norm(const ParameterList& params) {
  double sq = 0.0;
  for (const auto* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto* p : params) p->grad *= scale;
  }
  return norm;
}

Sgd::Sgd(double learning_rate, double clip_norm) : learning_rate_(learning_rate), clip_norm_(clip_norm) {
  if (learning_rate < 0.0) throw std::invalid_argument("learning rate must be nonnegative");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip norm must be positive");
}

double Sgd::step(const ParameterList& params) const {
  const double norm = clip_grad_norm(params, clip_norm_);
  if (learning_rate_ != 0.0) {
    for (auto* p : params) p->value -= learning_rate_ * p->grad;
  }
  zero_grads(params);
  return norm;
}

GradCheckReport grad_check(const ParameterList& params, const std::function<double()>& loss,
                           const std::function<void()>& backward, const GradCheckOptions& options) {
  zero_grads(params);
  if (!std::isfinite(loss())) throw NonFiniteError("grad_check: loss is not finite");
  backward();

  GradCheckReport report;
  report.max_rel_error = 0.0;
  Rng rng(options.seed);
  for (auto* p : params) {
    const Index n = p->size();
    std::vector<Index> entries(static_cast<std::size_t>(n));
    std::iota(entries.begin(), entries.end(), Index{0});
    if (n > options.sample_threshold) {
      shuffle(std::span<Index>(entries), rng);
      const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(options.sample_fraction * static_cast<double>(n)));
      entries.resize(keep);
    }
    double* values = p->value.data();
    const double* grads = p->grad.data();
    for (Index e : entries) {
      const double saved = values[e];
      values[e] = saved + options.eps;
      const double up = loss();
      values[e] = saved - options.eps;
      const double down = loss();
      values[e] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw NonFiniteError("grad_check: loss is not finite");
      const double numeric = (up - down) / (2.0 * options.eps);
      const double analytic = grads[e];
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      ++report.entries_checked;
      if (report.worst_index < 0 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = p->name;
        report.worst_index = e;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace tnhg::nn
