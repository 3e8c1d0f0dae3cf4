#include <doctest.h>

#include <cmath>

#include "tnhg/checkpoint.hpp"
#include "tnhg/nn_core.hpp"

using namespace tnhg;
using namespace tnhg::nn;

TEST_CASE("sigmoid") {
  Vector v(5);
  v << 0.0, 2.0, -2.0, 800.0, -800.0;
  const Vector s = sigmoid(v);
  CHECK(s(0) == doctest::Approx(0.5));
  CHECK(s(1) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-14));
  CHECK(s(1) + s(2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s(3) == 1.0);
  CHECK(s(4) >= 0.0);
  CHECK(std::isfinite(s(4)));
}

TEST_CASE("softmax and log_softmax") {
  Vector v(3);
  v << 1.0, 2.0, 3.0;
  const Vector p = softmax(v);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p(0) == doctest::Approx(std::exp(1.0) / z).epsilon(1e-14));
  CHECK(p(2) == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-15));

  const Vector shifted = softmax((v.array() + 1000.0).matrix());
  CHECK((shifted - p).cwiseAbs().maxCoeff() < 1e-14);

  const Vector lp = log_softmax(v);
  for (int i = 0; i < 3; ++i) CHECK(lp(i) == doctest::Approx(std::log(p(i))).epsilon(1e-14));

  CHECK(softmax(Vector::Zero(4)).isApprox(Vector::Constant(4, 0.25)));
  CHECK_THROWS(softmax(Vector()));
}

TEST_CASE("cross_entropy uses the probability floor") {
  Vector p(3);
  p << 0.2, 0.8, 0.0;
  CHECK(cross_entropy(p, 1) == doctest::Approx(-std::log(0.8 + 1e-12)).epsilon(1e-15));
  CHECK(cross_entropy(p, 2) == doctest::Approx(-std::log(1e-12)));
  CHECK(std::isfinite(cross_entropy(p, 2)));
  CHECK_THROWS(cross_entropy(p, 3));
  CHECK_THROWS(cross_entropy(p, -1));
}

TEST_CASE("cross_entropy_logit_grad matches central differences") {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Vector logits(6);
    for (Index i = 0; i < logits.size(); ++i) logits(i) = uniform(rng, -3.0, 3.0);
    const Index target = static_cast<Index>(uniform_index(rng, 6));
    const Vector g = cross_entropy_logit_grad(softmax(logits), target);
    for (Index i = 0; i < logits.size(); ++i) {
      Vector up = logits, down = logits;
      up(i) += 1e-6;
      down(i) -= 1e-6;
      const double num = (cross_entropy(softmax(up), target) - cross_entropy(softmax(down), target)) / 2e-6;
      CHECK(g(i) == doctest::Approx(num).epsilon(1e-6));
    }
  }
}

TEST_CASE("concat") {
  Vector a(2), b(1);
  a << 1, 2;
  b << 3;
  Vector expected(3);
  expected << 1, 2, 3;
  CHECK(concat(a, b) == expected);
  CHECK(concat(Vector(), b) == b);
}

TEST_CASE("require_finite names the location") {
  Matrix m = Matrix::Zero(2, 2);
  CHECK_NOTHROW(require_finite(m, "m"));
  m(1, 0) = std::nan("");
  try {
    require_finite(m, "decoder.state");
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("decoder.state") != std::string::npos);
  }
}

TEST_CASE("init_uniform stays in range and is seed-deterministic") {
  Parameter a("a", 7, 5), b("b", 7, 5);
  Rng r1(4), r2(4);
  init_uniform(a, 0.08, r1);
  init_uniform(b, 0.08, r2);
  CHECK(a.value == b.value);
  CHECK(a.value.cwiseAbs().maxCoeff() <= 0.08);
  CHECK(a.value.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("clip_grad_norm") {
  Parameter a("a", 2, 1), b("b", 1, 1);
  a.grad << 3.0, 0.0;
  b.grad << 4.0;
  const ParameterList params{&a, &b};
  CHECK(global_grad_norm(params) == doctest::Approx(5.0));
  CHECK(clip_grad_norm(params, 10.0) == doctest::Approx(5.0));
  CHECK(a.grad(0) == 3.0);
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(global_grad_norm(params) == doctest::Approx(1.0));
  CHECK(a.grad(0) / b.grad(0) == doctest::Approx(0.75));
}

TEST_CASE("clipped norm never exceeds the bound") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    Parameter a("a", 3, 4);
    for (Index i = 0; i < a.size(); ++i) a.grad(i) = uniform(rng, -50.0, 50.0);
    const double bound = uniform(rng, 0.1, 20.0);
    clip_grad_norm({&a}, bound);
    CHECK(global_grad_norm({&a}) <= bound * (1.0 + 1e-12));
  }
}

TEST_CASE("Sgd updates, clips and zeroes gradients") {
  Parameter p("p", 2, 1);
  p.value << 1.0, 1.0;
  p.grad << 0.5, -1.0;
  Sgd(0.1, 100.0).step({&p});
  CHECK(p.value(0) == doctest::Approx(0.95));
  CHECK(p.value(1) == doctest::Approx(1.1));
  CHECK(p.grad.isZero());

  p.grad << 30.0, 40.0;  // norm 50 clipped to 5
  Sgd(1.0, 5.0).step({&p});
  CHECK(p.value(0) == doctest::Approx(0.95 - 3.0));
  CHECK(p.value(1) == doctest::Approx(1.1 - 4.0));
}

TEST_CASE("Sgd with zero learning rate leaves parameters bit-identical") {
  Rng rng(1);
  Parameter p("p", 4, 3);
  init_uniform(p, 1.0, rng);
  const Matrix before = p.value;
  p.grad.setConstant(1e300);
  Sgd(0.0, 5.0).step({&p});
  CHECK(p.value == before);
}

TEST_CASE("grad_check accepts a correct gradient and rejects a wrong one") {
  Rng rng(2);
  Parameter w("w", 3, 4), x("x", 4, 1);
  init_uniform(w, 1.0, rng);
  init_uniform(x, 1.0, rng);
  // loss = 0.5 * ||tanh(W x)||^2
  auto loss = [&] { return 0.5 * (w.value * x.value).array().tanh().square().sum(); };
  auto backward = [&] {
    const Matrix y = (w.value * x.value).array().tanh();
    const Matrix dz = y.array() * (1.0 - y.array().square());
    w.grad += dz * x.value.transpose();
    x.grad += w.value.transpose() * dz;
  };
  const auto good = grad_check({&w, &x}, loss, backward);
  CHECK(good.passed);
  CHECK(good.entries_checked == 16);
  CHECK(good.max_rel_error < 1e-6);

  auto wrong = [&] {
    backward();
    w.grad(1, 2) *= 1.01;
  };
  const auto bad = grad_check({&w, &x}, loss, wrong);
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst_parameter == "w");
}

TEST_CASE("grad_check samples large parameters") {
  Parameter big("big", 200, 100);
  Rng rng(3);
  init_uniform(big, 1.0, rng);
  auto loss = [&] { return 0.5 * big.value.squaredNorm(); };
  auto backward = [&] { big.grad += big.value; };
  const auto report = grad_check({&big}, loss, backward);
  CHECK(report.passed);
  CHECK(report.entries_checked == 200);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(5);
  Parameter a("layer.W", 3, 2), b("layer.b", 3, 1);
  init_uniform(a, 1.0, rng);
  init_uniform(b, 1.0, rng);
  a.value(0, 0) = 1.0 / 3.0;
  nlohmann::json header{{"kind", "test"}, {"n", 2}};
  const auto bytes = serialize_checkpoint(header, {&a, &b});
  CHECK(bytes.substr(0, 8) == "TNHGCKPT");
  const auto ckpt = parse_checkpoint(bytes);
  CHECK(ckpt.header == header);
  REQUIRE(ckpt.tensors.size() == 2);
  REQUIRE(ckpt.find("layer.W") != nullptr);
  CHECK(ckpt.find("layer.W")->value == a.value);
  CHECK(ckpt.find("missing") == nullptr);

  Parameter a2("layer.W", 3, 2), b2("layer.b", 3, 1);
  restore_parameters(ckpt, {&a2, &b2});
  CHECK(a2.value == a.value);
  CHECK(b2.value == b.value);
  CHECK(serialize_checkpoint(header, {&a2, &b2}) == bytes);

  Parameter wrong_shape("layer.W", 2, 3);
  CHECK_THROWS(restore_parameters(ckpt, {&wrong_shape}));
  Parameter absent("other", 1, 1);
  CHECK_THROWS(restore_parameters(ckpt, {&absent}));
}

TEST_CASE("parse_checkpoint rejects malformed input") {
  Parameter a("a", 1, 1);
  const auto bytes = serialize_checkpoint({{"k", 1}}, {&a});
  CHECK_THROWS(parse_checkpoint(""));
  CHECK_THROWS(parse_checkpoint("NOTACKPT" + bytes.substr(8)));
  CHECK_THROWS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)));
  std::string bad_version = bytes;
  bad_version[8] = 9;
  CHECK_THROWS(parse_checkpoint(bad_version));
}
