#include <doctest.h>

#include <cmath>
#include <limits>

#include "test_util.hpp"
#include "tnhg/nhg.hpp"

using namespace tnhg;
using nn::Index;
using nn::Matrix;
using nn::Vector;

namespace {

NhgConfig tiny_config(int vocab, int e = 3, int h = 2, int d = 4, bool attention = true) {
  NhgConfig c;
  c.vocab_size = vocab;
  c.embed_size = e;
  c.hidden_size = h;
  c.decoder_size = d;
  c.attention_size = 3;
  c.use_attention = attention;
  return c;
}

NhgModel zero_model(int vocab) {
  NhgModel m(tiny_config(vocab), 0);
  m.set_zero();
  return m;
}

// Randomizes every tensor, biases included, leaving the PAD row at zero.
void randomize(NhgModel& m, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto* p : m.parameters()) {
    for (Index i = 0; i < p->size(); ++i) p->value(i) = uniform(rng, -scale, scale);
  }
  m.embedding().value.row(kPad).setZero();
}

// ---- straight-line oracle over raw tensors ----

using Vec = std::vector<double>;

Vec matvec(const Matrix& m, const Vec& x) {
  Vec y(static_cast<std::size_t>(m.rows()), 0.0);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) y[static_cast<std::size_t>(i)] += m(i, j) * x[static_cast<std::size_t>(j)];
  return y;
}

Vec add(Vec a, const Vec& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Vec bias(const nn::Parameter& p) { return Vec(p.value.data(), p.value.data() + p.size()); }

Vec gru(const nn::GruCell& c, const Vec& x, const Vec& h) {
  auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  const Vec az = add(add(matvec(c.w_update.value, x), matvec(c.u_update.value, h)), bias(c.b_update));
  const Vec ar = add(add(matvec(c.w_reset.value, x), matvec(c.u_reset.value, h)), bias(c.b_reset));
  Vec rh(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) rh[i] = sig(ar[i]) * h[i];
  const Vec ac = add(add(matvec(c.w_candidate.value, x), matvec(c.u_candidate.value, rh)), bias(c.b_candidate));
  Vec out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double z = sig(az[i]);
    out[i] = (1.0 - z) * h[i] + z * std::tanh(ac[i]);
  }
  return out;
}

Vec row(const Matrix& m, int r) {
  Vec v;
  for (Index j = 0; j < m.cols(); ++j) v.push_back(m(r, j));
  return v;
}

struct OracleStep {
  Vec logits, state;
};

// Encoder states and one decoder step, re-derived from the model equations.
OracleStep oracle_first_step(const NhgModel& m, const Ids& src) {
  const auto H = static_cast<std::size_t>(m.config().hidden_size);
  const std::size_t L = src.size();
  std::vector<Vec> fwd(L), bwd(L);
  Vec h(H, 0.0);
  for (std::size_t t = 0; t < L; ++t) fwd[t] = h = gru(m.encoder_forward(), row(m.embedding().value, src[t]), h);
  h.assign(H, 0.0);
  for (std::size_t t = L; t-- > 0;) bwd[t] = h = gru(m.encoder_backward(), row(m.embedding().value, src[t]), h);
  std::vector<Vec> states(L);
  Vec v(2 * H, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    states[t] = fwd[t];
    states[t].insert(states[t].end(), bwd[t].begin(), bwd[t].end());
    for (std::size_t i = 0; i < 2 * H; ++i) v[i] += states[t][i] / static_cast<double>(L);
  }
  Vec s0 = add(matvec(m.init_weight().value, v), bias(m.init_bias()));
  for (auto& x : s0) x = std::tanh(x);

  const Vec y = row(m.embedding().value, kBos);
  const auto& a = m.attention();
  const Vec base = add(matvec(a.w_state.value, s0), matvec(a.w_prev.value, y));
  Vec e(L);
  for (std::size_t t = 0; t < L; ++t) {
    const Vec pre = add(base, matvec(a.w_keys.value, states[t]));
    e[t] = 0.0;
    for (std::size_t k = 0; k < pre.size(); ++k) e[t] += a.score.value(static_cast<Index>(k)) * std::tanh(pre[k]);
  }
  double mx = e[0], z = 0.0;
  for (double x : e) mx = std::max(mx, x);
  for (double& x : e) z += (x = std::exp(x - mx));
  Vec ctx(2 * H, 0.0);
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t i = 0; i < 2 * H; ++i) ctx[i] += e[t] / z * states[t][i];

  Vec input = ctx;
  input.insert(input.end(), y.begin(), y.end());
  OracleStep out;
  out.state = gru(m.decoder_cell(), input, s0);
  out.logits = add(matvec(m.output_weight().value, out.state), bias(m.output_bias()));
  return out;
}

double log_prob_of(const NhgModel& m, const Ids& src, const Ids& seq) {
  const auto enc = m.encode(src);
  Vector s = m.initial_state(enc);
  int prev = kBos;
  double total = 0.0;
  for (int tok : seq) {
    auto step = m.decode_step(s, prev, enc);
    total += nn::log_softmax(step.logits)(tok);
    s = step.state;
    prev = tok;
  }
  return total;
}

}  // namespace

TEST_CASE("zero-parameter model") {
  const NhgModel m = zero_model(6);
  const Ids src{4, 5};
  CHECK(m.sequence_nll(src, Ids{4, 5, kEos}) == doctest::Approx(3.0 * std::log(6.0)).epsilon(1e-10));
  const auto enc = m.encode(src);
  const auto step = m.decode_step(m.initial_state(enc), kBos, enc);
  CHECK(step.logits.isZero());
  CHECK((nn::softmax(step.logits).array() - 1.0 / 6.0).abs().maxCoeff() < 1e-15);
  DecodeConfig cfg;
  cfg.max_len = 3;
  CHECK(m.generate_greedy(src, cfg) == Ids{0, 0, 0});
}

TEST_CASE("a strong EOS bias stops generation immediately") {
  NhgModel m = zero_model(6);
  m.output_bias().value(kEos) = 10.0;
  CHECK(m.generate_greedy(Ids{4}, DecodeConfig{}).empty());
  DecodeConfig beam;
  beam.beam_width = 3;
  const auto hyp = m.generate_beam(Ids{4}, beam);
  CHECK(hyp.ids.empty());
  CHECK(hyp.finished);
}

TEST_CASE("encode") {
  NhgModel m(tiny_config(8), 3, 0.5);
  const auto one = m.encode(Ids{5});
  CHECK(one.states.length() == 1);
  const Ids src{4, 5, 6, 7};
  const auto a = m.encode(src), b = m.encode(src);
  CHECK(a.states.h == b.states.h);
  CHECK((a.states.v - a.states.h.rowwise().mean()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(m.encode(Ids{7, 6, 5, 4}).states.h != a.states.h);
  CHECK_THROWS(m.encode(Ids{}));
  CHECK_THROWS(m.encode(Ids{4, 8}));
}

TEST_CASE("decode_step matches a straight-line re-evaluation") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    NhgModel m(tiny_config(7), 0);
    randomize(m, seed, 1.0);
    const Ids src{4, 6, 5, 3};
    const auto enc = m.encode(src);
    const auto step = m.decode_step(m.initial_state(enc), kBos, enc);
    const auto oracle = oracle_first_step(m, src);
    for (Index i = 0; i < step.logits.size(); ++i)
      CHECK(std::abs(step.logits(i) - oracle.logits[static_cast<std::size_t>(i)]) <= 1e-12);
    for (Index i = 0; i < step.state.size(); ++i)
      CHECK(std::abs(step.state(i) - oracle.state[static_cast<std::size_t>(i)]) <= 1e-12);
    const auto again = m.decode_step(m.initial_state(enc), kBos, enc);
    CHECK(again.logits == step.logits);
  }
  NhgModel m(tiny_config(7), 0);
  const auto enc = m.encode(Ids{4});
  CHECK_THROWS(m.decode_step(m.initial_state(enc), 7, enc));
  CHECK_THROWS(m.decode_step(m.initial_state(enc), -1, enc));
}

TEST_CASE("sequence_nll is the sum of per-step cross-entropies") {
  NhgModel m(tiny_config(9), 4, 0.7);
  const Ids src{4, 5, 6}, tgt{7, 8, 4, kEos};
  const auto steps = m.step_losses(src, tgt);
  REQUIRE(steps.size() == tgt.size());
  double sum = 0.0;
  for (double s : steps) sum += s;
  CHECK(m.sequence_nll(src, tgt) == doctest::Approx(sum).epsilon(1e-14));
  CHECK(m.sequence_nll(src, tgt) == doctest::Approx(-log_prob_of(m, src, tgt)).epsilon(1e-10));
  CHECK_THROWS(m.sequence_nll(src, Ids{}));
}

TEST_CASE("next-token factors are proper conditionals") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    NhgModel m(tiny_config(4), seed, 1.0);
    const Ids src{3, 2, 1};
    double total = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) total += std::exp(log_prob_of(m, src, Ids{a, b}));
    CHECK(std::abs(total - 1.0) <= 1e-9);
  }
}

TEST_CASE("zero attention parameters reproduce the mean-pool decoder") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    NhgModel with(tiny_config(8, 3, 2, 4, true), 0);
    randomize(with, seed, 0.8);
    for (auto* p : with.attention().parameters()) p->value.setZero();
    NhgModel without(tiny_config(8, 3, 2, 4, false), 0);
    const auto src_params = with.parameters();
    for (auto* p : without.parameters()) {
      for (auto* q : src_params)
        if (q->name == p->name) p->value = q->value;
    }
    const Ids src{4, 5, 6, 7, 5}, tgt{6, 4, kEos};
    CHECK(std::abs(with.sequence_nll(src, tgt) - without.sequence_nll(src, tgt)) <= 1e-12);
    const auto ea = with.encode(src), eb = without.encode(src);
    const auto sa = with.decode_step(with.initial_state(ea), kBos, ea);
    const auto sb = without.decode_step(without.initial_state(eb), kBos, eb);
    CHECK((sa.logits - sb.logits).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(sb.attention.size() == 0);
  }
}

TEST_CASE("beam width 1 reproduces greedy decoding") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    NhgModel m(tiny_config(6), seed, 1.5);
    const Ids src{4, 5, 3};
    DecodeConfig cfg;
    cfg.max_len = 5;
    const Ids greedy = m.generate_greedy(src, cfg);
    cfg.beam_width = 1;
    CHECK(m.generate_beam(src, cfg).ids == greedy);
    CHECK(m.generate(src, cfg) == greedy);
  }
}

TEST_CASE("wide beam search equals exhaustive enumeration") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    NhgModel m(tiny_config(4), seed, 2.0);
    const Ids src{3, 1};
    // every id sequence of length <= 3 ending in EOS, and every EOS-free length-3 string
    double best_score = -std::numeric_limits<double>::infinity();
    Ids best;
    for (int code = 0; code < 64; ++code) {
      const Ids full{code / 16, (code / 4) % 4, code % 4};
      Ids prefix;
      bool finished = false;
      for (int tok : full) {
        if (tok == kEos) {
          finished = true;
          break;
        }
        prefix.push_back(tok);
      }
      if (!finished) continue;
      Ids with_eos = prefix;
      with_eos.push_back(kEos);
      const double s = log_prob_of(m, src, with_eos);
      if (s > best_score || (s == best_score && prefix < best)) {
        best_score = s;
        best = prefix;
      }
    }
    DecodeConfig cfg;
    cfg.max_len = 3;
    cfg.beam_width = 64;
    const auto hyp = m.generate_beam(src, cfg);
    CHECK(hyp.finished);
    CHECK(hyp.ids == best);
    CHECK(std::abs(hyp.score - best_score) <= 1e-9);
  }
}

TEST_CASE("beam scores agree with sequence_nll") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    NhgModel m(tiny_config(7), seed, 1.0);
    const Ids src{4, 5, 6};
    DecodeConfig cfg;
    cfg.max_len = 6;
    cfg.beam_width = 3;
    const auto hyp = m.generate_beam(src, cfg);
    if (hyp.finished) {
      Ids tgt = hyp.ids;
      tgt.push_back(kEos);
      CHECK(std::abs(hyp.score + m.sequence_nll(src, tgt)) <= 1e-9);
      ++checked;
    } else {
      CHECK(std::abs(hyp.score - log_prob_of(m, src, hyp.ids)) <= 1e-9);
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("greedy output is a pure function of model and input") {
  NhgModel m(tiny_config(9), 11, 1.0);
  NhgModel copy = m;
  const Ids src{4, 8, 6};
  DecodeConfig cfg;
  cfg.max_len = 8;
  std::vector<Vector> trace;
  const auto first = m.generate_greedy(src, cfg, &trace);
  CHECK(m.generate_greedy(src, cfg) == first);
  CHECK(copy.generate_greedy(src, cfg) == first);
  CHECK(trace.size() >= first.size());
  for (const auto& w : trace) CHECK(std::abs(w.sum() - 1.0) <= 1e-12);
}

TEST_CASE("batch loss gradient passes grad_check") {
  for (bool attention : {true, false}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      NhgConfig cfg = tiny_config(10, 8, 8, 8, attention);
      cfg.attention_size = 0;
      NhgModel m(cfg, seed);
      randomize(m, seed + 77, 1.0);
      const std::vector<Example> batch = {{{4, 5, 6, 7}, {8, 9, kEos}, 0}, {{9, 3, 5}, {4, kEos}, 1}};
      auto loss = [&] {
        double s = 0.0;
        for (const auto& ex : batch) s += m.sequence_nll(ex.source, ex.target);
        return s / static_cast<double>(batch.size());
      };
      auto backward = [&] {
        for (const auto& ex : batch) m.accumulate_gradients(ex.source, ex.target, 0.5);
      };
      const auto report = nn::grad_check(m.parameters(), loss, backward);
      INFO("attention " << attention << " seed " << seed << " worst " << report.worst_parameter << "["
                        << report.worst_index << "] rel " << report.max_rel_error << " a " << report.worst_analytic << " n " << report.worst_numeric);
      CHECK(report.passed);
    }
  }
}

TEST_CASE("train_step") {
  NhgModel m(tiny_config(10), 5, 0.3);
  const std::vector<Example> batch = {{{4, 5, 6}, {7, kEos}, 0}, {{8, 9}, {4, 5, kEos}, 1}};

  SUBCASE("zero learning rate leaves the model bit-identical") {
    const std::string before = m.checkpoint_bytes();
    const double l1 = train_step(m, batch, nn::Sgd(0.0, 5.0));
    const double l2 = train_step(m, batch, nn::Sgd(0.0, 5.0));
    CHECK(m.checkpoint_bytes() == before);
    CHECK(l1 == l2);
    const double mean =
        (m.sequence_nll(batch[0].source, batch[0].target) + m.sequence_nll(batch[1].source, batch[1].target)) / 2;
    CHECK(l1 == doctest::Approx(mean).epsilon(1e-14));
  }
  SUBCASE("steps reduce the loss and keep the PAD row at zero") {
    const double first = train_step(m, batch, nn::Sgd(0.5, 5.0));
    double last = first;
    for (int i = 0; i < 50; ++i) last = train_step(m, batch, nn::Sgd(0.5, 5.0));
    CHECK(last < first);
    CHECK(m.embedding().value.row(kPad).isZero());
  }
  SUBCASE("frozen embedding is untouched") {
    const Matrix emb = m.embedding().value;
    train_step(m, batch, nn::Sgd(0.5, 5.0), false);
    CHECK(m.embedding().value == emb);
    CHECK(m.output_bias().value.norm() > 0.0);
  }
  SUBCASE("non-finite loss aborts with diagnostics") {
    m.output_weight().value(0, 0) = std::numeric_limits<double>::quiet_NaN();
    try {
      train_step(m, batch, nn::Sgd(0.1, 5.0));
      FAIL("expected NonFiniteError");
    } catch (const nn::NonFiniteError& e) {
      CHECK(std::string(e.what()).find("example 0") != std::string::npos);
    }
  }
  CHECK_THROWS(train_step(m, std::span<const Example>{}, nn::Sgd(0.1, 5.0)));
}

TEST_CASE("checkpoint round trip") {
  testing::TempDir dir("nhg");
  NhgModel m(tiny_config(9), 8, 0.5);
  const Ids src{4, 5, 6}, tgt{7, kEos};
  m.save(dir.file("m.ckpt"));
  const auto loaded = NhgModel::load(dir.file("m.ckpt"));
  CHECK(loaded.config().to_json() == m.config().to_json());
  CHECK(loaded.sequence_nll(src, tgt) == m.sequence_nll(src, tgt));
  CHECK(loaded.checkpoint_bytes() == m.checkpoint_bytes());

  m.save(dir.file("noemb.ckpt"), false);
  CHECK_THROWS(NhgModel::load(dir.file("noemb.ckpt")));
  const auto shared = NhgModel::load(dir.file("noemb.ckpt"), m.embedding_handle());
  CHECK(shared.embedding_handle() == m.embedding_handle());
  CHECK(shared.sequence_nll(src, tgt) == m.sequence_nll(src, tgt));
}

TEST_CASE("copies are deep unless the embedding is shared") {
  NhgModel m(tiny_config(8), 1, 0.5);
  NhgModel copy = m;
  copy.output_bias().value.setConstant(3.0);
  copy.embedding().value(5, 0) = 9.0;
  CHECK(m.output_bias().value(0) != 3.0);
  CHECK(m.embedding().value(5, 0) != 9.0);
  NhgModel tied = m;
  tied.share_embedding(m.embedding_handle());
  tied.embedding().value(5, 0) = 9.0;
  CHECK(m.embedding().value(5, 0) == 9.0);
}

TEST_CASE("make_example appends EOS") {
  const auto vocab = Vocabulary::from_tokens({"<pad>", "<bos>", "<eos>", "<unk>", "a", "b"});
  const Document d{tokenize_chars("ab"), tokenize_chars("bz"), {}, {}};
  const auto ex = make_example(vocab, d, 4);
  CHECK(ex.source == Ids{4, 5});
  CHECK(ex.target == Ids{5, kUnk, kEos});
  CHECK(ex.id == 4);
}
