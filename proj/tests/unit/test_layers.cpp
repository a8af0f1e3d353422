#include <doctest.h>

#include <cmath>
#include <vector>

#include "stancegen/errors.hpp"
#include "stancegen/layers.hpp"

using namespace stancegen;
using namespace stancegen::layers;

namespace {

struct Lstm {
  Parameter<double> w;
  Parameter<double> b;
  LSTMParams<double> p;
  Lstm(std::size_t in, std::size_t h)
      : w("w", Shape::matrix(4 * h, in + h), ParamGroup::Stance),
        b("b", Shape::vector(4 * h), ParamGroup::Stance),
        p{&w, &b, in, h} {}
  void randomize(Rng& rng) {
    for (double& v : w.value) v = rng.uniform(-0.8, 0.8);
    for (double& v : b.value) v = rng.uniform(-0.3, 0.3);
  }
};

std::vector<double> vals(const Tensor<double>& t) { return {t.value().begin(), t.value().end()}; }

Tensor<double> vec(Tape<double>& tape, std::vector<double> v) {
  const auto n = v.size();
  return tape.variable(Shape::vector(n), std::move(v));
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-double LSTM step written straight from the gate equations.
void oracle_step(const Lstm& l, const std::vector<double>& x, std::vector<double>& h,
                 std::vector<double>& c) {
  const std::size_t H = l.p.hidden_dim, I = l.p.input_dim;
  std::vector<double> z(4 * H);
  for (std::size_t r = 0; r < 4 * H; ++r) {
    double s = l.b.value[r];
    for (std::size_t k = 0; k < I; ++k) s += l.w.value[r * (I + H) + k] * x[k];
    for (std::size_t k = 0; k < H; ++k) s += l.w.value[r * (I + H) + I + k] * h[k];
    z[r] = s;
  }
  for (std::size_t j = 0; j < H; ++j) {
    const double i = sig(z[j]), f = sig(z[H + j]), o = sig(z[2 * H + j]), g = std::tanh(z[3 * H + j]);
    c[j] = f * c[j] + i * g;
    h[j] = o * std::tanh(c[j]);
  }
}

}  // namespace

TEST_CASE("lstm_step hand-evaluated cases") {
  Tape<double> tape;
  SUBCASE("all-zero params and state") {
    Lstm l(2, 3);
    auto s = lstm_step(vec(tape, {0.7, -0.4}), zero_state(tape, 3), l.p);
    for (double v : vals(s.h)) CHECK(v == 0.0);
    for (double v : vals(s.c)) CHECK(v == 0.0);
  }
  SUBCASE("zero params, c_prev = 1") {
    Lstm l(1, 1);
    LSTMState<double> prev{vec(tape, {0.0}), vec(tape, {1.0})};
    auto s = lstm_step(vec(tape, {0.3}), prev, l.p);
    // Gates are all 0.5 and the candidate is 0: c = 0.5 * 1, h = 0.5 * tanh(0.5).
    CHECK(s.c[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(s.h[0] == doctest::Approx(0.5 * std::tanh(0.5)).epsilon(1e-15));
    CHECK(s.h[0] == doctest::Approx(0.23106).epsilon(1e-4));
  }
  SUBCASE("saturated forget gate keeps the cell") {
    Lstm l(1, 1);
    l.b.value[1] = 50.0;  // forget block
    LSTMState<double> prev{vec(tape, {0.0}), vec(tape, {2.0})};
    auto s = lstm_step(vec(tape, {1.0}), prev, l.p);
    CHECK(std::abs(s.c[0] - 2.0) < 1e-6);
  }
}

TEST_CASE("lstm_step matches the scalar oracle") {
  Rng rng(21);
  Lstm l(3, 4);
  l.randomize(rng);
  Tape<double> tape;
  std::vector<double> x{0.2, -0.9, 0.4}, h{0.1, -0.2, 0.3, 0.0}, c{0.5, -0.5, 0.25, 1.0};
  auto s = lstm_step(vec(tape, x), LSTMState<double>{vec(tape, h), vec(tape, c)}, l.p);
  oracle_step(l, x, h, c);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(s.h[j] == doctest::Approx(h[j]).epsilon(1e-14));
    CHECK(s.c[j] == doctest::Approx(c[j]).epsilon(1e-14));
  }
}

TEST_CASE("run_lstm") {
  Rng rng(4);
  Lstm l(2, 3);
  l.randomize(rng);
  Tape<double> tape;

  SUBCASE("length-1 sequence equals one step") {
    std::vector<Tensor<double>> seq{vec(tape, {0.5, -1.0})};
    auto init = zero_state(tape, 3);
    auto states = run_lstm(tape, std::span<const Tensor<double>>(seq), init, l.p, false);
    auto one = lstm_step(seq[0], init, l.p);
    REQUIRE(states.size() == 1);
    CHECK(vals(states[0].h) == vals(one.h));
    CHECK(vals(states[0].c) == vals(one.c));
  }
  SUBCASE("palindrome: reverse run mirrors the forward run") {
    std::vector<std::vector<double>> xs{{0.1, 0.2}, {-0.7, 0.3}, {0.9, -0.4}, {-0.7, 0.3}, {0.1, 0.2}};
    std::vector<Tensor<double>> seq;
    for (auto& x : xs) seq.push_back(vec(tape, x));
    auto init = zero_state(tape, 3);
    auto fwd = run_lstm(tape, std::span<const Tensor<double>>(seq), init, l.p, false);
    auto bwd = run_lstm(tape, std::span<const Tensor<double>>(seq), init, l.p, true);
    const std::size_t n = xs.size();
    for (std::size_t j = 0; j < n; ++j) CHECK(vals(fwd[j].h) == vals(bwd[n - 1 - j].h));

    // Scripted oracle for the forward order.
    std::vector<double> h(3, 0.0), c(3, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      oracle_step(l, xs[j], h, c);
      for (std::size_t k = 0; k < 3; ++k) CHECK(fwd[j].h[k] == doctest::Approx(h[k]).epsilon(1e-13));
    }
  }
  SUBCASE("zero params and zero init stay zero") {
    Lstm z(2, 3);
    std::vector<Tensor<double>> seq{vec(tape, {1, 2}), vec(tape, {-3, 4})};
    auto states = run_lstm(tape, std::span<const Tensor<double>>(seq), zero_state(tape, 3), z.p, true);
    for (auto& s : states) {
      for (double v : vals(s.h)) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("conditional_encode") {
  Rng rng(9);
  const std::size_t I = 2, H = 4;
  Lstm tf(I, H), tb(I, H), sf(I, H), sb(I, H);
  for (Lstm* l : {&tf, &tb, &sf, &sb}) l->randomize(rng);
  ConditionalEncoderParams<double> params{{tf.p, tb.p}, {sf.p, sb.p}};
  Tape<double> tape;
  std::vector<Tensor<double>> target{vec(tape, {0.3, 0.1}), vec(tape, {-0.2, 0.8})};
  std::vector<Tensor<double>> sentence{vec(tape, {0.5, 0.5}), vec(tape, {-1, 0}), vec(tape, {0, 1})};

  SUBCASE("shapes") {
    auto enc = conditional_encode(tape, std::span<const Tensor<double>>(target),
                                  std::span<const Tensor<double>>(sentence), params);
    REQUIRE(enc.hiddens.size() == 3);
    for (auto& h : enc.hiddens) CHECK(h.size() == 8);
    CHECK(enc.target_summary.size() == 8);
  }
  SUBCASE("zero target LSTMs reduce to an unconditional BiLSTM") {
    Lstm zf(I, H), zb(I, H);
    ConditionalEncoderParams<double> zp{{zf.p, zb.p}, {sf.p, sb.p}};
    auto enc = conditional_encode(tape, std::span<const Tensor<double>>(target),
                                  std::span<const Tensor<double>>(sentence), zp);
    auto plain = bilstm_encode(tape, std::span<const Tensor<double>>(sentence), BiLSTMParams<double>{sf.p, sb.p});
    for (std::size_t j = 0; j < 3; ++j) CHECK(vals(enc.hiddens[j]) == vals(plain[j]));
  }
  SUBCASE("M = 1: the forward sentence LSTM starts from one target step") {
    std::vector<Tensor<double>> t1{target[0]};
    auto enc = conditional_encode(tape, std::span<const Tensor<double>>(t1),
                                  std::span<const Tensor<double>>(sentence), params);
    auto init = lstm_step(t1[0], zero_state(tape, H), tf.p);
    auto first = lstm_step(sentence[0], init, sf.p);
    auto h0 = vals(enc.hiddens[0]);
    for (std::size_t k = 0; k < H; ++k) CHECK(h0[k] == first.h[k]);
  }
}

TEST_CASE("additive_attention") {
  Rng rng(2);
  Parameter<double> w("w", Shape::matrix(3, 4), ParamGroup::Stance);
  Parameter<double> v("v", Shape::vector(3), ParamGroup::Stance);
  for (double& x : w.value) x = rng.uniform(-1, 1);
  for (double& x : v.value) x = rng.uniform(-1, 1);
  AttentionParams<double> p{&w, &v};
  Tape<double> tape;
  auto q = vec(tape, {0.4, -0.3});

  SUBCASE("single unmasked position") {
    std::vector<Tensor<double>> hs{vec(tape, {1, 2}), vec(tape, {3, 4}), vec(tape, {5, 6})};
    auto out = additive_attention(q, std::span<const Tensor<double>>(hs), p, Mask{false, true, false});
    CHECK(vals(out.alpha) == std::vector<double>{0, 1, 0});
    CHECK(vals(out.s) == std::vector<double>{3, 4});
  }
  SUBCASE("identical hiddens give uniform weights") {
    std::vector<Tensor<double>> hs(4, vec(tape, {0.2, -0.1}));
    auto out = additive_attention(q, std::span<const Tensor<double>>(hs), p);
    for (double a : vals(out.alpha)) CHECK(a == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("zero v gives the mean") {
    std::fill(v.value.begin(), v.value.end(), 0.0);
    std::vector<Tensor<double>> hs{vec(tape, {1, 0}), vec(tape, {0, 2})};
    auto out = additive_attention(q, std::span<const Tensor<double>>(hs), p);
    CHECK(vals(out.s)[0] == doctest::Approx(0.5));
    CHECK(vals(out.s)[1] == doctest::Approx(1.0));
  }
  SUBCASE("scores match v^T tanh(W [q; h])") {
    std::vector<std::vector<double>> raw{{0.3, 0.9}, {-0.5, 0.1}};
    std::vector<Tensor<double>> hs{vec(tape, raw[0]), vec(tape, raw[1])};
    auto out = additive_attention(q, std::span<const Tensor<double>>(hs), p);
    std::vector<double> a(2);
    const double qv[2] = {0.4, -0.3};
    for (int i = 0; i < 2; ++i) {
      const double in[4] = {qv[0], qv[1], raw[i][0], raw[i][1]};
      for (int r = 0; r < 3; ++r) {
        double z = 0;
        for (int k = 0; k < 4; ++k) z += w.value[r * 4 + k] * in[k];
        a[i] += v.value[r] * std::tanh(z);
      }
    }
    const double m = std::max(a[0], a[1]);
    const double e0 = std::exp(a[0] - m), e1 = std::exp(a[1] - m);
    CHECK(out.alpha[0] == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-14));
  }
}

TEST_CASE("max_pool_encode") {
  Tape<double> tape;
  std::vector<Tensor<double>> hs{vec(tape, {1, 5}), vec(tape, {3, 2})};
  CHECK(vals(max_pool_encode(std::span<const Tensor<double>>(hs))) == std::vector<double>{3, 5});
  std::vector<Tensor<double>> one{vec(tape, {7, -1})};
  CHECK(vals(max_pool_encode(std::span<const Tensor<double>>(one))) == std::vector<double>{7, -1});

  auto a = vec(tape, {2, 2});
  auto b = vec(tape, {2, 2});
  std::vector<Tensor<double>> tie{a, b};
  auto m = max_pool_encode(std::span<const Tensor<double>>(tie));
  CHECK(vals(m) == std::vector<double>{2, 2});
  tape.backward(ops::sum(m));
  CHECK(a.grad()[0] == 1.0);
  CHECK(a.grad()[1] == 1.0);
  CHECK(b.grad()[0] == 0.0);
  CHECK(b.grad()[1] == 0.0);

  // Masked positions never win.
  auto masked = max_pool_encode(std::span<const Tensor<double>>(hs), Mask{true, false});
  CHECK(vals(masked) == std::vector<double>{1, 5});
}

TEST_CASE("grl") {
  Tape<double> tape;
  auto x = vec(tape, {1.5, -2.0});
  auto y = grl(x);
  CHECK(vals(y) == std::vector<double>{1.5, -2.0});
  auto g = tape.constant(Shape::vector(2), {0.3, -0.7});
  tape.backward(ops::dot(y, g));
  CHECK(x.grad()[0] == -0.3);
  CHECK(x.grad()[1] == 0.7);

  Tape<double> t2;
  auto x2 = vec(t2, {0.25, 4.0});
  auto g2 = t2.constant(Shape::vector(2), {0.3, -0.7});
  t2.backward(ops::dot(grl(grl(x2)), g2));
  CHECK(x2.grad()[0] == 0.3);
  CHECK(x2.grad()[1] == -0.7);
}

TEST_CASE("dropout_apply") {
  Rng rng(1);
  Tape<double> tape;
  auto x = vec(tape, {1.0, -2.0, 3.0});
  CHECK(vals(dropout_apply(x, 0.0, true, &rng)) == vals(x));
  CHECK(vals(dropout_apply(x, 0.0, false, &rng)) == vals(x));
  CHECK(vals(dropout_apply(x, 0.1, false, &rng)) == vals(x));

  // Monte Carlo: the mean over 10000 masks recovers the input within 2%.
  std::vector<double> mean(3, 0.0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    Tape<double> tt;
    auto xt = tt.constant(Shape::vector(3), {1.0, -2.0, 3.0});
    auto y = dropout_apply(xt, 0.5, true, &rng);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK((y[i] == 0.0 || y[i] == 2.0 * xt[i]));
      mean[i] += y[i] / trials;
    }
  }
  CHECK(mean[0] == doctest::Approx(1.0).epsilon(0.02));
  CHECK(mean[1] == doctest::Approx(-2.0).epsilon(0.02));
  CHECK(mean[2] == doctest::Approx(3.0).epsilon(0.02));
}

TEST_CASE("glorot init stays in bounds and is seed-determined") {
  Parameter<double> p("p", Shape::matrix(4, 6), ParamGroup::Stance);
  Parameter<double> q("q", Shape::matrix(4, 6), ParamGroup::Stance);
  Rng r1(8), r2(8);
  init_glorot(p, r1);
  init_glorot(q, r2);
  CHECK(p.value == q.value);
  const double bound = std::sqrt(6.0 / 10.0);
  for (double v : p.value) CHECK(std::abs(v) <= bound);
}
