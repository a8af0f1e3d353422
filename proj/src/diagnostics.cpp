#include "stancegen/diagnostics.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <memory>

#include "stancegen/layers.hpp"
#include "stancegen/model.hpp"
#include "stancegen/random.hpp"
#include "stancegen/tensor.hpp"
#include "stancegen/training.hpp"

namespace stancegen {

bool GradcheckReport::passed() const {
  for (const auto& r : results) {
    if (!r.passed) return false;
  }
  return !results.empty();
}

std::vector<std::string> GradcheckReport::failing() const {
  std::vector<std::string> out;
  for (const auto& r : results) {
    if (!r.passed) out.push_back(r.component);
  }
  return out;
}

namespace {

using T = Tensor<double>;
using Tp = Tape<double>;
using P = Parameter<double>;

// Owns the parameters of one check.
class Bench {
 public:
  explicit Bench(std::uint64_t seed) : rng_(seed) {}

  P* param(const std::string& name, Shape shape, double lo = -1.0, double hi = 1.0) {
    owned_.push_back(std::make_unique<P>(name, shape, ParamGroup::Stance));
    for (auto& v : owned_.back()->value) v = rng_.uniform(lo, hi);
    return owned_.back().get();
  }
  // Same, but every entry is at least `gap` away from zero (for kinks).
  P* param_away_from_zero(const std::string& name, Shape shape, double gap) {
    P* p = param(name, shape);
    for (auto& v : p->value) v = v < 0 ? v - gap : v + gap;
    return p;
  }
  layers::LSTMParams<double> lstm(const std::string& name, std::size_t in, std::size_t hidden) {
    layers::LSTMParams<double> l;
    l.weight = param(name + ".W", Shape::matrix(4 * hidden, in + hidden));
    l.bias = param(name + ".b", Shape::vector(4 * hidden));
    l.input_dim = in;
    l.hidden_dim = hidden;
    return l;
  }
  std::vector<P*> params() const {
    std::vector<P*> out;
    for (const auto& p : owned_) out.push_back(p.get());
    return out;
  }
  Rng& rng() { return rng_; }

 private:
  Rng rng_;
  std::vector<std::unique_ptr<P>> owned_;
};

// Random projection to a scalar so that no gradient entry cancels by symmetry.
T readout(Tp& tape, T x, std::uint64_t salt) {
  Rng r(salt ^ x.size());
  std::vector<double> w(x.size());
  for (auto& v : w) v = r.uniform(-1.0, 1.0);
  return ops::dot(x, tape.constant(x.shape(), std::move(w)));
}

std::vector<T> sequence(Tp& tape, const std::vector<P*>& xs) {
  std::vector<T> out;
  for (auto* p : xs) out.push_back(tape.parameter(*p));
  return out;
}

T stack(std::span<const T> xs) { return ops::concat(xs); }

}  // namespace

GradcheckReport run_gradcheck(double threshold, std::uint64_t seed) {
  GradcheckReport report;
  report.threshold = threshold;
  const auto start = std::chrono::steady_clock::now();

  auto check = [&](const std::string& name, Bench& bench,
                   const std::function<T(Tp&)>& f) {
    auto params = bench.params();
    GradcheckResult r;
    r.component = name;
    try {
      r.max_rel_error = finite_difference_check(f, params);
      r.passed = r.max_rel_error < threshold;
    } catch (const std::exception&) {
      r.max_rel_error = std::numeric_limits<double>::infinity();
      r.passed = false;
    }
    report.results.push_back(r);
  };

  constexpr std::size_t I = 3, H = 2, A = 3;

  // Elementwise unary ops.
  const std::pair<const char*, ops::UnaryOp> unary[] = {
      {"tanh", ops::UnaryOp::Tanh},     {"sigmoid", ops::UnaryOp::Sigmoid},
      {"relu", ops::UnaryOp::Relu},     {"log", ops::UnaryOp::Log},
      {"exp", ops::UnaryOp::Exp},       {"negate", ops::UnaryOp::Negate},
      {"scale", ops::UnaryOp::Scale}};
  for (const auto& [name, op] : unary) {
    Bench b(seed);
    P* x = op == ops::UnaryOp::Log ? b.param("x", Shape::vector(4), 0.2, 2.0)
                                   : b.param_away_from_zero("x", Shape::vector(4), 0.05);
    check(name, b, [&, op = op](Tp& t) {
      return readout(t, ops::apply_unary(t.parameter(*x), op, 1.7), 1);
    });
  }

  const std::pair<const char*, ops::BinaryOp> binary[] = {
      {"add", ops::BinaryOp::Add}, {"sub", ops::BinaryOp::Sub}, {"mul", ops::BinaryOp::Mul}};
  for (const auto& [name, op] : binary) {
    Bench b(seed);
    P* x = b.param("a", Shape::vector(4));
    P* y = b.param("b", Shape::vector(4));
    check(name, b, [&, op = op](Tp& t) {
      return readout(t, ops::apply_binary(t.parameter(*x), t.parameter(*y), op), 2);
    });
  }

  {
    Bench b(seed);
    P* w = b.param("W", Shape::matrix(3, 4));
    P* x = b.param("x", Shape::vector(4));
    check("matvec", b, [&](Tp& t) {
      return readout(t, ops::matvec(t.parameter(*w), t.parameter(*x)), 3);
    });
  }
  {
    Bench b(seed);
    P* w = b.param("W", Shape::matrix(3, 4));
    P* x = b.param("x", Shape::vector(2));
    check("matvec_cols", b, [&](Tp& t) {
      return readout(t, ops::matvec_cols(t.parameter(*w), t.parameter(*x), 1), 4);
    });
  }
  {
    Bench b(seed);
    P* x = b.param("x", Shape::vector(2));
    P* y = b.param("y", Shape::vector(3));
    check("concat", b, [&](Tp& t) {
      return readout(t, ops::concat({t.parameter(*x), t.parameter(*y)}), 5);
    });
    check("slice", b, [&](Tp& t) {
      return readout(t, ops::slice(t.parameter(*y), 1, 2), 6);
    });
  }
  {
    Bench b(seed);
    P* x = b.param("x", Shape::vector(4));
    check("softmax", b, [&](Tp& t) { return readout(t, ops::softmax(t.parameter(*x)), 7); });
    check("softmax_masked", b, [&](Tp& t) {
      return readout(t, ops::softmax(t.parameter(*x), Mask{true, false, true, true}), 8);
    });
    check("sum", b, [&](Tp& t) { return ops::sum(ops::tanh(t.parameter(*x))); });
    check("pick", b, [&](Tp& t) { return ops::pick(ops::tanh(t.parameter(*x)), 2); });
  }
  {
    Bench b(seed);
    P* x = b.param_away_from_zero("x", Shape::vector(4), 0.05);
    check("clamp_min", b, [&](Tp& t) {
      return readout(t, ops::clamp_min(t.parameter(*x), 0.0), 9);
    });
  }
  {
    Bench b(seed);
    P* x = b.param("x", Shape::vector(4));
    P* y = b.param("y", Shape::vector(4));
    check("dot", b, [&](Tp& t) { return ops::dot(t.parameter(*x), t.parameter(*y)); });
  }
  {
    Bench b(seed);
    P* w = b.param("w", Shape::vector(3));
    std::vector<P*> hs = {b.param("h0", Shape::vector(2)), b.param("h1", Shape::vector(2)),
                          b.param("h2", Shape::vector(2))};
    check("weighted_sum", b, [&](Tp& t) {
      auto seq = sequence(t, hs);
      return readout(t, ops::weighted_sum(t.parameter(*w), std::span<const T>(seq)), 10);
    });
  }

  // Layers.
  {
    Bench b(seed);
    P* x = b.param("x", Shape::vector(4));
    // Backward must be the exact negation of the identity's derivative.
    auto params = b.params();
    GradcheckResult r;
    r.component = "grl";
    r.max_rel_error = finite_difference_check(
        [&](Tp& t) { return readout(t, layers::grl(ops::tanh(t.parameter(*x))), 11); },
        [&](Tp& t) { return ops::negate(readout(t, ops::tanh(t.parameter(*x)), 11)); }, params);
    r.passed = r.max_rel_error < threshold;
    report.results.push_back(r);
  }
  {
    Bench b(seed);
    P* x = b.param("x", Shape::vector(4));
    check("dropout", b, [&](Tp& t) {
      Rng r(seed);
      return readout(t, layers::dropout_apply(t.parameter(*x), 0.4, true, &r), 12);
    });
  }
  {
    Bench b(seed);
    auto l = b.lstm("lstm", I, H);
    P* x = b.param("x", Shape::vector(I));
    P* h0 = b.param("h0", Shape::vector(H));
    P* c0 = b.param("c0", Shape::vector(H));
    check("lstm_step", b, [&](Tp& t) {
      auto s = layers::lstm_step(t.parameter(*x), {t.parameter(*h0), t.parameter(*c0)}, l);
      return ops::add(readout(t, s.h, 13), readout(t, s.c, 14));
    });
  }
  for (bool reverse : {false, true}) {
    Bench b(seed);
    auto l = b.lstm("lstm", I, H);
    std::vector<P*> xs = {b.param("x0", Shape::vector(I)), b.param("x1", Shape::vector(I)),
                          b.param("x2", Shape::vector(I))};
    check(reverse ? "lstm_sequence_reverse" : "lstm_sequence", b, [&](Tp& t) {
      auto seq = sequence(t, xs);
      Rng r(seed);
      layers::Dropout<double> d{0.3, true, &r};
      auto states = layers::run_lstm(t, std::span<const T>(seq), layers::zero_state(t, H), l,
                                     reverse, d);
      std::vector<T> hs;
      for (const auto& s : states) hs.push_back(s.h);
      return readout(t, stack(hs), 15);
    });
  }
  {
    Bench b(seed);
    layers::BiLSTMParams<double> p{b.lstm("fwd", I, H), b.lstm("bwd", I, H)};
    std::vector<P*> xs = {b.param("x0", Shape::vector(I)), b.param("x1", Shape::vector(I))};
    check("bilstm", b, [&](Tp& t) {
      auto seq = sequence(t, xs);
      auto hs = layers::bilstm_encode(t, std::span<const T>(seq), p);
      return readout(t, stack(hs), 16);
    });
    check("max_pool", b, [&](Tp& t) {
      auto seq = sequence(t, xs);
      auto hs = layers::bilstm_encode(t, std::span<const T>(seq), p);
      return readout(t, layers::max_pool_encode(std::span<const T>(hs)), 17);
    });
  }
  {
    Bench b(seed);
    layers::ConditionalEncoderParams<double> p{{b.lstm("t.fwd", I, H), b.lstm("t.bwd", I, H)},
                                               {b.lstm("s.fwd", I, H), b.lstm("s.bwd", I, H)}};
    std::vector<P*> target = {b.param("t0", Shape::vector(I)), b.param("t1", Shape::vector(I))};
    std::vector<P*> sentence = {b.param("x0", Shape::vector(I)), b.param("x1", Shape::vector(I)),
                                b.param("x2", Shape::vector(I))};
    check("conditional_encoding", b, [&](Tp& t) {
      auto ts = sequence(t, target);
      auto ss = sequence(t, sentence);
      Rng r(seed);
      layers::Dropout<double> d{0.2, true, &r};
      auto enc = layers::conditional_encode(t, std::span<const T>(ts), std::span<const T>(ss), p, d);
      return ops::add(readout(t, stack(enc.hiddens), 18), readout(t, enc.target_summary, 19));
    });
  }
  {
    Bench b(seed);
    layers::AttentionParams<double> p{b.param("W", Shape::matrix(A, 2 * H + 2 * H)),
                                      b.param("v", Shape::vector(A))};
    P* q = b.param("q", Shape::vector(2 * H));
    std::vector<P*> hs = {b.param("h0", Shape::vector(2 * H)), b.param("h1", Shape::vector(2 * H)),
                          b.param("h2", Shape::vector(2 * H))};
    check("attention", b, [&](Tp& t) {
      auto seq = sequence(t, hs);
      auto out = layers::additive_attention(t.parameter(*q), std::span<const T>(seq), p);
      return readout(t, out.s, 20);
    });
    check("attention_masked", b, [&](Tp& t) {
      auto seq = sequence(t, hs);
      auto out = layers::additive_attention(t.parameter(*q), std::span<const T>(seq), p,
                                            Mask{true, true, false});
      return readout(t, out.s, 21);
    });
  }

  // Losses.
  {
    Bench b(seed);
    P* x = b.param("logits", Shape::vector(3));
    check("stance_loss", b, [&](Tp& t) {
      return stance_loss(ops::softmax(t.parameter(*x)), Stance::Against);
    });
  }
  {
    Bench b(seed);
    std::vector<P*> xs = {b.param("d0", Shape::vector(2)), b.param("d1", Shape::vector(2)),
                          b.param("d2", Shape::vector(2))};
    check("domain_loss", b, [&](Tp& t) {
      std::vector<T> probs;
      for (auto* x : xs) probs.push_back(ops::softmax(t.parameter(*x)));
      return domain_loss(std::span<const T>(probs), 1);
    });
  }

  // Full per-example objective of every variant.
  auto emb = std::make_shared<EmbeddingMatrix>();
  emb->rows = 6;
  emb->dim = I;
  {
    Rng r(seed);
    emb->values.resize(emb->rows * emb->dim);
    for (std::size_t i = emb->dim; i < emb->values.size(); ++i) emb->values[i] = r.uniform(-1, 1);
  }
  Example ex;
  ex.target_ids = {2, 3};
  ex.sentence_ids = {4, 5, 2};
  ex.stance = Stance::Against;
  ex.domain = 1;
  for (Variant v : {Variant::Concat, Variant::ConcatInvar, Variant::BCA, Variant::BCAInvar,
                    Variant::BCAInvarSpec}) {
    ModelSpec spec;
    spec.variant = v;
    spec.embed_dim = I;
    spec.hidden_dim = H;
    spec.attn_dim = A;
    spec.mlp_dim = 4;
    spec.num_domains = 3;
    spec.dropout = 0.2;
    auto model = build_model<double>(spec, seed, emb);
    constexpr double lambda = 0.5;
    auto loss = [&](Tp& t, bool grl, double domain_sign) {
      Rng dr(seed);
      ForwardOptions opt;
      opt.train = true;
      opt.rng = &dr;
      opt.insert_grl = grl;
      auto l = example_loss(t, model, ex, lambda, opt);
      if (!l.domain) return l.stance;
      return ops::add(l.stance, ops::scale(*l.domain, domain_sign * lambda));
    };
    GradcheckResult r;
    r.component = "loss." + std::string(variant_name(v));
    try {
      // With the reversal layer, the stance path descends stance - lambda *
      // domain while the domain heads descend stance + lambda * domain.
      auto analytic = [&](Tp& t) { return loss(t, true, 1.0); };
      auto theta = model.parameters(ParamGroup::Stance);
      auto theta_adv = model.parameters(ParamGroup::Adversarial);
      r.max_rel_error = finite_difference_check(
          analytic, [&](Tp& t) { return loss(t, false, -1.0); }, theta);
      if (!theta_adv.empty()) {
        r.max_rel_error = std::max(
            r.max_rel_error, finite_difference_check(
                                 analytic, [&](Tp& t) { return loss(t, false, 1.0); }, theta_adv));
      }
      r.passed = r.max_rel_error < threshold;
    } catch (const std::exception&) {
      r.max_rel_error = std::numeric_limits<double>::infinity();
    }
    report.results.push_back(r);
  }

  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace stancegen
