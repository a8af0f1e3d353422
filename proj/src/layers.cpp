#include "stancegen/layers.hpp"

#include <cmath>
#include <string>

#include "stancegen/errors.hpp"

namespace stancegen::layers {

namespace {

std::string dims(std::size_t a, std::size_t b) {
  return std::to_string(a) + " vs " + std::to_string(b);
}

template <typename Real>
void check_lstm_params(const LSTMParams<Real>& p) {
  if (!p.weight || !p.bias) throw ArgumentError("lstm: parameters not bound");
  const std::size_t h = p.hidden_dim;
  if (p.weight->shape != Shape::matrix(4 * h, p.input_dim + h)) {
    throw ShapeError("lstm: weight shape " + p.weight->shape.str() + " does not match input " +
                     std::to_string(p.input_dim) + ", hidden " + std::to_string(h));
  }
  if (p.bias->shape != Shape::vector(4 * h)) {
    throw ShapeError("lstm: bias shape " + p.bias->shape.str());
  }
}

}  // namespace

template <typename Real>
void init_glorot(Parameter<Real>& p, Rng& rng) {
  const double fan_out = static_cast<double>(p.shape.rows());
  const double fan_in = p.shape.rank() == 2 ? static_cast<double>(p.shape.cols()) : 1.0;
  const double r = std::sqrt(6.0 / (fan_in + fan_out));
  for (Real& v : p.value) v = static_cast<Real>(rng.uniform(-r, r));
}

template <typename Real>
void init_lstm(const LSTMParams<Real>& params, Rng& rng) {
  check_lstm_params(params);
  const std::size_t h = params.hidden_dim;
  const double r = std::sqrt(6.0 / static_cast<double>(params.input_dim + h + h));
  for (Real& v : params.weight->value) v = static_cast<Real>(rng.uniform(-r, r));
  auto& b = params.bias->value;
  std::fill(b.begin(), b.end(), Real(0));
  std::fill(b.begin() + static_cast<std::ptrdiff_t>(h), b.begin() + static_cast<std::ptrdiff_t>(2 * h),
            Real(1));
}

template <typename Real>
Tensor<Real> dropout_apply(Tensor<Real> x, double rate, bool train, Rng* rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ArgumentError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!train || rate == 0.0) return x;
  if (!rng) throw ArgumentError("dropout: train mode requires a random generator");
  const Real keep = static_cast<Real>(1.0 / (1.0 - rate));
  auto v = x.value();
  std::vector<Real> mask(v.size());
  std::vector<Real> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    mask[i] = rng->uniform01() < rate ? Real(0) : keep;
    out[i] = v[i] * mask[i];
  }
  const NodeId xid = x.id();
  return x.tape().record(x.shape(), std::move(out), {xid},
                         [xid, mask = std::move(mask)](Tape<Real>& t, NodeId self) {
    auto g = t.grad(self);
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

template <typename Real>
LSTMState<Real> zero_state(Tape<Real>& tape, std::size_t hidden_dim) {
  return {tape.constant(Shape::vector(hidden_dim), std::vector<Real>(hidden_dim, Real(0))),
          tape.constant(Shape::vector(hidden_dim), std::vector<Real>(hidden_dim, Real(0)))};
}

template <typename Real>
LSTMState<Real> lstm_step(Tensor<Real> x, const LSTMState<Real>& prev,
                          const LSTMParams<Real>& params) {
  check_lstm_params(params);
  const std::size_t h = params.hidden_dim;
  if (x.size() != params.input_dim) {
    throw ShapeError("lstm_step: input length " + dims(x.size(), params.input_dim));
  }
  if (prev.h.size() != h || prev.c.size() != h) {
    throw ShapeError("lstm_step: state length " + dims(prev.h.size(), h));
  }
  auto& tape = x.tape();
  auto w = tape.parameter(*params.weight);
  auto b = tape.parameter(*params.bias);
  auto z = ops::add(ops::matvec(w, ops::concat({x, prev.h})), b);
  auto gates = ops::sigmoid(ops::slice(z, 0, 3 * h));
  auto in = ops::slice(gates, 0, h);
  auto forget = ops::slice(gates, h, h);
  auto out = ops::slice(gates, 2 * h, h);
  auto cand = ops::tanh(ops::slice(z, 3 * h, h));
  auto c = ops::add(ops::mul(forget, prev.c), ops::mul(in, cand));
  auto hidden = ops::mul(out, ops::tanh(c));
  return {hidden, c};
}

template <typename Real>
std::vector<LSTMState<Real>> run_lstm(Tape<Real>& tape, std::span<const Tensor<Real>> seq,
                                      const LSTMState<Real>& init,
                                      const LSTMParams<Real>& params, bool reverse,
                                      const Dropout<Real>& recurrent) {
  (void)tape;
  if (seq.empty()) throw ArgumentError("run_lstm: empty sequence");
  const std::size_t n = seq.size();
  std::vector<LSTMState<Real>> states(n);
  LSTMState<Real> state = init;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t pos = reverse ? n - 1 - k : k;
    LSTMState<Real> prev{dropout_apply(state.h, recurrent.rate, recurrent.train, recurrent.rng),
                         state.c};
    state = lstm_step(seq[pos], prev, params);
    states[pos] = state;
  }
  return states;
}

template <typename Real>
ConditionalEncoding<Real> conditional_encode(Tape<Real>& tape,
                                             std::span<const Tensor<Real>> target,
                                             std::span<const Tensor<Real>> sentence,
                                             const ConditionalEncoderParams<Real>& params,
                                             const Dropout<Real>& dropout) {
  if (target.empty()) throw ArgumentError("conditional_encode: empty target");
  if (sentence.empty()) throw ArgumentError("conditional_encode: empty sentence");
  const std::size_t ht = params.target.forward.hidden_dim;
  auto zero = zero_state(tape, ht);
  auto t_fwd = run_lstm(tape, target, zero, params.target.forward, false, dropout);
  auto t_bwd = run_lstm(tape, target, zero, params.target.backward, true, dropout);
  auto s_fwd = run_lstm(tape, sentence, t_fwd.back(), params.sentence.forward, false, dropout);
  auto s_bwd = run_lstm(tape, sentence, t_bwd.front(), params.sentence.backward, true, dropout);

  ConditionalEncoding<Real> enc;
  enc.hiddens.reserve(sentence.size());
  for (std::size_t j = 0; j < sentence.size(); ++j) {
    enc.hiddens.push_back(dropout_apply(ops::concat({s_fwd[j].h, s_bwd[j].h}), dropout.rate,
                                        dropout.train, dropout.rng));
  }
  enc.target_summary = ops::concat({t_fwd.back().h, t_bwd.front().h});
  return enc;
}

template <typename Real>
std::vector<Tensor<Real>> bilstm_encode(Tape<Real>& tape, std::span<const Tensor<Real>> seq,
                                        const BiLSTMParams<Real>& params,
                                        const Dropout<Real>& dropout) {
  if (seq.empty()) throw ArgumentError("bilstm_encode: empty sequence");
  auto zero = zero_state(tape, params.forward.hidden_dim);
  auto fwd = run_lstm(tape, seq, zero, params.forward, false, dropout);
  auto bwd = run_lstm(tape, seq, zero, params.backward, true, dropout);
  std::vector<Tensor<Real>> out;
  out.reserve(seq.size());
  for (std::size_t j = 0; j < seq.size(); ++j) {
    out.push_back(dropout_apply(ops::concat({fwd[j].h, bwd[j].h}), dropout.rate, dropout.train,
                                dropout.rng));
  }
  return out;
}

template <typename Real>
AttentionOutput<Real> additive_attention(Tensor<Real> query,
                                         std::span<const Tensor<Real>> hiddens,
                                         const AttentionParams<Real>& params, const Mask& mask) {
  if (!params.weight || !params.v) throw ArgumentError("attention: parameters not bound");
  if (hiddens.empty()) throw ArgumentError("attention: no hidden vectors");
  if (!mask.empty() && mask.size() != hiddens.size()) {
    throw ShapeError("attention: mask length " + dims(mask.size(), hiddens.size()));
  }
  bool any = mask.empty();
  for (bool m : mask) any = any || m;
  if (!any) throw ArgumentError("attention: all positions are masked");

  const std::size_t q = query.size();
  const std::size_t k = hiddens.front().size();
  const Shape& ws = params.weight->shape;
  if (ws.rank() != 2 || ws.cols() != q + k) {
    throw ShapeError("attention: W " + ws.str() + " does not fit query " + std::to_string(q) +
                     " + key " + std::to_string(k));
  }
  if (params.v->shape != Shape::vector(ws.rows())) {
    throw ShapeError("attention: v " + params.v->shape.str() + " does not match W rows " +
                     std::to_string(ws.rows()));
  }

  auto& tape = query.tape();
  auto w = tape.parameter(*params.weight);
  auto v = tape.parameter(*params.v);
  auto wq = ops::matvec_cols(w, query, 0);
  std::vector<Tensor<Real>> scores;
  scores.reserve(hiddens.size());
  for (std::size_t i = 0; i < hiddens.size(); ++i) {
    if (!mask.empty() && !mask[i]) {
      scores.push_back(tape.constant(Shape::vector(1), {Real(0)}));
      continue;
    }
    auto pre = ops::add(wq, ops::matvec_cols(w, hiddens[i], q));
    scores.push_back(ops::dot(v, ops::tanh(pre)));
  }
  auto alpha = ops::softmax(ops::concat(std::span<const Tensor<Real>>(scores)), mask);
  return {ops::weighted_sum(alpha, hiddens), alpha};
}

template <typename Real>
Tensor<Real> max_pool_encode(std::span<const Tensor<Real>> hiddens, const Mask& mask) {
  if (hiddens.empty()) throw ArgumentError("max_pool: no hidden vectors");
  if (!mask.empty() && mask.size() != hiddens.size()) {
    throw ShapeError("max_pool: mask length " + dims(mask.size(), hiddens.size()));
  }
  const std::size_t dim = hiddens.front().size();
  std::vector<NodeId> ids;
  std::vector<Real> out(dim);
  std::vector<std::uint32_t> argmax(dim, 0);
  bool any = false;
  for (std::size_t i = 0; i < hiddens.size(); ++i) {
    if (hiddens[i].size() != dim) throw ShapeError("max_pool: vectors differ in length");
    ids.push_back(hiddens[i].id());
    if (!mask.empty() && !mask[i]) continue;
    auto v = hiddens[i].value();
    for (std::size_t d = 0; d < dim; ++d) {
      if (!any || v[d] > out[d]) {
        out[d] = v[d];
        argmax[d] = static_cast<std::uint32_t>(i);
      }
    }
    any = true;
  }
  if (!any) throw ArgumentError("max_pool: all positions are masked");
  auto& tape = hiddens.front().tape();
  return tape.record(Shape::vector(dim), std::move(out), std::span<const NodeId>(ids),
                     [ids, argmax = std::move(argmax)](Tape<Real>& t, NodeId self) {
    auto g = t.grad(self);
    for (std::size_t d = 0; d < g.size(); ++d) {
      const NodeId src = ids[argmax[d]];
      if (t.requires_grad(src)) t.grad(src)[d] += g[d];
    }
  });
}

template <typename Real>
Tensor<Real> grl(Tensor<Real> x) {
  auto v = x.value();
  const NodeId xid = x.id();
  return x.tape().record(x.shape(), std::vector<Real>(v.begin(), v.end()), {xid},
                         [xid](Tape<Real>& t, NodeId self) {
    auto g = t.grad(self);
    auto gx = t.grad(xid);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += -g[i];
  });
}

#define STANCEGEN_INSTANTIATE_LAYERS(Real)                                                      \
  template void init_glorot(Parameter<Real>&, Rng&);                                            \
  template void init_lstm(const LSTMParams<Real>&, Rng&);                                       \
  template Tensor<Real> dropout_apply(Tensor<Real>, double, bool, Rng*);                        \
  template LSTMState<Real> zero_state(Tape<Real>&, std::size_t);                                \
  template LSTMState<Real> lstm_step(Tensor<Real>, const LSTMState<Real>&,                      \
                                     const LSTMParams<Real>&);                                  \
  template std::vector<LSTMState<Real>> run_lstm(Tape<Real>&, std::span<const Tensor<Real>>,    \
                                                 const LSTMState<Real>&,                        \
                                                 const LSTMParams<Real>&, bool,                 \
                                                 const Dropout<Real>&);                         \
  template ConditionalEncoding<Real> conditional_encode(                                        \
      Tape<Real>&, std::span<const Tensor<Real>>, std::span<const Tensor<Real>>,                \
      const ConditionalEncoderParams<Real>&, const Dropout<Real>&);                             \
  template std::vector<Tensor<Real>> bilstm_encode(Tape<Real>&, std::span<const Tensor<Real>>,  \
                                                   const BiLSTMParams<Real>&,                   \
                                                   const Dropout<Real>&);                       \
  template AttentionOutput<Real> additive_attention(Tensor<Real>, std::span<const Tensor<Real>>, \
                                                    const AttentionParams<Real>&, const Mask&); \
  template Tensor<Real> max_pool_encode(std::span<const Tensor<Real>>, const Mask&);            \
  template Tensor<Real> grl(Tensor<Real>);

STANCEGEN_INSTANTIATE_LAYERS(float)
STANCEGEN_INSTANTIATE_LAYERS(double)

#undef STANCEGEN_INSTANTIATE_LAYERS

}  // namespace stancegen::layers
