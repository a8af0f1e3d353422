#pragma once
// LSTM cells, bidirectional and conditional encoders, additive attention,
// max pooling, dropout and the gradient reversal layer.

#include <span>
#include <vector>

#include "stancegen/random.hpp"
#include "stancegen/tensor.hpp"

namespace stancegen::layers {

// Four gates stacked row-wise in one matrix over [x; h_prev]:
// rows [0,H) input, [H,2H) forget, [2H,3H) output, [3H,4H) candidate.
template <typename Real>
struct LSTMParams {
  Parameter<Real>* weight = nullptr;  // 4H x (I + H)
  Parameter<Real>* bias = nullptr;    // 4H
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
};

template <typename Real>
struct LSTMState {
  Tensor<Real> h;
  Tensor<Real> c;
};

// Uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)), per gate block.
template <typename Real>
void init_lstm(const LSTMParams<Real>& params, Rng& rng);
template <typename Real>
void init_glorot(Parameter<Real>& p, Rng& rng);

template <typename Real>
struct Dropout {
  double rate = 0.0;
  bool train = false;
  Rng* rng = nullptr;
};

// Inverted dropout: train mode zeroes each entry with probability `rate` and
// scales survivors by 1/(1-rate); eval mode is the identity.
template <typename Real>
Tensor<Real> dropout_apply(Tensor<Real> x, double rate, bool train, Rng* rng);

template <typename Real>
LSTMState<Real> zero_state(Tape<Real>& tape, std::size_t hidden_dim);

template <typename Real>
LSTMState<Real> lstm_step(Tensor<Real> x, const LSTMState<Real>& prev,
                          const LSTMParams<Real>& params);

// States are returned in sequence order whatever the direction. The
// recurrent dropout applies an independent mask to h_prev at every step.
template <typename Real>
std::vector<LSTMState<Real>> run_lstm(Tape<Real>& tape, std::span<const Tensor<Real>> seq,
                                      const LSTMState<Real>& init,
                                      const LSTMParams<Real>& params, bool reverse,
                                      const Dropout<Real>& recurrent = {});

template <typename Real>
struct BiLSTMParams {
  LSTMParams<Real> forward;
  LSTMParams<Real> backward;
};

template <typename Real>
struct ConditionalEncoderParams {
  BiLSTMParams<Real> target;
  BiLSTMParams<Real> sentence;
};

template <typename Real>
struct ConditionalEncoding {
  std::vector<Tensor<Real>> hiddens;  // N vectors of length 2H: [fwd_j; bwd_j]
  Tensor<Real> target_summary;        // [fwd_M; bwd_1] of the target encoder
};

// The forward sentence LSTM starts from the target's last forward state
// (h and c); the backward sentence LSTM from the target's first backward
// state. `dropout` drives recurrent dropout and the dropout on the output
// hidden vectors.
template <typename Real>
ConditionalEncoding<Real> conditional_encode(Tape<Real>& tape,
                                             std::span<const Tensor<Real>> target,
                                             std::span<const Tensor<Real>> sentence,
                                             const ConditionalEncoderParams<Real>& params,
                                             const Dropout<Real>& dropout = {});

// Independent BiLSTM from zero states; position j is [fwd_j; bwd_j].
template <typename Real>
std::vector<Tensor<Real>> bilstm_encode(Tape<Real>& tape, std::span<const Tensor<Real>> seq,
                                        const BiLSTMParams<Real>& params,
                                        const Dropout<Real>& dropout = {});

template <typename Real>
struct AttentionParams {
  Parameter<Real>* weight = nullptr;  // attn_dim x (query_dim + key_dim)
  Parameter<Real>* v = nullptr;       // attn_dim
};

template <typename Real>
struct AttentionOutput {
  Tensor<Real> s;
  Tensor<Real> alpha;
};

// a_i = v^T tanh(W [query; h_i]) (no bias), alpha = softmax(a) over the
// unmasked positions, s = sum_i alpha_i h_i.
template <typename Real>
AttentionOutput<Real> additive_attention(Tensor<Real> query,
                                         std::span<const Tensor<Real>> hiddens,
                                         const AttentionParams<Real>& params,
                                         const Mask& mask = {});

// Coordinatewise max over unmasked positions; ties go to the first position.
template <typename Real>
Tensor<Real> max_pool_encode(std::span<const Tensor<Real>> hiddens, const Mask& mask = {});

// Identity forward, exact negation backward.
template <typename Real>
Tensor<Real> grl(Tensor<Real> x);

}  // namespace stancegen::layers
