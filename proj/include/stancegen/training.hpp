#pragma once
// Losses, Adam with L2, gradient clipping, early stopping and the training
// loop.
//
// The combined objective printed in logs is L = L_stance - lambda * L_domain.
// It is not differentiated directly: each example contributes
// L_stance + lambda * L_domain to the backward pass, and the gradient
// reversal layer in front of the domain classifiers flips the sign seen by
// the shared encoder. The encoder therefore descends L_stance while ascending
// L_domain, and the domain classifiers descend L_domain.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "stancegen/data.hpp"
#include "stancegen/model.hpp"
#include "stancegen/tensor.hpp"

namespace stancegen {

struct Hyperparams {
  std::size_t embed_dim = 100;
  std::size_t hidden_dim = 200;
  double dropout = 0.1;
  std::size_t batch_size = 32;
  double learning_rate = 0.003;
  double l2 = 0.01;
  std::size_t patience = 10;
  double lambda = 0.1;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;  // <= 0 disables clipping
  unsigned eval_threads = 0;

  // Throws ConfigError.
  void validate() const;
};

inline constexpr double kProbabilityFloor = 1e-12;

// -log(max(probs[gold], 1e-12))
template <typename Real>
Tensor<Real> stance_loss(Tensor<Real> probs, Stance gold);

// Mean over domains i of the binary cross-entropy of "belongs to i", where
// the positive class (index 1) is correct iff i == gold_domain.
template <typename Real>
Tensor<Real> domain_loss(std::span<const Tensor<Real>> domain_probs, std::size_t gold_domain);

// L = stance - lambda * domain (logging only).
double total_loss(double stance, double domain, double lambda);

template <typename Real>
struct AdamState {
  struct Moments {
    std::vector<Real> m;
    std::vector<Real> v;
  };
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::unordered_map<const Parameter<Real>*, Moments> moments;
};

// One bias-corrected Adam update; l2 * param is added to each gradient
// before the moment updates.
template <typename Real>
void adam_step(std::span<Parameter<Real>* const> params, AdamState<Real>& state, double lr,
               double l2);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename Real>
double clip_grad_norm(std::span<Parameter<Real>* const> params, double max_norm);

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  // Records the next epoch's score; true if it is a new best.
  bool observe(double score);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based, 0 = none
  double best_score() const { return best_; }
  std::size_t epochs() const { return epoch_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double stance_loss = 0.0;
  double domain_loss = 0.0;
  double dev_macro_f1 = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stop_epoch = 0;
  double best_dev_macro_f1 = 0.0;
  double wall_seconds = 0.0;
};

// epoch<TAB>stance loss<TAB>domain loss<TAB>dev macro-F1
std::string format_epoch_line(const EpochRecord& r);

template <typename Real>
using ParameterSnapshot = std::vector<std::vector<Real>>;

template <typename Real>
ParameterSnapshot<Real> snapshot(const Model<Real>& model);
template <typename Real>
void restore(Model<Real>& model, const ParameterSnapshot<Real>& snap);

struct TrainHooks {
  // Called after every optimizer step (epoch is 1-based, step counts from 1).
  std::function<void(std::size_t epoch, std::size_t step)> after_step;
  // Called after each epoch's dev evaluation.
  std::function<void(const EpochRecord&)> after_epoch;
};

// Mini-batch training with per-epoch dev evaluation and early stopping on dev
// macro-F1. Epoch lines are written to `log` when given. On return the model
// holds the best-epoch parameters.
template <typename Real>
TrainReport train(Model<Real>& model, const Corpus& train_set, const Corpus& dev_set,
                  const Hyperparams& hp, std::ostream* log = nullptr,
                  const TrainHooks& hooks = {});

// Loss of one example as used by the optimizer, with the breakdown.
template <typename Real>
struct ExampleLoss {
  Tensor<Real> objective;     // stance + lambda * domain
  Tensor<Real> stance;
  std::optional<Tensor<Real>> domain;
};

template <typename Real>
ExampleLoss<Real> example_loss(Tape<Real>& tape, const Model<Real>& model, const Example& ex,
                               double lambda, const ForwardOptions& options);

}  // namespace stancegen
