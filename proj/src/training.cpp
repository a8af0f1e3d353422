#include "stancegen/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "stancegen/errors.hpp"
#include "stancegen/evaluation.hpp"
#include "stancegen/random.hpp"

namespace stancegen {

void Hyperparams::validate() const {
  if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("dimensions must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(l2 >= 0.0)) throw ConfigError("l2 must be non-negative");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
}

template <typename Real>
Tensor<Real> stance_loss(Tensor<Real> probs, Stance gold) {
  const auto p = ops::pick(probs, static_cast<std::size_t>(gold));
  return ops::negate(ops::log(ops::clamp_min(p, static_cast<Real>(kProbabilityFloor))));
}

template <typename Real>
Tensor<Real> domain_loss(std::span<const Tensor<Real>> domain_probs, std::size_t gold_domain) {
  if (domain_probs.empty()) throw ArgumentError("domain_loss: no domain classifiers");
  if (gold_domain >= domain_probs.size()) {
    throw ArgumentError("domain_loss: gold domain " + std::to_string(gold_domain) +
                        " out of range for " + std::to_string(domain_probs.size()) + " domains");
  }
  std::vector<Tensor<Real>> terms;
  terms.reserve(domain_probs.size());
  for (std::size_t i = 0; i < domain_probs.size(); ++i) {
    const std::size_t target = i == gold_domain ? 1 : 0;
    auto p = ops::clamp_min(ops::pick(domain_probs[i], target), static_cast<Real>(kProbabilityFloor));
    terms.push_back(ops::log(p));
  }
  auto total = ops::sum(ops::concat(std::span<const Tensor<Real>>(terms)));
  return ops::scale(total, static_cast<Real>(-1.0 / static_cast<double>(domain_probs.size())));
}

double total_loss(double stance, double domain, double lambda) { return stance - lambda * domain; }

template <typename Real>
void adam_step(std::span<Parameter<Real>* const> params, AdamState<Real>& state, double lr,
               double l2) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (Parameter<Real>* p : params) {
    auto& mom = state.moments[p];
    if (mom.m.empty()) {
      mom.m.assign(p->value.size(), Real(0));
      mom.v.assign(p->value.size(), Real(0));
    }
    if (mom.m.size() != p->value.size() || p->grad.size() != p->value.size()) {
      throw ShapeError("adam_step: buffers of '" + p->name + "' do not match its shape");
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = static_cast<double>(p->grad[i]) + l2 * static_cast<double>(p->value[i]);
      const double m = state.beta1 * static_cast<double>(mom.m[i]) + (1.0 - state.beta1) * g;
      const double v = state.beta2 * static_cast<double>(mom.v[i]) + (1.0 - state.beta2) * g * g;
      mom.m[i] = static_cast<Real>(m);
      mom.v[i] = static_cast<Real>(v);
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p->value[i] = static_cast<Real>(static_cast<double>(p->value[i]) -
                                      lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

template <typename Real>
double clip_grad_norm(std::span<Parameter<Real>* const> params, double max_norm) {
  double sq = 0.0;
  for (const auto* p : params) {
    for (Real g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const Real factor = static_cast<Real>(max_norm / norm);
    for (auto* p : params) {
      for (Real& g : p->grad) g *= factor;
    }
  }
  return norm;
}

bool EarlyStopping::observe(double score) {
  ++epoch_;
  if (best_epoch_ == 0 || score > best_) {
    best_ = score;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

std::string format_epoch_line(const EpochRecord& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f", r.epoch, r.stance_loss, r.domain_loss,
                r.dev_macro_f1);
  return buf;
}

template <typename Real>
ParameterSnapshot<Real> snapshot(const Model<Real>& model) {
  ParameterSnapshot<Real> snap;
  for (const auto* p : model.parameters()) snap.push_back(p->value);
  return snap;
}

template <typename Real>
void restore(Model<Real>& model, const ParameterSnapshot<Real>& snap) {
  auto params = model.parameters();
  if (params.size() != snap.size()) throw ArgumentError("restore: snapshot does not fit model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->value.size() != snap[i].size()) {
      throw ShapeError("restore: snapshot entry for '" + params[i]->name + "' has wrong size");
    }
    params[i]->value = snap[i];
  }
}

template <typename Real>
ExampleLoss<Real> example_loss(Tape<Real>& tape, const Model<Real>& model, const Example& ex,
                               double lambda, const ForwardOptions& options) {
  auto g = forward_graph(tape, model, ex, options);
  ExampleLoss<Real> out;
  out.stance = stance_loss(g.stance_probs, ex.stance);
  out.objective = out.stance;
  if (is_adversarial(model.spec().variant) && ex.domain) {
    auto d = domain_loss(std::span<const Tensor<Real>>(g.domain_probs), *ex.domain);
    out.domain = d;
    out.objective = ops::add(out.stance, ops::scale(d, static_cast<Real>(lambda)));
  }
  return out;
}

template <typename Real>
TrainReport train(Model<Real>& model, const Corpus& train_set, const Corpus& dev_set,
                  const Hyperparams& hp, std::ostream* log, const TrainHooks& hooks) {
  hp.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  if (dev_set.empty()) throw DataError("validation set is empty");
  const bool adversarial = is_adversarial(model.spec().variant);
  if (adversarial) {
    const bool labelled = std::any_of(train_set.examples.begin(), train_set.examples.end(),
                                      [](const Example& e) { return e.domain.has_value(); });
    if (!labelled) {
      throw ConfigError(std::string(variant_name(model.spec().variant)) +
                        " requires source-domain labels in the training set");
    }
  }

  const auto start = std::chrono::steady_clock::now();
  auto params = model.parameters();
  AdamState<Real> adam;
  Rng shuffle_rng = Rng::derive(hp.seed, "shuffle");
  Rng dropout_rng = Rng::derive(hp.seed, "dropout");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  EarlyStopping stopper(hp.patience);
  ParameterSnapshot<Real> best = snapshot(model);
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order.begin(), order.end());
    double stance_sum = 0.0, domain_sum = 0.0;
    std::size_t domain_n = 0;

    for (std::size_t begin = 0; begin < order.size(); begin += hp.batch_size) {
      const std::size_t end = std::min(order.size(), begin + hp.batch_size);
      const Real inv_batch = static_cast<Real>(1.0 / static_cast<double>(end - begin));
      for (auto* p : params) p->zero_grad();
      for (std::size_t k = begin; k < end; ++k) {
        const Example& ex = train_set.examples[order[k]];
        Tape<Real> tape;
        ForwardOptions opt;
        opt.train = true;
        opt.rng = &dropout_rng;
        auto loss = example_loss(tape, model, ex, hp.lambda, opt);
        stance_sum += static_cast<double>(loss.stance.item());
        if (loss.domain) {
          domain_sum += static_cast<double>(loss.domain->item());
          ++domain_n;
        }
        tape.backward(loss.objective, inv_batch);
      }
      clip_grad_norm(std::span<Parameter<Real>* const>(params), hp.clip_norm);
      adam_step(std::span<Parameter<Real>* const>(params), adam, hp.learning_rate, hp.l2);
      ++step;
      if (hooks.after_step) hooks.after_step(epoch, step);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.stance_loss = stance_sum / static_cast<double>(train_set.size());
    rec.domain_loss = domain_n ? domain_sum / static_cast<double>(domain_n) : 0.0;
    rec.dev_macro_f1 = evaluate(model, dev_set, hp.eval_threads).macro_f1;
    report.epochs.push_back(rec);
    if (log) *log << format_epoch_line(rec) << "\n" << std::flush;
    if (hooks.after_epoch) hooks.after_epoch(rec);

    if (stopper.observe(rec.dev_macro_f1)) best = snapshot(model);
    report.stop_epoch = epoch;
    if (stopper.should_stop()) break;
  }

  restore(model, best);
  report.best_epoch = stopper.best_epoch();
  report.best_dev_macro_f1 = stopper.best_score();
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

#define STANCEGEN_INSTANTIATE_TRAINING(Real)                                                  \
  template Tensor<Real> stance_loss(Tensor<Real>, Stance);                                    \
  template Tensor<Real> domain_loss(std::span<const Tensor<Real>>, std::size_t);              \
  template void adam_step(std::span<Parameter<Real>* const>, AdamState<Real>&, double, double); \
  template double clip_grad_norm(std::span<Parameter<Real>* const>, double);                  \
  template ParameterSnapshot<Real> snapshot(const Model<Real>&);                              \
  template void restore(Model<Real>&, const ParameterSnapshot<Real>&);                        \
  template ExampleLoss<Real> example_loss(Tape<Real>&, const Model<Real>&, const Example&,    \
                                          double, const ForwardOptions&);                     \
  template TrainReport train(Model<Real>&, const Corpus&, const Corpus&, const Hyperparams&,  \
                             std::ostream*, const TrainHooks&);

STANCEGEN_INSTANTIATE_TRAINING(float)
STANCEGEN_INSTANTIATE_TRAINING(double)

#undef STANCEGEN_INSTANTIATE_TRAINING

}  // namespace stancegen
