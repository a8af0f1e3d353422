#include "stancegen/model.hpp"

#include <algorithm>
#include <cctype>

#include "stancegen/errors.hpp"

namespace stancegen {

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::Concat: return "Concat";
    case Variant::ConcatInvar: return "ConcatInvar";
    case Variant::BCA: return "BCA";
    case Variant::BCAInvar: return "BCAInvar";
    case Variant::BCAInvarSpec: return "BCAInvarSpec";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c != '-' && c != '_') key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (key == "concat") return Variant::Concat;
  if (key == "concatinvar") return Variant::ConcatInvar;
  if (key == "bca") return Variant::BCA;
  if (key == "bcainvar") return Variant::BCAInvar;
  if (key == "bcainvarspec") return Variant::BCAInvarSpec;
  throw ConfigError("unknown model variant '" + std::string(name) +
                    "' (expected Concat, ConcatInvar, BCA, BCAInvar or BCAInvarSpec)");
}

bool is_adversarial(Variant v) {
  return v == Variant::ConcatInvar || v == Variant::BCAInvar || v == Variant::BCAInvarSpec;
}

bool has_attention(Variant v) {
  return v == Variant::BCA || v == Variant::BCAInvar || v == Variant::BCAInvarSpec;
}

std::size_t ModelSpec::repr_dim() const {
  // Concat: [s_target; s_sentence]; BCAInvarSpec: [s_invar; s_spec].
  if (variant == Variant::BCA || variant == Variant::BCAInvar) return 2 * hidden_dim;
  return 4 * hidden_dim;
}

std::size_t ModelSpec::domain_input_dim() const { return 2 * hidden_dim; }

void ModelSpec::validate() const {
  if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("model dimensions must be positive");
  if (num_stance_classes != 3) throw ConfigError("the stance head has exactly 3 classes");
  if (is_adversarial(variant) && num_domains < 2) {
    throw ConfigError(std::string(variant_name(variant)) +
                      " needs at least 2 source domains, got " + std::to_string(num_domains));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

// ---------------------------------------------------------------------------
// Model

template <typename Real>
Parameter<Real>* Model<Real>::add(std::string name, Shape shape, ParamGroup group) {
  params_.push_back(std::make_unique<Parameter<Real>>(std::move(name), shape, group));
  return params_.back().get();
}

template <typename Real>
layers::LSTMParams<Real> Model<Real>::add_lstm(const std::string& name, std::size_t input,
                                               std::size_t hidden) {
  layers::LSTMParams<Real> p;
  p.weight = add(name + ".W", Shape::matrix(4 * hidden, input + hidden), ParamGroup::Stance);
  p.bias = add(name + ".b", Shape::vector(4 * hidden), ParamGroup::Stance);
  p.input_dim = input;
  p.hidden_dim = hidden;
  lstms_.push_back(p);
  return p;
}

template <typename Real>
layers::BiLSTMParams<Real> Model<Real>::add_bilstm(const std::string& name, std::size_t input,
                                                   std::size_t hidden) {
  auto fwd = add_lstm(name + ".fwd", input, hidden);
  auto bwd = add_lstm(name + ".bwd", input, hidden);
  return {fwd, bwd};
}

template <typename Real>
Model<Real>::Model(const ModelSpec& spec, std::shared_ptr<const EmbeddingMatrix> embeddings)
    : spec_(spec), embeddings_(std::move(embeddings)) {
  spec_.validate();
  if (!embeddings_) throw ConfigError("model requires an embedding matrix");
  if (embeddings_->dim != spec_.embed_dim) {
    throw ConfigError("embedding dimension " + std::to_string(embeddings_->dim) +
                      " does not match model embed_dim " + std::to_string(spec_.embed_dim));
  }
  const std::size_t e = spec_.embed_dim;
  const std::size_t h = spec_.hidden_dim;
  const std::size_t a = spec_.attention_dim();

  if (has_attention(spec_.variant)) {
    encoder.target = add_bilstm("enc.target", e, h);
    encoder.sentence = add_bilstm("enc.sentence", e, h);
    attention.weight = add("attn.W", Shape::matrix(a, 4 * h), ParamGroup::Stance);
    attention.v = add("attn.v", Shape::vector(a), ParamGroup::Stance);
    if (spec_.variant == Variant::BCAInvarSpec) {
      spec_encoder.target = add_bilstm("spec.enc.target", e, h);
      spec_encoder.sentence = add_bilstm("spec.enc.sentence", e, h);
      spec_attention.weight = add("spec.attn.W", Shape::matrix(a, 4 * h), ParamGroup::Stance);
      spec_attention.v = add("spec.attn.v", Shape::vector(a), ParamGroup::Stance);
    }
  } else {
    target_encoder = add_bilstm("enc.target", e, h);
    sentence_encoder = add_bilstm("enc.sentence", e, h);
  }
  mlp = add("mlp.W", Shape::matrix(spec_.hidden_mlp_dim(), spec_.repr_dim()), ParamGroup::Stance);
  stance = add("stance.W", Shape::matrix(spec_.num_stance_classes, spec_.hidden_mlp_dim()),
               ParamGroup::Stance);
  if (is_adversarial(spec_.variant)) {
    for (std::size_t d = 0; d < spec_.num_domains; ++d) {
      const std::string base = "domain." + std::to_string(d);
      DomainHead head;
      head.weight = add(base + ".W", Shape::matrix(2, spec_.domain_input_dim()),
                        ParamGroup::Adversarial);
      head.bias = add(base + ".b", Shape::vector(2), ParamGroup::Adversarial);
      domain_heads.push_back(head);
    }
  }
}

template <typename Real>
void Model<Real>::initialize(std::uint64_t seed) {
  for (const auto& lstm : lstms_) {
    Rng rng = Rng::derive(seed, lstm.weight->name);
    layers::init_lstm(lstm, rng);
  }
  auto is_lstm = [this](const Parameter<Real>* p) {
    return std::any_of(lstms_.begin(), lstms_.end(), [p](const auto& l) {
      return l.weight == p || l.bias == p;
    });
  };
  for (auto& p : params_) {
    if (is_lstm(p.get())) continue;
    if (p->shape.rank() == 1 && p->group == ParamGroup::Adversarial) {
      std::fill(p->value.begin(), p->value.end(), Real(0));  // domain biases
      continue;
    }
    Rng rng = Rng::derive(seed, p->name);
    layers::init_glorot(*p, rng);
  }
  for (auto& p : params_) p->zero_grad();
}

template <typename Real>
std::vector<Parameter<Real>*> Model<Real>::parameters() const {
  std::vector<Parameter<Real>*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename Real>
std::vector<Parameter<Real>*> Model<Real>::parameters(ParamGroup group) const {
  std::vector<Parameter<Real>*> out;
  for (const auto& p : params_) {
    if (p->group == group) out.push_back(p.get());
  }
  return out;
}

template <typename Real>
Parameter<Real>* Model<Real>::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

template <typename Real>
std::size_t Model<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename Real>
Model<Real> build_model(const ModelSpec& spec, std::uint64_t seed,
                        std::shared_ptr<const EmbeddingMatrix> embeddings) {
  Model<Real> model(spec, std::move(embeddings));
  model.initialize(seed);
  return model;
}

// ---------------------------------------------------------------------------
// Forward

namespace {

template <typename Real>
std::vector<Tensor<Real>> embed(Tape<Real>& tape, const EmbeddingMatrix& emb,
                                const std::vector<std::int32_t>& ids, const ForwardOptions& opt,
                                double rate, const char* what) {
  if (ids.empty()) throw ArgumentError(std::string("model_forward: empty ") + what);
  std::vector<Tensor<Real>> out;
  out.reserve(ids.size());
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= emb.rows) {
      throw DataError(std::string("model_forward: ") + what + " token id " + std::to_string(id) +
                      " outside vocabulary of size " + std::to_string(emb.rows));
    }
    auto row = emb.row(static_cast<std::size_t>(id));
    auto x = tape.constant(Shape::vector(emb.dim), std::vector<Real>(row.begin(), row.end()));
    out.push_back(layers::dropout_apply(x, rate, opt.train, opt.rng));
  }
  return out;
}

}  // namespace

template <typename Real>
ForwardGraph<Real> forward_graph(Tape<Real>& tape, const Model<Real>& model,
                                 const Example& example, const ForwardOptions& opt) {
  const ModelSpec& spec = model.spec();
  const double rate = spec.dropout;
  if (opt.train && rate > 0.0 && !opt.rng) {
    throw ArgumentError("model_forward: train mode needs a random generator");
  }
  // Sentence first, then target: the order fixes the dropout stream.
  auto sentence = embed(tape, model.embeddings(), example.sentence_ids, opt, rate, "sentence");
  auto target = embed(tape, model.embeddings(), example.target_ids, opt, rate, "target");
  layers::Dropout<Real> drop{rate, opt.train, opt.rng};

  ForwardGraph<Real> g;
  if (has_attention(spec.variant)) {
    auto enc = layers::conditional_encode(tape, std::span<const Tensor<Real>>(target),
                                          std::span<const Tensor<Real>>(sentence), model.encoder,
                                          drop);
    auto att = layers::additive_attention(enc.target_summary,
                                          std::span<const Tensor<Real>>(enc.hiddens),
                                          model.attention);
    g.attention = att;
    g.repr = att.s;
    g.domain_input = att.s;
    if (spec.variant == Variant::BCAInvarSpec) {
      auto enc2 = layers::conditional_encode(tape, std::span<const Tensor<Real>>(target),
                                             std::span<const Tensor<Real>>(sentence),
                                             model.spec_encoder, drop);
      auto att2 = layers::additive_attention(enc2.target_summary,
                                             std::span<const Tensor<Real>>(enc2.hiddens),
                                             model.spec_attention);
      g.repr = ops::concat({att.s, att2.s});
    }
  } else {
    auto th = layers::bilstm_encode(tape, std::span<const Tensor<Real>>(target),
                                    model.target_encoder, drop);
    auto sh = layers::bilstm_encode(tape, std::span<const Tensor<Real>>(sentence),
                                    model.sentence_encoder, drop);
    auto st = layers::max_pool_encode(std::span<const Tensor<Real>>(th));
    auto ss = layers::max_pool_encode(std::span<const Tensor<Real>>(sh));
    g.repr = ops::concat({st, ss});
    g.domain_input = ss;
  }

  auto y = ops::relu(ops::matvec(tape.parameter(*model.mlp), g.repr));
  g.stance_probs = ops::softmax(ops::matvec(tape.parameter(*model.stance), y));

  if (is_adversarial(spec.variant)) {
    auto r = opt.insert_grl ? layers::grl(g.domain_input) : g.domain_input;
    for (const auto& head : model.domain_heads) {
      auto logits = ops::add(ops::matvec(tape.parameter(*head.weight), r),
                             tape.parameter(*head.bias));
      g.domain_probs.push_back(ops::softmax(logits));
    }
  } else {
    g.domain_input = Tensor<Real>();
  }
  return g;
}

Stance ForwardOutput::predicted() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < stance_probs.size(); ++i) {
    if (stance_probs[i] > stance_probs[best]) best = i;
  }
  return static_cast<Stance>(best);
}

template <typename Real>
ForwardOutput model_forward(const Model<Real>& model, const Example& example, bool train_mode,
                            Rng* rng) {
  Tape<Real> tape(false);
  ForwardOptions opt;
  opt.train = train_mode;
  opt.rng = rng;
  auto g = forward_graph(tape, model, example, opt);
  ForwardOutput out;
  auto sp = g.stance_probs.value();
  for (std::size_t i = 0; i < 3; ++i) out.stance_probs[i] = static_cast<double>(sp[i]);
  for (const auto& d : g.domain_probs) {
    auto v = d.value();
    out.domain_probs.push_back({static_cast<double>(v[0]), static_cast<double>(v[1])});
  }
  if (g.attention) {
    auto a = g.attention->alpha.value();
    out.attention = std::vector<double>(a.begin(), a.end());
  }
  auto r = g.repr.value();
  out.repr.assign(r.begin(), r.end());
  return out;
}

template class Model<float>;
template class Model<double>;
template Model<float> build_model(const ModelSpec&, std::uint64_t,
                                  std::shared_ptr<const EmbeddingMatrix>);
template Model<double> build_model(const ModelSpec&, std::uint64_t,
                                   std::shared_ptr<const EmbeddingMatrix>);
template ForwardGraph<float> forward_graph(Tape<float>&, const Model<float>&, const Example&,
                                           const ForwardOptions&);
template ForwardGraph<double> forward_graph(Tape<double>&, const Model<double>&, const Example&,
                                            const ForwardOptions&);
template ForwardOutput model_forward(const Model<float>&, const Example&, bool, Rng*);
template ForwardOutput model_forward(const Model<double>&, const Example&, bool, Rng*);

}  // namespace stancegen
