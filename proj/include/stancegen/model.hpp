#pragma once
// The five architecture variants and their forward computation.
//
//   Concat        independent BiLSTMs, max-pooled, s = [s_target; s_sentence]
//   ConcatInvar   Concat + per-domain classifiers on GRL(s_sentence)
//   BCA           conditional BiLSTM + additive attention
//   BCAInvar      BCA + per-domain classifiers on GRL(s)
//   BCAInvarSpec  two parallel BCA encoders, s = [s_invar; s_spec],
//                 domain classifiers on GRL(s_invar)
//
// Every variant ends in y = ReLU(W_mlp s), p = softmax(W_stance y).

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stancegen/data.hpp"
#include "stancegen/layers.hpp"
#include "stancegen/random.hpp"
#include "stancegen/tensor.hpp"

namespace stancegen {

enum class Variant { Concat, ConcatInvar, BCA, BCAInvar, BCAInvarSpec };

std::string_view variant_name(Variant v);
// Accepts the canonical names and their hyphenated forms ("BCA-Invar").
Variant parse_variant(std::string_view name);
bool is_adversarial(Variant v);
bool has_attention(Variant v);

struct ModelSpec {
  Variant variant = Variant::BCAInvar;
  std::size_t embed_dim = 100;
  std::size_t hidden_dim = 200;
  std::size_t attn_dim = 0;  // 0 -> 2 * hidden_dim
  std::size_t mlp_dim = 0;   // 0 -> hidden_dim
  std::size_t num_stance_classes = 3;
  std::size_t num_domains = 0;
  double dropout = 0.1;

  std::size_t attention_dim() const { return attn_dim ? attn_dim : 2 * hidden_dim; }
  std::size_t hidden_mlp_dim() const { return mlp_dim ? mlp_dim : hidden_dim; }
  // Length of s fed to the stance head.
  std::size_t repr_dim() const;
  // Length of the vector the domain classifiers read.
  std::size_t domain_input_dim() const;
  // Throws ConfigError.
  void validate() const;
};

template <typename Real>
class Model {
 public:
  Model(const ModelSpec& spec, std::shared_ptr<const EmbeddingMatrix> embeddings);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  // Draws every parameter from a stream derived from (seed, parameter name),
  // so a parameter's initial value does not depend on the variant.
  void initialize(std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const EmbeddingMatrix& embeddings() const { return *embeddings_; }
  std::shared_ptr<const EmbeddingMatrix> shared_embeddings() const { return embeddings_; }

  // Registry order: stance path (theta) first, then domain classifiers.
  std::vector<Parameter<Real>*> parameters() const;
  std::vector<Parameter<Real>*> parameters(ParamGroup group) const;
  Parameter<Real>* find(std::string_view name) const;
  std::size_t parameter_count() const;

  struct DomainHead {
    Parameter<Real>* weight = nullptr;  // 2 x domain_input_dim
    Parameter<Real>* bias = nullptr;    // 2
  };

  // Bindings used by the forward pass.
  layers::ConditionalEncoderParams<Real> encoder{};      // BCA family
  layers::AttentionParams<Real> attention{};             // BCA family
  layers::ConditionalEncoderParams<Real> spec_encoder{};  // BCAInvarSpec
  layers::AttentionParams<Real> spec_attention{};         // BCAInvarSpec
  layers::BiLSTMParams<Real> target_encoder{};            // Concat family
  layers::BiLSTMParams<Real> sentence_encoder{};          // Concat family
  Parameter<Real>* mlp = nullptr;                         // mlp_dim x repr_dim
  Parameter<Real>* stance = nullptr;                      // 3 x mlp_dim
  std::vector<DomainHead> domain_heads;

 private:
  Parameter<Real>* add(std::string name, Shape shape, ParamGroup group);
  layers::LSTMParams<Real> add_lstm(const std::string& name, std::size_t input, std::size_t hidden);
  layers::BiLSTMParams<Real> add_bilstm(const std::string& name, std::size_t input,
                                        std::size_t hidden);

  ModelSpec spec_;
  std::shared_ptr<const EmbeddingMatrix> embeddings_;
  std::vector<std::unique_ptr<Parameter<Real>>> params_;
  std::vector<layers::LSTMParams<Real>> lstms_;
};

template <typename Real>
Model<Real> build_model(const ModelSpec& spec, std::uint64_t seed,
                        std::shared_ptr<const EmbeddingMatrix> embeddings);

struct ForwardOptions {
  bool train = false;
  Rng* rng = nullptr;
  // Removing the GRL is only meaningful for twin-graph tests.
  bool insert_grl = true;
};

template <typename Real>
struct ForwardGraph {
  Tensor<Real> stance_probs;
  std::vector<Tensor<Real>> domain_probs;  // index 1 = "belongs to domain i"
  std::optional<layers::AttentionOutput<Real>> attention;
  Tensor<Real> repr;
  Tensor<Real> domain_input;  // invalid for non-adversarial variants
};

template <typename Real>
ForwardGraph<Real> forward_graph(Tape<Real>& tape, const Model<Real>& model,
                                 const Example& example, const ForwardOptions& options = {});

struct ForwardOutput {
  std::array<double, 3> stance_probs{};
  std::vector<std::array<double, 2>> domain_probs;
  std::optional<std::vector<double>> attention;
  std::vector<double> repr;

  Stance predicted() const;
};

template <typename Real>
ForwardOutput model_forward(const Model<Real>& model, const Example& example, bool train_mode,
                            Rng* rng);

}  // namespace stancegen
