#pragma once
// Generated corpora for tests and for the domain-shift experiment. Tokens
// are produced directly (no tokenizer round trip); corpora come back
// indexed against a vocabulary built from the training split.
//
// Generated words have no pretrained vectors, so each gets a hashed
// stand-in with entries in [-kStandInScale, kStandInScale] (std 0.58, near the
// spread of GloVe coordinates). The +-0.05 OOV vectors used for real data are
// too small to drive training on their own.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stancegen/data.hpp"

namespace stancegen::synthetic {

struct Dataset {
  Corpus train;
  Corpus dev;
  Corpus test;
  std::vector<std::string> domain_names;
  Vocabulary vocab;
  std::shared_ptr<const EmbeddingMatrix> embeddings;
};

inline constexpr double kStandInScale = 1.0;

// Stand-in vectors for every vocabulary row (PAD stays zero).
EmbeddingMatrix stand_in_embeddings(const Vocabulary& vocab, std::size_t dim);

// Builds the vocabulary from `train`, indexes all three splits and attaches
// stand-in embeddings of the given width.
Dataset finalize(Corpus train, Corpus dev, Corpus test, std::vector<std::string> domain_names,
                 std::size_t embed_dim);

// Two classes (FAVOR / AGAINST), one target. Each sentence carries exactly
// one label word among filler words, so the classes are linearly separable
// from bag-of-words features. Dev and test are drawn from the same process.
struct SeparableConfig {
  std::size_t train_size = 64;
  std::size_t eval_size = 32;
  std::size_t embed_dim = 8;
  std::uint64_t seed = 1;
};
Dataset make_separable(const SeparableConfig& cfg);

// Source domains d = 0..num_domains-1 plus one held-out domain (the test
// split). Stance is carried by shared cue words, each flipped with
// probability cue_noise. Every sentence of domain d also contains the
// domain's marker word, and the domain's stance is skewed: FAVOR with
// probability majority_rate for even d, AGAINST for odd d. The marker is
// therefore a spurious stance signal inside the sources. Held-out sentences
// carry the marker of a source domain whose majority stance is the opposite
// of their own. Dev is drawn from the source domains.
struct DomainShiftConfig {
  std::size_t num_domains = 4;
  std::size_t train_per_domain = 200;
  std::size_t dev_per_domain = 50;
  std::size_t heldout_size = 400;
  std::size_t cue_words = 6;      // per class
  std::size_t filler_words = 24;
  std::size_t min_fillers = 2;
  std::size_t max_fillers = 5;
  double cue_noise = 0.1;
  double majority_rate = 0.9;
  std::size_t embed_dim = 16;
  std::uint64_t seed = 1;
};
Dataset make_domain_shift(const DomainShiftConfig& cfg);

}  // namespace stancegen::synthetic
