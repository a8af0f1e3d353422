#include "stancegen/synthetic.hpp"

#include "stancegen/errors.hpp"
#include "stancegen/random.hpp"

namespace stancegen::synthetic {

namespace {

std::string join(const std::vector<std::string>& toks) {
  std::string s;
  for (const auto& t : toks) {
    if (!s.empty()) s += ' ';
    s += t;
  }
  return s;
}

Example make_example(std::string id, const std::string& target, std::vector<std::string> tokens,
                     Stance stance, std::optional<std::size_t> domain) {
  Example ex;
  ex.id = std::move(id);
  ex.target = target;
  ex.target_tokens = {target};
  ex.text = join(tokens);
  ex.sentence_tokens = std::move(tokens);
  ex.stance = stance;
  ex.domain = domain;
  return ex;
}

std::vector<std::string> word_list(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Inserts `word` at a uniformly random position.
void insert_random(std::vector<std::string>& toks, std::string word, Rng& rng) {
  const auto pos = rng.below(toks.size() + 1);
  toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(pos), std::move(word));
}

}  // namespace

EmbeddingMatrix stand_in_embeddings(const Vocabulary& vocab, std::size_t dim) {
  EmbeddingMatrix m = fallback_embeddings(vocab, dim);
  for (double& v : m.values) v *= kStandInScale / 0.05;
  return m;
}

Dataset finalize(Corpus train, Corpus dev, Corpus test, std::vector<std::string> domain_names,
                 std::size_t embed_dim) {
  Dataset d;
  const Corpus* sources[] = {&train};
  d.vocab = build_vocab(sources);
  index_corpus(train, d.vocab);
  index_corpus(dev, d.vocab);
  index_corpus(test, d.vocab);
  d.train = std::move(train);
  d.dev = std::move(dev);
  d.test = std::move(test);
  d.domain_names = std::move(domain_names);
  d.embeddings = std::make_shared<EmbeddingMatrix>(stand_in_embeddings(d.vocab, embed_dim));
  return d;
}

Dataset make_separable(const SeparableConfig& cfg) {
  if (cfg.train_size == 0 || cfg.eval_size == 0) throw ArgumentError("make_separable: empty split");
  Rng rng = Rng::derive(cfg.seed, "separable");
  const auto fillers = word_list("w", 10);
  auto draw = [&](const std::string& tag, std::size_t n) {
    Corpus c;
    for (std::size_t i = 0; i < n; ++i) {
      const Stance s = i % 2 == 0 ? Stance::Favor : Stance::Against;
      std::vector<std::string> toks;
      const auto len = 2 + rng.below(3);
      for (std::size_t k = 0; k < len; ++k) toks.push_back(fillers[rng.below(fillers.size())]);
      insert_random(toks, s == Stance::Favor ? "good" : "bad", rng);
      c.examples.push_back(make_example(tag + std::to_string(i), "topic", std::move(toks), s, 0));
    }
    return c;
  };
  Corpus train = draw("train", cfg.train_size);
  Corpus dev = draw("dev", cfg.eval_size);
  Corpus test = draw("test", cfg.eval_size);
  return finalize(std::move(train), std::move(dev), std::move(test), {"topic"}, cfg.embed_dim);
}

Dataset make_domain_shift(const DomainShiftConfig& cfg) {
  if (cfg.num_domains < 2) throw ArgumentError("make_domain_shift: need at least two domains");
  if (cfg.cue_words == 0 || cfg.filler_words == 0 || cfg.min_fillers > cfg.max_fillers) {
    throw ArgumentError("make_domain_shift: bad vocabulary configuration");
  }
  Rng rng = Rng::derive(cfg.seed, "domain-shift");
  const auto fav_cues = word_list("pro", cfg.cue_words);
  const auto ag_cues = word_list("con", cfg.cue_words);
  const auto fillers = word_list("w", cfg.filler_words);

  auto sentence = [&](Stance s, const std::string* marker) {
    std::vector<std::string> toks;
    const auto n = cfg.min_fillers + rng.below(cfg.max_fillers - cfg.min_fillers + 1);
    for (std::size_t k = 0; k < n; ++k) toks.push_back(fillers[rng.below(fillers.size())]);
    const bool flip = rng.uniform01() < cfg.cue_noise;
    const bool favor_cue = (s == Stance::Favor) != flip;
    const auto& cues = favor_cue ? fav_cues : ag_cues;
    insert_random(toks, cues[rng.below(cues.size())], rng);
    if (marker) insert_random(toks, *marker, rng);
    return toks;
  };

  std::vector<std::string> names, markers;
  for (std::size_t d = 0; d < cfg.num_domains; ++d) {
    names.push_back("topic" + std::to_string(d));
    markers.push_back("mark" + std::to_string(d));
  }
  auto majority = [](std::size_t d) { return d % 2 == 0 ? Stance::Favor : Stance::Against; };
  auto other = [](Stance s) { return s == Stance::Favor ? Stance::Against : Stance::Favor; };

  auto source = [&](const std::string& tag, std::size_t per_domain) {
    Corpus c;
    for (std::size_t d = 0; d < cfg.num_domains; ++d) {
      for (std::size_t i = 0; i < per_domain; ++i) {
        const Stance s = rng.uniform01() < cfg.majority_rate ? majority(d) : other(majority(d));
        c.examples.push_back(make_example(tag + std::to_string(d) + "_" + std::to_string(i),
                                          names[d], sentence(s, &markers[d]), s, d));
      }
    }
    return c;
  };
  Corpus train = source("train", cfg.train_per_domain);
  Corpus dev = source("dev", cfg.dev_per_domain);

  // Balanced held-out domain; every sentence carries the marker of a source
  // domain whose majority stance is the opposite of its own.
  Corpus heldout;
  const std::string held_name = "topic" + std::to_string(cfg.num_domains);
  for (std::size_t i = 0; i < cfg.heldout_size; ++i) {
    const Stance s = i % 2 == 0 ? Stance::Favor : Stance::Against;
    std::vector<std::size_t> flipped;
    for (std::size_t d = 0; d < cfg.num_domains; ++d) {
      if (majority(d) != s) flipped.push_back(d);
    }
    const std::string* m = &markers[flipped[rng.below(flipped.size())]];
    heldout.examples.push_back(
        make_example("held_" + std::to_string(i), held_name, sentence(s, m), s, std::nullopt));
  }
  return finalize(std::move(train), std::move(dev), std::move(heldout), std::move(names),
                  cfg.embed_dim);
}

}  // namespace stancegen::synthetic
