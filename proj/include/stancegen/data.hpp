#pragma once
// Stance corpora: TSV ingestion, tweet tokenization, vocabulary, frozen word
// vectors and the unseen-target split (four source targets for training,
// Hillary Clinton for validation, Donald Trump for testing).

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stancegen {

enum class Stance : std::uint8_t { Favor = 0, Against = 1, None = 2 };
inline constexpr std::size_t kNumStances = 3;

std::string_view stance_name(Stance s);
// Case-insensitive FAVOR / AGAINST / NONE.
std::optional<Stance> parse_stance(std::string_view s);

struct Example {
  std::string id;
  std::string target;
  std::string text;
  std::vector<std::string> target_tokens;
  std::vector<std::string> sentence_tokens;
  std::vector<std::int32_t> target_ids;    // filled by index_corpus
  std::vector<std::int32_t> sentence_ids;  // filled by index_corpus
  Stance stance = Stance::None;
  std::optional<std::size_t> domain;  // present only for source targets
};

struct Corpus {
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  std::map<std::string, std::size_t> target_counts() const;
  std::array<std::size_t, kNumStances> label_counts() const;
};

// Header line, then ID<TAB>Target<TAB>Tweet<TAB>Stance per row.
Corpus parse_semeval_tsv(const std::filesystem::path& path);
Corpus parse_semeval_tsv(std::istream& in, const std::string& source = "<stream>");

// Lowercases, maps URLs to <url> and @-mentions to <user>, strips '#', and
// splits on whitespace and punctuation. Never empty: falls back to <unk>.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  // Tokens for ids 2, 3, ... in order. Reserved tokens are skipped.
  static Vocabulary from_tokens(std::span<const std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::int32_t id(std::string_view token) const;  // kUnk when absent
  std::optional<std::int32_t> find(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  // One "token<TAB>id" line per entry, sorted by id.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  std::uint64_t hash() const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

// Counts target and sentence tokens of the given (training) corpora and
// assigns ids by (count desc, token asc).
Vocabulary build_vocab(std::span<const Corpus* const> corpora, std::size_t min_count = 1);

void index_corpus(Corpus& corpus, const Vocabulary& vocab);

struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;  // row-major rows x dim
  bool frozen = true;

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * dim, dim);
  }
};

// Deterministic vector for a token absent from the embedding file, entries
// in [-0.05, 0.05], seeded by the token's hash.
std::vector<double> fallback_vector(std::string_view token, std::size_t dim);

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                std::size_t dim);
EmbeddingMatrix load_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t dim);
// Every row from fallback_vector (PAD stays zero).
EmbeddingMatrix fallback_embeddings(const Vocabulary& vocab, std::size_t dim);

struct Split {
  Corpus train;
  Corpus dev;
  Corpus test;
  std::vector<std::string> domain_names;
};

Split make_split(const Corpus& full);

// Sample distribution the split must reproduce (FAVOR, AGAINST, NONE).
struct SplitCounts {
  std::array<std::size_t, kNumStances> train{619, 982, 574};
  std::array<std::size_t, kNumStances> dev{224, 722, 332};
  std::array<std::size_t, kNumStances> test{148, 299, 260};
};
// Throws DataError describing every mismatch.
void verify_split_counts(const Split& split, const SplitCounts& expected = {});

}  // namespace stancegen
