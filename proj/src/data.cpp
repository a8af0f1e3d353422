#include "stancegen/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

#include "stancegen/errors.hpp"
#include "stancegen/random.hpp"

namespace stancegen {

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_word_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

}  // namespace

std::string_view stance_name(Stance s) {
  switch (s) {
    case Stance::Favor: return "FAVOR";
    case Stance::Against: return "AGAINST";
    case Stance::None: return "NONE";
  }
  return "?";
}

std::optional<Stance> parse_stance(std::string_view s) {
  const std::string l = lower_ascii(trim(s));
  if (l == "favor") return Stance::Favor;
  if (l == "against") return Stance::Against;
  if (l == "none") return Stance::None;
  return std::nullopt;
}

std::map<std::string, std::size_t> Corpus::target_counts() const {
  std::map<std::string, std::size_t> counts;
  for (const auto& e : examples) ++counts[e.target];
  return counts;
}

std::array<std::size_t, kNumStances> Corpus::label_counts() const {
  std::array<std::size_t, kNumStances> counts{};
  for (const auto& e : examples) ++counts[static_cast<std::size_t>(e.stance)];
  return counts;
}

// ---------------------------------------------------------------------------
// TSV

Corpus parse_semeval_tsv(std::istream& in, const std::string& source) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 4) {
      throw ParseError(source + ":" + std::to_string(line_no) +
                       ": expected 4 tab-separated columns (ID, Target, Tweet, Stance), found " +
                       std::to_string(fields.size()));
    }
    const auto stance = parse_stance(fields[3]);
    if (!stance) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": unknown stance '" +
                       std::string(fields[3]) + "'");
    }
    Example ex;
    ex.id = trim(fields[0]);
    ex.target = trim(fields[1]);
    ex.text = std::string(fields[2]);
    ex.stance = *stance;
    ex.target_tokens = tokenize(ex.target);
    ex.sentence_tokens = tokenize(ex.text);
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

Corpus parse_semeval_tsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  return parse_semeval_tsv(in, path.string());
}

// ---------------------------------------------------------------------------
// Tokenization

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    std::size_t end = i;
    while (end < n && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    const std::string_view chunk = text.substr(i, end - i);
    i = end;

    if (starts_with_ci(chunk, "http://") || starts_with_ci(chunk, "https://") ||
        starts_with_ci(chunk, "www.")) {
      tokens.emplace_back("<url>");
      continue;
    }
    const std::string lowered = lower_ascii(chunk);
    if (lowered == "<url>" || lowered == "<user>" || lowered == Vocabulary::kUnkToken) {
      tokens.push_back(lowered);
      continue;
    }
    std::size_t k = 0;
    while (k < lowered.size()) {
      const auto c = static_cast<unsigned char>(lowered[k]);
      const bool next_is_word =
          k + 1 < lowered.size() && is_word_char(static_cast<unsigned char>(lowered[k + 1]));
      if (c == '@' && next_is_word) {
        ++k;
        while (k < lowered.size() && is_word_char(static_cast<unsigned char>(lowered[k]))) ++k;
        tokens.emplace_back("<user>");
      } else if (c == '#' && next_is_word) {
        ++k;  // hashtag body is tokenized as a plain word
      } else if (is_word_char(c)) {
        const std::size_t start = k;
        while (k < lowered.size() && is_word_char(static_cast<unsigned char>(lowered[k]))) ++k;
        tokens.emplace_back(lowered.substr(start, k - start));
      } else {
        tokens.emplace_back(1, static_cast<char>(c));
        ++k;
      }
    }
  }
  if (tokens.empty()) tokens.emplace_back(Vocabulary::kUnkToken);
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  tokens_ = {std::string(kPadToken), std::string(kUnkToken)};
  ids_ = {{std::string(kPadToken), kPad}, {std::string(kUnkToken), kUnk}};
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  Vocabulary v;
  for (const auto& t : tokens) {
    if (v.ids_.count(t)) continue;
    v.ids_.emplace(t, static_cast<std::int32_t>(v.tokens_.size()));
    v.tokens_.push_back(t);
  }
  return v;
}

std::int32_t Vocabulary::id(std::string_view token) const {
  return find(token).value_or(kUnk);
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\t';
    out += std::to_string(i);
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    const std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    const std::size_t tab = line.rfind('\t');
    if (tab == std::string_view::npos) {
      throw FormatError("vocabulary line " + std::to_string(line_no + 1) + ": missing tab");
    }
    std::size_t id = 0;
    const auto idtext = line.substr(tab + 1);
    auto [p, ec] = std::from_chars(idtext.data(), idtext.data() + idtext.size(), id);
    if (ec != std::errc() || id != line_no) {
      throw FormatError("vocabulary line " + std::to_string(line_no + 1) + ": bad id");
    }
    if (line_no >= 2) tokens.emplace_back(line.substr(0, tab));
    ++line_no;
  }
  if (line_no < 2) throw FormatError("vocabulary lacks reserved entries");
  return from_tokens(tokens);
}

std::uint64_t Vocabulary::hash() const { return fnv1a64(serialize()); }

Vocabulary build_vocab(std::span<const Corpus* const> corpora, std::size_t min_count) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const Corpus* c : corpora) {
    for (const auto& e : c->examples) {
      for (const auto& t : e.target_tokens) ++counts[t];
      for (const auto& t : e.sentence_tokens) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> entries;
  for (auto& [tok, n] : counts) {
    if (tok == Vocabulary::kPadToken || tok == Vocabulary::kUnkToken) continue;
    if (n >= min_count) entries.emplace_back(tok, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> ordered;
  ordered.reserve(entries.size());
  for (auto& e : entries) ordered.push_back(std::move(e.first));
  return Vocabulary::from_tokens(ordered);
}

void index_corpus(Corpus& corpus, const Vocabulary& vocab) {
  for (auto& e : corpus.examples) {
    e.target_ids.clear();
    e.sentence_ids.clear();
    for (const auto& t : e.target_tokens) e.target_ids.push_back(vocab.id(t));
    for (const auto& t : e.sentence_tokens) e.sentence_ids.push_back(vocab.id(t));
  }
}

// ---------------------------------------------------------------------------
// Embeddings

std::vector<double> fallback_vector(std::string_view token, std::size_t dim) {
  Rng rng(fnv1a64(token));
  std::vector<double> v(dim);
  for (double& x : v) x = rng.uniform(-0.05, 0.05);
  return v;
}

EmbeddingMatrix fallback_embeddings(const Vocabulary& vocab, std::size_t dim) {
  EmbeddingMatrix m;
  m.rows = vocab.size();
  m.dim = dim;
  m.values.assign(m.rows * dim, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    if (static_cast<std::int32_t>(r) == Vocabulary::kPad) continue;
    auto v = fallback_vector(vocab.token(static_cast<std::int32_t>(r)), dim);
    std::copy(v.begin(), v.end(), m.values.begin() + static_cast<std::ptrdiff_t>(r * dim));
  }
  return m;
}

EmbeddingMatrix load_embeddings(std::istream& in, const Vocabulary& vocab, std::size_t dim) {
  if (dim == 0) throw ArgumentError("load_embeddings: dimension must be positive");
  EmbeddingMatrix m = fallback_embeddings(vocab, dim);
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> row(dim);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end && *p == ' ') ++p;
    const char* tok_begin = p;
    while (p < end && *p != ' ' && *p != '\t') ++p;
    const std::string_view token(tok_begin, static_cast<std::size_t>(p - tok_begin));
    std::size_t count = 0;
    for (;;) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p >= end) break;
      double v = 0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) {
        throw FormatError("embeddings line " + std::to_string(line_no) + ": bad number");
      }
      if (count < dim) row[count] = v;
      ++count;
      p = next;
    }
    if (count != dim) {
      throw FormatError("embeddings line " + std::to_string(line_no) + ": expected " +
                        std::to_string(dim) + " values, found " + std::to_string(count));
    }
    const auto id = vocab.find(token);
    if (!id || *id == Vocabulary::kPad) continue;
    std::copy(row.begin(), row.end(),
              m.values.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(*id) * dim));
  }
  return m;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                std::size_t dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings file " + path.string());
  return load_embeddings(in, vocab, dim);
}

// ---------------------------------------------------------------------------
// Split

namespace {

struct TargetRole {
  std::vector<std::string_view> aliases;
  std::string_view canonical;
};

const std::array<TargetRole, 4> kSourceTargets{{
    {{"atheism"}, "Atheism"},
    {{"climate change is a real concern", "climate change"}, "Climate Change is a Real Concern"},
    {{"feminist movement"}, "Feminist Movement"},
    {{"legalization of abortion", "legality of abortion"}, "Legalization of Abortion"},
}};
const TargetRole kDevTarget{{"hillary clinton", "hillary"}, "Hillary Clinton"};
const TargetRole kTestTarget{{"donald trump", "trump"}, "Donald Trump"};

bool matches(const TargetRole& role, const std::string& lowered) {
  return std::find(role.aliases.begin(), role.aliases.end(), lowered) != role.aliases.end();
}

}  // namespace

Split make_split(const Corpus& full) {
  Split split;
  std::array<bool, 6> seen{};
  for (const auto& e : full.examples) {
    const std::string t = lower_ascii(trim(e.target));
    bool placed = false;
    for (std::size_t d = 0; d < kSourceTargets.size(); ++d) {
      if (matches(kSourceTargets[d], t)) {
        Example copy = e;
        copy.domain = d;
        split.train.examples.push_back(std::move(copy));
        seen[d] = placed = true;
        break;
      }
    }
    if (placed) continue;
    if (matches(kDevTarget, t)) {
      Example copy = e;
      copy.domain.reset();
      split.dev.examples.push_back(std::move(copy));
      seen[4] = true;
    } else if (matches(kTestTarget, t)) {
      Example copy = e;
      copy.domain.reset();
      split.test.examples.push_back(std::move(copy));
      seen[5] = true;
    }
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    std::string found;
    for (const auto& [name, n] : full.target_counts()) {
      found += (found.empty() ? "" : ", ") + name + " (" + std::to_string(n) + ")";
    }
    throw DataError("dataset lacks required targets; found: " + (found.empty() ? "none" : found));
  }
  for (const auto& r : kSourceTargets) split.domain_names.emplace_back(r.canonical);
  return split;
}

void verify_split_counts(const Split& split, const SplitCounts& expected) {
  std::string problems;
  auto check = [&problems](const char* name, const Corpus& c,
                           const std::array<std::size_t, kNumStances>& want) {
    const auto got = c.label_counts();
    if (got != want) {
      std::ostringstream os;
      os << name << " FAVOR/AGAINST/NONE = " << got[0] << "/" << got[1] << "/" << got[2]
         << " (total " << c.size() << "), expected " << want[0] << "/" << want[1] << "/"
         << want[2] << " (total " << want[0] + want[1] + want[2] << "); ";
      problems += os.str();
    }
  };
  check("train", split.train, expected.train);
  check("dev", split.dev, expected.dev);
  check("test", split.test, expected.test);
  if (!problems.empty()) throw DataError("split counts differ: " + problems);
}

}  // namespace stancegen
