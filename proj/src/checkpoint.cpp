#include "stancegen/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "stancegen/errors.hpp"
#include "stancegen/random.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace stancegen {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'G', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void str(std::string_view s) {
    pod<std::uint64_t>(s.size());
    buf_.append(s);
  }
  template <typename T>
  void array(const std::vector<T>& v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T));
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s(b_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  template <typename T>
  std::vector<T> array(std::uint64_t n) {
    if (n > (b_.size() - pos_) / sizeof(T)) fail("array length exceeds file size");
    std::vector<T> v(n);
    std::memcpy(v.data(), b_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return v;
  }
  bool done() const { return pos_ == b_.size(); }

  [[noreturn]] static void fail(const std::string& what) {
    throw CheckpointError("invalid checkpoint: " + what);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > b_.size() - pos_) fail("truncated");
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc{} || r.ptr != end) {
    throw CheckpointError("invalid checkpoint: bad value for spec key '" + std::string(key) + "'");
  }
  return v;
}

template <typename Real>
Model<Real> restore_model(Reader& in, const ModelSpec& spec,
                          std::shared_ptr<const EmbeddingMatrix> emb) {
  Model<Real> model(spec, std::move(emb));
  const auto count = in.pod<std::uint32_t>();
  if (count != model.parameters().size()) {
    Reader::fail("expected " + std::to_string(model.parameters().size()) + " parameters, found " +
                 std::to_string(count));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = in.str();
    const auto group = in.pod<std::uint8_t>();
    const auto rank = in.pod<std::uint8_t>();
    const auto d0 = in.pod<std::uint64_t>();
    const auto d1 = in.pod<std::uint64_t>();
    Parameter<Real>* p = model.find(name);
    if (!p) Reader::fail("unknown parameter '" + name + "'");
    if (p->shape.rank() != rank || p->shape.rows() != d0 || p->shape.cols() != d1 ||
        static_cast<std::uint8_t>(p->group) != group) {
      Reader::fail("parameter '" + name + "' does not match the model layout");
    }
    p->value = in.template array<Real>(p->value.size());
  }
  return model;
}

}  // namespace

std::string format_spec(const ModelSpec& spec) {
  std::ostringstream os;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", spec.dropout);
  os << "variant=" << variant_name(spec.variant) << "\n"
     << "embed_dim=" << spec.embed_dim << "\n"
     << "hidden_dim=" << spec.hidden_dim << "\n"
     << "attn_dim=" << spec.attn_dim << "\n"
     << "mlp_dim=" << spec.mlp_dim << "\n"
     << "num_stance_classes=" << spec.num_stance_classes << "\n"
     << "num_domains=" << spec.num_domains << "\n"
     << "dropout=" << buf << "\n";
  return os.str();
}

ModelSpec parse_spec(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) Reader::fail("malformed spec line");
    kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  auto get = [&](std::string_view key) -> std::string_view {
    auto it = kv.find(key);
    if (it == kv.end()) Reader::fail("spec lacks '" + std::string(key) + "'");
    return it->second;
  };
  ModelSpec s;
  try {
    s.variant = parse_variant(get("variant"));
  } catch (const ConfigError& e) {
    Reader::fail(e.what());
  }
  s.embed_dim = parse_number<std::size_t>("embed_dim", get("embed_dim"));
  s.hidden_dim = parse_number<std::size_t>("hidden_dim", get("hidden_dim"));
  s.attn_dim = parse_number<std::size_t>("attn_dim", get("attn_dim"));
  s.mlp_dim = parse_number<std::size_t>("mlp_dim", get("mlp_dim"));
  s.num_stance_classes = parse_number<std::size_t>("num_stance_classes", get("num_stance_classes"));
  s.num_domains = parse_number<std::size_t>("num_domains", get("num_domains"));
  s.dropout = parse_number<double>("dropout", get("dropout"));
  try {
    s.validate();
  } catch (const ConfigError& e) {
    Reader::fail(e.what());
  }
  return s;
}

template <typename Real>
std::string encode_checkpoint(const Model<Real>& model, const Vocabulary& vocab,
                              const std::vector<std::string>& domain_names) {
  const auto& emb = model.embeddings();
  if (emb.rows != vocab.size()) {
    throw ArgumentError("encode_checkpoint: embedding rows do not match vocabulary size");
  }
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint8_t>(std::is_same_v<Real, double> ? 1 : 0);
  w.str(format_spec(model.spec()));
  w.pod<std::uint64_t>(vocab.hash());
  w.str(vocab.serialize());
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(domain_names.size()));
  for (const auto& d : domain_names) w.str(d);
  w.pod<std::uint64_t>(emb.rows);
  w.pod<std::uint64_t>(emb.dim);
  w.pod<std::uint8_t>(emb.frozen ? 1 : 0);
  w.array(emb.values);
  const auto params = model.parameters();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.str(p->name);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(p->group));
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(p->shape.rank()));
    w.pod<std::uint64_t>(p->shape.rows());
    w.pod<std::uint64_t>(p->shape.cols());
    w.array(p->value);
  }
  const std::uint64_t sum = fnv1a64(w.bytes());
  w.pod<std::uint64_t>(sum);
  return std::move(w.bytes());
}

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const Model<Real>& model,
                     const Vocabulary& vocab, const std::vector<std::string>& domain_names) {
  const std::string bytes = encode_checkpoint(model, vocab, domain_names);
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint " + path.string());
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic + sizeof(std::uint64_t) ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    Reader::fail("not a checkpoint file");
  }
  const auto body = bytes.substr(0, bytes.size() - sizeof(std::uint64_t));
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), sizeof stored);
  if (fnv1a64(body) != stored) Reader::fail("checksum mismatch (file corrupted)");

  Reader in(body.substr(sizeof kMagic));
  const auto version = in.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    Reader::fail("unsupported version " + std::to_string(version));
  }
  const auto prec = in.pod<std::uint8_t>();
  if (prec > 1) Reader::fail("unknown precision tag");

  const Precision precision = prec ? Precision::Float64 : Precision::Float32;
  const ModelSpec spec = parse_spec(in.str());
  const auto vocab_hash = in.pod<std::uint64_t>();
  Vocabulary vocab;
  try {
    vocab = Vocabulary::deserialize(in.str());
  } catch (const DataError& e) {
    Reader::fail(e.what());
  }
  if (vocab.hash() != vocab_hash) Reader::fail("vocabulary hash mismatch");
  std::vector<std::string> domains;
  const auto ndom = in.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < ndom; ++i) domains.push_back(in.str());

  auto emb = std::make_shared<EmbeddingMatrix>();
  emb->rows = in.pod<std::uint64_t>();
  emb->dim = in.pod<std::uint64_t>();
  emb->frozen = in.pod<std::uint8_t>() != 0;
  if (emb->rows != vocab.size() || emb->dim != spec.embed_dim) {
    Reader::fail("embedding matrix does not match vocabulary and spec");
  }
  if (emb->dim != 0 && emb->rows > std::numeric_limits<std::uint64_t>::max() / emb->dim) {
    Reader::fail("embedding matrix too large");
  }
  emb->values = in.array<double>(emb->rows * emb->dim);

  auto build = [&]() -> std::variant<Model<float>, Model<double>> {
    if (precision == Precision::Float64) return restore_model<double>(in, spec, emb);
    return restore_model<float>(in, spec, emb);
  };
  Checkpoint ck{precision, spec, std::move(vocab), std::move(domains), build()};
  if (!in.done()) Reader::fail("trailing bytes");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

template std::string encode_checkpoint(const Model<float>&, const Vocabulary&,
                                       const std::vector<std::string>&);
template std::string encode_checkpoint(const Model<double>&, const Vocabulary&,
                                       const std::vector<std::string>&);
template void save_checkpoint(const std::filesystem::path&, const Model<float>&,
                              const Vocabulary&, const std::vector<std::string>&);
template void save_checkpoint(const std::filesystem::path&, const Model<double>&,
                              const Vocabulary&, const std::vector<std::string>&);

}  // namespace stancegen
