#include <doctest.h>

#include <string>

#include "stancegen/checkpoint.hpp"
#include "stancegen/errors.hpp"
#include "stancegen/synthetic.hpp"
#include "../support/fake_semeval.hpp"

using namespace stancegen;

namespace {

template <typename Real>
Model<Real> small_model(const synthetic::Dataset& d, Variant v = Variant::BCAInvarSpec) {
  ModelSpec spec;
  spec.variant = v;
  spec.embed_dim = d.embeddings->dim;
  spec.hidden_dim = 3;
  spec.attn_dim = 5;
  spec.mlp_dim = 2;
  spec.num_domains = 4;
  spec.dropout = 0.25;
  return build_model<Real>(spec, 7, d.embeddings);
}

synthetic::Dataset data() {
  synthetic::DomainShiftConfig c;
  c.train_per_domain = 5;
  c.dev_per_domain = 2;
  c.heldout_size = 4;
  c.embed_dim = 4;
  return synthetic::make_domain_shift(c);
}

template <typename Real>
void check_round_trip() {
  const auto d = data();
  auto m = small_model<Real>(d);
  const auto bytes = encode_checkpoint(m, d.vocab, d.domain_names);
  const auto ck = decode_checkpoint(bytes);
  CHECK(ck.precision == (sizeof(Real) == 4 ? Precision::Float32 : Precision::Float64));
  CHECK(format_spec(ck.spec) == format_spec(m.spec()));
  CHECK(ck.vocab == d.vocab);
  CHECK(ck.domain_names == d.domain_names);
  const auto& back = std::get<Model<Real>>(ck.model);
  CHECK(back.embeddings().values == m.embeddings().values);
  const auto a = m.parameters(), b = back.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->group == b[i]->group);
    CHECK(a[i]->value == b[i]->value);
  }
  for (const auto& ex : d.test.examples) {
    CHECK(model_forward(m, ex, false, nullptr).stance_probs ==
          model_forward(back, ex, false, nullptr).stance_probs);
  }
  // Encoding is a pure function of the model.
  CHECK(encode_checkpoint(back, ck.vocab, ck.domain_names) == bytes);
}

}  // namespace

TEST_CASE("round trip is exact (float)") { check_round_trip<float>(); }
TEST_CASE("round trip is exact (double)") { check_round_trip<double>(); }

TEST_CASE("spec text round trip") {
  ModelSpec s;
  s.variant = Variant::ConcatInvar;
  s.embed_dim = 50;
  s.hidden_dim = 7;
  s.attn_dim = 3;
  s.num_domains = 4;
  s.dropout = 0.125;
  const auto back = parse_spec(format_spec(s));
  CHECK(back.variant == s.variant);
  CHECK(back.hidden_dim == 7);
  CHECK(back.attn_dim == 3);
  CHECK(back.dropout == 0.125);
  CHECK_THROWS_AS(parse_spec("variant=Nope"), CheckpointError);
}

TEST_CASE("corruption is detected") {
  const auto d = data();
  auto m = small_model<float>(d);
  const auto bytes = encode_checkpoint(m, d.vocab, d.domain_names);

  SUBCASE("every truncation") {
    for (std::size_t n = 0; n < bytes.size(); n += 1 + n / 8) {
      CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, n)), CheckpointError);
    }
  }
  SUBCASE("single flipped bytes") {
    for (std::size_t pos = 0; pos < bytes.size(); pos += 1 + pos / 16) {
      auto bad = bytes;
      bad[pos] = static_cast<char>(bad[pos] ^ 0x5a);
      CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
    }
  }
  SUBCASE("trailing garbage") { CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), CheckpointError); }
  SUBCASE("not a checkpoint") { CHECK_THROWS_AS(decode_checkpoint("hello world"), CheckpointError); }
}

TEST_CASE("files") {
  const auto dir = testsupport::scratch_dir("ckpt_test");
  const auto d = data();
  auto m = small_model<double>(d, Variant::Concat);
  save_checkpoint(dir / "m.ckpt", m, d.vocab, d.domain_names);
  const auto ck = load_checkpoint(dir / "m.ckpt");
  CHECK(ck.spec.variant == Variant::Concat);
  CHECK(std::holds_alternative<Model<double>>(ck.model));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), CheckpointError);
  std::filesystem::remove_all(dir);
}
