#include <doctest.h>

#include <algorithm>
#include <string>

#include "stancegen/errors.hpp"
#include "stancegen/synthetic.hpp"

using namespace stancegen;

namespace {

bool has(const Example& e, const std::string& tok) {
  return std::find(e.sentence_tokens.begin(), e.sentence_tokens.end(), tok) != e.sentence_tokens.end();
}

int marker_of(const Example& e) {
  for (int d = 0; d < 4; ++d) {
    if (has(e, "mark" + std::to_string(d))) return d;
  }
  return -1;
}

}  // namespace

TEST_CASE("separable corpus") {
  auto d = synthetic::make_separable({});
  CHECK(d.train.size() == 64);
  CHECK(d.dev.size() == 32);
  for (const auto& e : d.train.examples) {
    CHECK(has(e, e.stance == Stance::Favor ? "good" : "bad"));
    CHECK(!has(e, e.stance == Stance::Favor ? "bad" : "good"));
    CHECK(e.sentence_ids.size() == e.sentence_tokens.size());
  }
  CHECK(d.embeddings->rows == d.vocab.size());
  CHECK(d.embeddings->dim == 8);
}

TEST_CASE("domain-shift corpus") {
  synthetic::DomainShiftConfig cfg;
  auto d = synthetic::make_domain_shift(cfg);
  CHECK(d.domain_names.size() == 4);
  CHECK(d.train.size() == 4 * cfg.train_per_domain);
  CHECK(d.test.size() == cfg.heldout_size);

  SUBCASE("every source sentence carries its own domain marker") {
    for (const auto& e : d.train.examples) {
      REQUIRE(e.domain.has_value());
      CHECK(marker_of(e) == static_cast<int>(*e.domain));
    }
  }
  SUBCASE("marker correlates with stance inside the sources") {
    std::size_t agree = 0;
    for (const auto& e : d.train.examples) {
      const Stance majority = *e.domain % 2 == 0 ? Stance::Favor : Stance::Against;
      agree += e.stance == majority;
    }
    const double rate = static_cast<double>(agree) / static_cast<double>(d.train.size());
    CHECK(rate == doctest::Approx(cfg.majority_rate).epsilon(0.05));
  }
  SUBCASE("marker is anti-correlated in the held-out domain") {
    std::size_t favor = 0;
    for (const auto& e : d.test.examples) {
      CHECK(!e.domain.has_value());
      const int m = marker_of(e);
      REQUIRE(m >= 0);
      const Stance majority = m % 2 == 0 ? Stance::Favor : Stance::Against;
      CHECK(e.stance != majority);
      favor += e.stance == Stance::Favor;
    }
    CHECK(favor * 2 == d.test.size());
  }
  SUBCASE("cue words are shared and mostly reliable") {
    std::size_t right = 0;
    for (const auto& e : d.train.examples) {
      bool pro = false;
      for (const auto& t : e.sentence_tokens) pro = pro || t.rfind("pro", 0) == 0;
      right += pro == (e.stance == Stance::Favor);
    }
    const double rate = static_cast<double>(right) / static_cast<double>(d.train.size());
    CHECK(rate == doctest::Approx(1.0 - cfg.cue_noise).epsilon(0.05));
  }
  SUBCASE("deterministic in the seed") {
    auto again = synthetic::make_domain_shift(cfg);
    CHECK(again.vocab == d.vocab);
    CHECK(again.test.examples[5].text == d.test.examples[5].text);
  }
  SUBCASE("bad configurations") {
    auto bad = cfg;
    bad.num_domains = 1;
    CHECK_THROWS_AS(synthetic::make_domain_shift(bad), ArgumentError);
  }
}
