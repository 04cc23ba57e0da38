#include <catch2/catch.hpp>

#include "mrasp/decode.hpp"
#include "oracles.hpp"

using namespace mrasp;

static ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.model_dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 16;
  cfg.max_positions = 8;
  cfg.vocab_size = 11;
  cfg.dropout = 0.0;
  return cfg;
}

TEST_CASE("beam=1 equals greedy decoding exactly") {
  auto p = init_parameters(tiny_config(), 31);
  for (uint64_t which = 0; which < 4; ++which) {
    std::vector<TokenId> src{TokenId(4 + which), 5, 2};
    DecodeOptions opts;
    opts.beam = 1;
    opts.max_len = 6;
    auto beam = beam_search_decode(p, src, opts);
    auto greedy = greedy_decode(p, src, opts);
    CHECK(beam.ids == greedy.ids);
    CHECK(beam.score == Approx(greedy.score).margin(1e-12));
  }
}

TEST_CASE("beam with forced max_len 1 returns [eos] scored log P(eos)") {
  auto p = init_parameters(tiny_config(), 8);
  std::vector<TokenId> src{4, 2};
  DecodeOptions opts;
  opts.beam = 3;
  opts.max_len = 1;
  auto hyp = beam_search_decode(p, src, opts);
  REQUIRE(hyp.ids == std::vector<TokenId>{Vocabulary::kEos});
  Mat logits = forward(p, src, {Vocabulary::kBos});
  auto lp = oracles::log_softmax_last_row(logits);
  CHECK(hyp.score == Approx(lp[Vocabulary::kEos]).margin(1e-12));
  CHECK(hyp.score <= 0.0);
}

TEST_CASE("beam=vocab_size with max_len 3 matches exhaustive enumeration") {
  auto p = init_parameters(tiny_config(), 1234);
  for (uint64_t s : {0u, 1u, 2u}) {
    std::vector<TokenId> src{TokenId(4 + s), TokenId(7 - s), 2};
    DecodeOptions opts;
    opts.beam = 11;
    opts.max_len = 3;
    auto beam = beam_search_decode(p, src, opts);
    auto oracle = oracles::exhaustive_best_sequence(p, src, 3);
    CHECK(beam.ids == oracle.ids);
    CHECK(beam.score == Approx(oracle.score).margin(1e-10));
  }
}

TEST_CASE("wider beams never return a worse best hypothesis") {
  auto p = init_parameters(tiny_config(), 555);
  std::vector<TokenId> src{6, 9, 2};
  DecodeOptions opts;
  opts.max_len = 3;
  double prev = -1e300;
  for (size_t beam : {1u, 2u, 4u, 11u}) {
    opts.beam = beam;
    auto hyp = beam_search_decode(p, src, opts);
    CHECK(hyp.score >= prev - 1e-12);
    prev = hyp.score;
  }
  // and the widest beam agrees with the exhaustive optimum
  auto oracle = oracles::exhaustive_best_sequence(p, src, 3);
  CHECK(prev == Approx(oracle.score).margin(1e-10));
}

TEST_CASE("best score is monotone in the max_len budget") {
  auto p = init_parameters(tiny_config(), 91);
  std::vector<TokenId> src{6, 4, 2};
  double prev = -1e300;
  for (size_t max_len : {1u, 2u, 3u, 4u, 6u}) {
    DecodeOptions opts;
    opts.beam = 11;
    opts.max_len = max_len;
    auto hyp = beam_search_decode(p, src, opts);
    CHECK(hyp.score >= prev - 1e-12);  // a tighter budget cannot score higher
    prev = hyp.score;
  }
}

TEST_CASE("hypotheses end in eos and respect max_len") {
  auto p = init_parameters(tiny_config(), 77);
  std::vector<TokenId> src{5, 2};
  for (size_t max_len : {1u, 2u, 4u, 6u}) {
    DecodeOptions opts;
    opts.beam = 4;
    opts.max_len = max_len;
    auto hyp = beam_search_decode(p, src, opts);
    REQUIRE_FALSE(hyp.ids.empty());
    CHECK(hyp.ids.back() == Vocabulary::kEos);
    CHECK(hyp.ids.size() <= max_len);
    CHECK(hyp.score <= 0.0);
  }
}

TEST_CASE("forced prefix constrains and is scored") {
  auto p = init_parameters(tiny_config(), 21);
  std::vector<TokenId> src{4, 5, 2};
  DecodeOptions opts;
  opts.beam = 3;
  opts.max_len = 5;
  opts.forced_prefix = {9};
  auto hyp = beam_search_decode(p, src, opts);
  REQUIRE(hyp.ids.size() >= 2);
  CHECK(hyp.ids.front() == 9);
  CHECK(hyp.ids.back() == Vocabulary::kEos);
}
