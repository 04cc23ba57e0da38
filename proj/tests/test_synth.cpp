#include <catch2/catch.hpp>

#include <set>

#include "mrasp/experiment.hpp"
#include "mrasp/synth.hpp"

using namespace mrasp;

static SynthFamilySpec base_spec() {
  SynthFamilySpec spec;
  spec.num_languages = 3;
  spec.vocab_per_lang = 30;
  spec.min_len = 2;
  spec.max_len = 5;
  spec.seed = 9;
  SynthPairSpec p01;
  p01.src_index = 0;
  p01.tgt_index = 1;
  p01.train_size = 50;
  p01.dev_size = 10;
  p01.test_size = 10;
  SynthPairSpec p12 = p01;
  p12.src_index = 1;
  p12.tgt_index = 2;
  p12.grammar = GrammarSpec::parse("reverse");
  spec.pairs = {p01, p12};
  return spec;
}

TEST_CASE("identity grammar relabels word for word") {
  auto spec = base_spec();
  auto family = generate_family(spec);
  const auto& pd = family.pairs[0];
  auto dict = family.dictionary(0, 1);
  for (const auto& pair : pd.train.pairs) {
    REQUIRE(pair.source.size() == pair.target.size());
    for (size_t j = 0; j < pair.source.size(); ++j)
      CHECK(pair.target[j] == dict.candidates(pair.source[j])->front());
  }
}

TEST_CASE("reverse grammar relabels and reverses") {
  auto spec = base_spec();
  auto family = generate_family(spec);
  const auto& pd = family.pairs[1];
  auto dict = family.dictionary(1, 2);
  for (const auto& pair : pd.train.pairs) {
    const size_t n = pair.source.size();
    for (size_t j = 0; j < n; ++j)
      CHECK(pair.target[j] == dict.candidates(pair.source[n - 1 - j])->front());
  }
}

TEST_CASE("generation replay: dictionary plus permutation reproduces every split") {
  auto spec = base_spec();
  spec.pairs[1].grammar = GrammarSpec::parse("rotate:2");
  auto family = generate_family(spec);
  for (const auto& pd : family.pairs) {
    auto dict = family.dictionary(pd.src_index, pd.tgt_index);
    size_t index = 0;
    for (const ParallelCorpus* split : {&pd.train, &pd.dev, &pd.test}) {
      for (const auto& pair : split->pairs) {
        std::vector<std::string> relabeled;
        for (const auto& w : pair.source) relabeled.push_back(dict.candidates(w)->front());
        for (size_t j = 0; j < relabeled.size(); ++j) {
          const size_t src_pos = pd.grammar.source_position(j, relabeled.size(), index);
          CHECK(pair.target[j] == relabeled[src_pos]);
        }
        ++index;
      }
    }
  }
}

TEST_CASE("families are deterministic in the spec seed") {
  auto a = generate_family(base_spec());
  auto b = generate_family(base_spec());
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (size_t i = 0; i < a.pairs.size(); ++i) {
    REQUIRE(a.pairs[i].train.size() == b.pairs[i].train.size());
    for (size_t j = 0; j < a.pairs[i].train.size(); ++j) {
      CHECK(a.pairs[i].train.pairs[j].source == b.pairs[i].train.pairs[j].source);
      CHECK(a.pairs[i].train.pairs[j].target == b.pairs[i].train.pairs[j].target);
    }
  }
  auto spec_c = base_spec();
  spec_c.seed = 10;
  auto c = generate_family(spec_c);
  bool same = true;
  for (size_t j = 0; j < a.pairs[0].train.size() && same; ++j)
    same = a.pairs[0].train.pairs[j].source == c.pairs[0].train.pairs[j].source;
  CHECK_FALSE(same);
}

TEST_CASE("dictionaries are bijective inverses") {
  auto family = generate_family(base_spec());
  auto fwd = family.dictionary(0, 1);
  auto bwd = family.dictionary(1, 0);
  REQUIRE(fwd.size() == bwd.size());
  std::set<std::string> targets;
  for (const auto& w : fwd.words()) {
    const auto& cands = *fwd.candidates(w);
    REQUIRE(cands.size() == 1);
    targets.insert(cands.front());
    CHECK(bwd.candidates(cands.front())->front() == w);
  }
  CHECK(targets.size() == fwd.size());  // injective
}

TEST_CASE("surface vocabularies are disjoint across languages") {
  auto family = generate_family(base_spec());
  std::set<std::string> all;
  size_t total = 0;
  for (size_t lang = 0; lang < 3; ++lang)
    for (size_t s = 0; s < family.spec.vocab_per_lang; ++s) {
      all.insert(family.word(lang, s));
      ++total;
    }
  CHECK(all.size() == total);
}

TEST_CASE("splits are disjoint") {
  auto family = generate_family(base_spec());
  for (const auto& pd : family.pairs) {
    std::set<std::string> seen;
    size_t total = 0;
    for (const ParallelCorpus* split : {&pd.train, &pd.dev, &pd.test})
      for (const auto& pair : split->pairs) {
        seen.insert(join_words(pair.source));
        ++total;
      }
    CHECK(seen.size() == total);
  }
}

TEST_CASE("infeasible specs are rejected") {
  auto spec = base_spec();
  spec.vocab_per_lang = 2;
  spec.min_len = 1;
  spec.max_len = 1;
  spec.pairs[0].train_size = 500;
  CHECK_THROWS_WITH(generate_family(spec), Catch::Contains("SpecInfeasible"));

  auto bad = base_spec();
  bad.pairs[0].tgt_index = 0;
  CHECK_THROWS_WITH(generate_family(bad), Catch::Contains("SpecInfeasible"));
}

TEST_CASE("training pool tags both directions per pair") {
  auto family = generate_family(base_spec());
  auto pool = family.training_pool({0, 1});
  REQUIRE(pool.size() == 4);
  CHECK(pool[0].src_lang().str() == "aa");
  CHECK(pool[0].tgt_lang().str() == "ab");
  CHECK(pool[1].src_lang().str() == "ab");
  CHECK(pool[1].tgt_lang().str() == "aa");
  auto pair = pool[1].pair(0);
  CHECK(pair.source.front() == "<ab>");
  CHECK(pair.target.front() == "<aa>");
  auto langs = family.pool_language_indices({1});
  CHECK(langs == std::set<size_t>{1, 2});
}

TEST_CASE("every exotic scenario is constructible and labeled") {
  // 4 languages, pairs: 0-1, 0-2, 1-2, 2-3, 0-3; choose pools to realize each
  // taxonomy term for the evaluated pair
  SynthFamilySpec spec;
  spec.num_languages = 4;
  spec.vocab_per_lang = 25;
  spec.min_len = 2;
  spec.max_len = 4;
  spec.seed = 3;
  auto mk = [](size_t s, size_t t) {
    SynthPairSpec p;
    p.src_index = s;
    p.tgt_index = t;
    p.train_size = 30;
    p.dev_size = 5;
    p.test_size = 5;
    return p;
  };
  spec.pairs = {mk(0, 1), mk(0, 2), mk(1, 2), mk(2, 3), mk(0, 3)};
  auto family = generate_family(spec);

  auto label = [&](std::vector<size_t> pool, size_t eval_pair, bool reverse = false) {
    ArmSpec arm;
    arm.pretrain = true;
    arm.pool_pairs = std::move(pool);
    arm.eval_pair = eval_pair;
    arm.eval_reverse = reverse;
    return taxonomy_label(family, arm);
  };
  // eval pair 2 = 1->2, pair 3 = 2->3
  CHECK(label({0}, 0) == "in-pretraining");
  CHECK(label({0, 1}, 2) == "exotic-pair");          // 1,2 seen; pair unseen
  CHECK(label({0, 1}, 3) == "exotic-target");        // src 2 seen, tgt 3 unseen
  CHECK(label({0, 1}, 3, true) == "exotic-source");  // 3->2: src unseen, tgt seen
  CHECK(label({0}, 3) == "exotic-full");             // neither 2 nor 3 seen
  ArmSpec direct;
  direct.pretrain = false;
  CHECK(taxonomy_label(family, direct) == "direct");
}

TEST_CASE("grammar parser round-trips") {
  CHECK(GrammarSpec::parse("identity").kind == GrammarSpec::Kind::kIdentity);
  CHECK(GrammarSpec::parse("reverse").kind == GrammarSpec::Kind::kReverse);
  auto rot = GrammarSpec::parse("rotate:3:2");
  CHECK(rot.kind == GrammarSpec::Kind::kRotate);
  CHECK(rot.rotate_k == 3);
  CHECK(rot.jitter == 2);
  CHECK(GrammarSpec::parse("swap").kind == GrammarSpec::Kind::kSwapAdjacent);
  CHECK_THROWS_WITH(GrammarSpec::parse("zigzag"), Catch::Contains("UnknownGrammar"));
  CHECK(GrammarSpec::parse(rot.str()).rotate_k == 3);
}
