#include <catch2/catch.hpp>

#include <map>

#include "mrasp/ras.hpp"
#include "test_util.hpp"

using namespace mrasp;

static BilingualDictionary dict_of(const std::string& src, const std::string& tgt,
                                   std::vector<std::pair<std::string, std::string>> rows) {
  BilingualDictionary d{LanguageCode(src), LanguageCode(tgt)};
  for (auto& [w, t] : rows) d.add(w, t);
  return d;
}

TEST_CASE("muse dictionary loads and accumulates candidates") {
  testutil::TempDir tmp;
  testutil::write_file(tmp.file("d.txt"), "hello bonjour\nbye salut\n");
  auto d = load_muse_dictionary(tmp.file("d.txt"), LanguageCode("en"), LanguageCode("fr"));
  CHECK(d.size() == 2);
  REQUIRE(d.candidates("hello"));
  CHECK(d.candidates("hello")->size() == 1);

  testutil::write_file(tmp.file("poly.txt"), "bank banque\nbank rive\n");
  auto poly = load_muse_dictionary(tmp.file("poly.txt"), LanguageCode("en"),
                                   LanguageCode("fr"));
  CHECK(poly.size() == 1);
  CHECK(*poly.candidates("bank") == std::vector<std::string>{"banque", "rive"});

  testutil::write_file(tmp.file("bad.txt"), "a b c\n");
  CHECK_THROWS_WITH(
      load_muse_dictionary(tmp.file("bad.txt"), LanguageCode("en"), LanguageCode("fr")),
      Catch::Contains("MalformedLine") && Catch::Contains("line 1"));
}

TEST_CASE("restrict_to_top_k keeps the first k file-order entries") {
  auto d = dict_of("en", "fr",
                   {{"one", "un"}, {"two", "deux"}, {"three", "trois"},
                    {"four", "quatre"}, {"five", "cinq"}});
  CHECK(restrict_to_top_k(d, 0).size() == 0);
  CHECK(restrict_to_top_k(d, 99).size() == 5);
  auto top3 = restrict_to_top_k(d, 3);
  CHECK(top3.words() == std::vector<std::string>{"one", "two", "three"});

  // idempotent and monotone
  auto again = restrict_to_top_k(top3, 3);
  CHECK(again.words() == top3.words());
  auto top2 = restrict_to_top_k(d, 2);
  for (const auto& w : top2.words())
    CHECK(std::find(top3.words().begin(), top3.words().end(), w) != top3.words().end());
}

TEST_CASE("translate_word draws uniformly among candidates") {
  auto single = dict_of("en", "fr", {{"hello", "bonjour"}});
  Rng rng(1);
  CHECK(*translate_word(single, "hello", rng) == "bonjour");
  CHECK_FALSE(translate_word(single, "unknown", rng).has_value());

  auto poly = dict_of("en", "fr", {{"bank", "banque"}});
  poly.add("bank", "rive");
  std::map<std::string, int> freq;
  Rng poly_rng(7);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++freq[*translate_word(poly, "bank", poly_rng)];
  // binomial 4 sigma around 0.5 over 10k draws: +-0.02
  CHECK(freq["banque"] / double(draws) == Approx(0.5).margin(0.02));
  CHECK(freq["rive"] / double(draws) == Approx(0.5).margin(0.02));
}

static SentencePair tagged_pair(std::vector<std::string> src, std::vector<std::string> tgt) {
  SentencePair p{std::move(src), std::move(tgt), LanguageCode("en"), LanguageCode("fr")};
  return inject_language_tokens(p);
}

TEST_CASE("ras_substitute honors probability 0 and 1") {
  DictionarySet dicts;
  dicts.add(dict_of("en", "fr", {{"cat", "chat"}, {"dog", "chien"}}));
  auto pair = tagged_pair({"cat", "dog", "bird"}, {"chat", "chien", "oiseau"});

  RasConfig off;
  off.substitution_prob = 0.0;
  Rng rng_off(3);
  auto same = ras_substitute(pair, dicts, off, rng_off);
  CHECK(same.source == pair.source);
  CHECK(same.target == pair.target);

  RasConfig always;
  always.substitution_prob = 1.0;
  Rng rng_on(3);
  auto swapped = ras_substitute(pair, dicts, always, rng_on);
  CHECK(swapped.source == std::vector<std::string>{"<en>", "chat", "chien", "bird"});
  CHECK(swapped.target == pair.target);  // target untouched
}

TEST_CASE("ras_substitute preserves length, order, indicator, and reverse-lookup") {
  DictionarySet dicts;
  dicts.add(dict_of("en", "de", {{"cat", "katze"}, {"dog", "hund"}, {"bird", "vogel"}}));
  dicts.add(dict_of("en", "fr", {{"cat", "chat"}, {"dog", "chien"}}));
  auto pair = tagged_pair({"cat", "dog", "bird", "cat"}, {"x", "y", "z", "w"});

  RasConfig cfg;
  cfg.substitution_prob = 0.6;
  Rng rng(11);
  auto out = ras_substitute(pair, dicts, cfg, rng);
  REQUIRE(out.source.size() == pair.source.size());
  CHECK(out.source[0] == "<en>");
  for (size_t i = 1; i < out.source.size(); ++i) {
    const std::string& orig = pair.source[i];
    const std::string& got = out.source[i];
    if (got == orig) continue;
    bool is_candidate = false;
    for (const auto& [lang, d] : dicts.dicts()) {
      const auto* cands = d.candidates(orig);
      if (cands && std::find(cands->begin(), cands->end(), got) != cands->end())
        is_candidate = true;
    }
    CHECK(is_candidate);
  }
}

TEST_CASE("ras_substitute skips pairs from a different source language") {
  DictionarySet dicts;
  dicts.add(dict_of("en", "fr", {{"cat", "chat"}}));
  SentencePair de_pair{{"<de>", "cat"}, {"<fr>", "chat"},
                       LanguageCode("de"), LanguageCode("fr")};
  RasConfig always;
  always.substitution_prob = 1.0;
  Rng rng(5);
  auto out = ras_substitute(de_pair, dicts, always, rng);
  CHECK(out.source == de_pair.source);
}

TEST_CASE("empirical substitution rate stays inside the binomial bound") {
  DictionarySet dicts;
  dicts.add(dict_of("en", "fr", {{"word", "mot"}}));
  RasConfig cfg;
  cfg.substitution_prob = 0.3;
  Rng rng(123);
  size_t eligible = 0, substituted = 0;
  SentencePair pair = tagged_pair(std::vector<std::string>(20, "word"),
                                  std::vector<std::string>(20, "mot"));
  while (eligible < 10000) {
    auto out = ras_substitute(pair, dicts, cfg, rng);
    for (size_t i = 1; i < out.source.size(); ++i) {
      ++eligible;
      if (out.source[i] != "word") ++substituted;
    }
  }
  const double rate = double(substituted) / double(eligible);
  CHECK(rate >= 0.28);
  CHECK(rate <= 0.32);
}

TEST_CASE("augment_stream doubles the corpus deterministically") {
  DictionarySet dicts;
  dicts.add(dict_of("en", "fr", {{"cat", "chat"}, {"dog", "chien"}}));
  ParallelCorpus corpus;
  corpus.src_lang = LanguageCode("en");
  corpus.tgt_lang = LanguageCode("fr");
  for (int i = 0; i < 40; ++i) {
    auto p = tagged_pair({"cat", "dog"}, {"chat", "chien"});
    corpus.pairs.push_back(p);
  }

  RasConfig cfg;
  cfg.substitution_prob = 0.5;
  cfg.seed = 99;
  AugmentStream stream(corpus, dicts, cfg);
  CHECK(stream.size() == 80);

  AugmentStream again(corpus, dicts, cfg);
  for (size_t i = 0; i < stream.size(); ++i) {
    CHECK(stream.at(i).source == again.at(i).source);
    if (i % 2 == 0) CHECK(stream.at(i).source == corpus.pairs[i / 2].source);
  }

  // restriction to a subset of indices equals per-pair substitution with the
  // derived seed
  auto direct = ras_variant(corpus.pairs[17], 17, dicts.restricted(cfg.top_k_words), cfg);
  CHECK(stream.at(35).source == direct.source);

  // out-of-order consumption yields the same pairs
  std::vector<size_t> order{7, 3, 19, 3, 0};
  for (size_t idx : order) CHECK(stream.at(idx).source == again.at(idx).source);
}

TEST_CASE("augment_stream prob 0 duplicates originals; in-place mode halves") {
  DictionarySet dicts;
  dicts.add(dict_of("en", "fr", {{"cat", "chat"}}));
  ParallelCorpus corpus;
  corpus.src_lang = LanguageCode("en");
  corpus.tgt_lang = LanguageCode("fr");
  corpus.pairs.push_back(tagged_pair({"cat"}, {"chat"}));
  corpus.pairs.push_back(tagged_pair({"cat", "cat"}, {"chat", "chat"}));

  RasConfig zero;
  zero.substitution_prob = 0.0;
  AugmentStream stream(corpus, dicts, zero);
  REQUIRE(stream.size() == 4);
  for (size_t i = 0; i < 4; ++i)
    CHECK(stream.at(i).source == corpus.pairs[i / 2].source);

  RasConfig in_place;
  in_place.mode = AugmentMode::kInPlace;
  in_place.substitution_prob = 1.0;
  AugmentStream replaced(corpus, dicts, in_place);
  REQUIRE(replaced.size() == 2);
  CHECK(replaced.at(0).source == std::vector<std::string>{"<en>", "chat"});
}
