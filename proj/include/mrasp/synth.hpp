#pragma once

// Synthetic language families with known ground truth: every language is a
// private surface relabeling of a shared latent token stream, translation is
// relabeling plus a deterministic word-order permutation, and the exact
// relabeling map doubles as the bilingual dictionary.

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mrasp/common.hpp"
#include "mrasp/corpus.hpp"
#include "mrasp/ras.hpp"
#include "mrasp/rng.hpp"

namespace mrasp {

struct GrammarSpec {
  enum class Kind { kIdentity, kReverse, kRotate, kSwapAdjacent };
  Kind kind = Kind::kIdentity;
  size_t rotate_k = 0;
  size_t jitter = 0;  // 0 = off; else adds (sentence_index % jitter) to the rotation

  static GrammarSpec parse(const std::string& text) {
    GrammarSpec g;
    auto fields = split_words(text);
    std::string name = fields.empty() ? "identity" : fields[0];
    // also accept "rotate:2:3" form
    std::vector<std::string> parts;
    size_t start = 0;
    for (size_t i = 0; i <= name.size(); ++i) {
      if (i == name.size() || name[i] == ':') {
        parts.push_back(name.substr(start, i - start));
        start = i + 1;
      }
    }
    const std::string& kind = parts[0];
    if (kind == "identity")
      g.kind = Kind::kIdentity;
    else if (kind == "reverse")
      g.kind = Kind::kReverse;
    else if (kind == "rotate")
      g.kind = Kind::kRotate;
    else if (kind == "swap")
      g.kind = Kind::kSwapAdjacent;
    else
      throw UsageError("UnknownGrammar: '" + kind + "'");
    if (parts.size() > 1) g.rotate_k = std::stoull(parts[1]);
    if (parts.size() > 2) g.jitter = std::stoull(parts[2]);
    return g;
  }

  std::string str() const {
    switch (kind) {
      case Kind::kIdentity: return "identity";
      case Kind::kReverse: return "reverse";
      case Kind::kRotate:
        return "rotate:" + std::to_string(rotate_k) + ":" + std::to_string(jitter);
      case Kind::kSwapAdjacent: return "swap";
    }
    return "identity";
  }

  // Target position j takes the relabeled source word at source_position(j).
  size_t source_position(size_t j, size_t n, size_t sentence_index) const {
    switch (kind) {
      case Kind::kIdentity: return j;
      case Kind::kReverse: return n - 1 - j;
      case Kind::kRotate: {
        const size_t off = rotate_k + (jitter == 0 ? 0 : sentence_index % jitter);
        return (j + off) % n;
      }
      case Kind::kSwapAdjacent: {
        if (j % 2 == 0) return j + 1 < n ? j + 1 : j;
        return j - 1;
      }
    }
    return j;
  }
};

struct SynthPairSpec {
  size_t src_index = 0;
  size_t tgt_index = 1;
  size_t train_size = 1000;
  size_t dev_size = 200;
  size_t test_size = 200;
  GrammarSpec grammar;
};

struct SynthFamilySpec {
  size_t num_languages = 3;
  size_t vocab_per_lang = 60;
  size_t min_len = 3;
  size_t max_len = 8;
  double zipf_exponent = 1.0;
  std::vector<SynthPairSpec> pairs;
  uint64_t seed = 1;

  void validate() const {
    if (num_languages < 2) throw UsageError("SpecInfeasible: need at least 2 languages");
    if (num_languages > 19) throw UsageError("SpecInfeasible: at most 19 languages");
    if (vocab_per_lang < 2) throw UsageError("SpecInfeasible: vocab too small");
    if (min_len == 0 || min_len > max_len)
      throw UsageError("SpecInfeasible: bad sentence length range");
    for (const auto& p : pairs) {
      if (p.src_index >= num_languages || p.tgt_index >= num_languages ||
          p.src_index == p.tgt_index)
        throw UsageError("SpecInfeasible: bad pair language indices");
      if (p.train_size == 0) throw UsageError("SpecInfeasible: empty train split");
    }
  }
};

namespace detail {

inline constexpr char kSynthConsonants[] = "bcdfghjklmnpqrstvwz";  // 19
inline constexpr char kSynthVowels[] = "aeiou";

inline std::string synth_lang_code(size_t i) {
  std::string code = "aa";
  code[0] = char('a' + i / 26);
  code[1] = char('a' + i % 26);
  return code;
}

// Language-unique consonant prefix + base-5 vowel spelling of the latent id.
inline std::string synth_word(size_t lang, size_t latent) {
  std::string w(1, kSynthConsonants[lang]);
  std::string digits;
  size_t v = latent;
  do {
    digits.push_back(kSynthVowels[v % 5]);
    v /= 5;
  } while (v > 0);
  w.append(digits.rbegin(), digits.rend());
  return w;
}

}  // namespace detail

struct SynthFamily {
  SynthFamilySpec spec;
  std::vector<LanguageCode> languages;

  struct PairData {
    size_t src_index = 0, tgt_index = 0;
    GrammarSpec grammar;
    ParallelCorpus train, dev, test;  // untagged
  };
  std::vector<PairData> pairs;

  const LanguageCode& lang(size_t i) const { return languages[i]; }

  std::string word(size_t lang_index, size_t latent) const {
    return detail::synth_word(lang_index, latent);
  }

  // Ground-truth dictionary, ordered by latent frequency rank (most frequent
  // first, matching MUSE file convention).
  BilingualDictionary dictionary(size_t src_index, size_t tgt_index) const {
    BilingualDictionary d(languages[src_index], languages[tgt_index]);
    for (size_t s = 0; s < spec.vocab_per_lang; ++s)
      d.add(word(src_index, s), word(tgt_index, s));
    return d;
  }

  // Anchor-centric dictionary set covering the given target languages.
  DictionarySet dictionary_set(size_t anchor_index,
                               const std::set<size_t>& target_indices) const {
    DictionarySet set;
    for (size_t t : target_indices)
      if (t != anchor_index) set.add(dictionary(anchor_index, t));
    return set;
  }

  // Tagged directed views (both directions per listed pair), the Eq.-style
  // multilingual pool.
  std::vector<DirectedView> training_pool(const std::vector<size_t>& pair_indices) const {
    std::vector<DirectedView> pool;
    for (size_t pi : pair_indices) {
      const auto& pd = pairs.at(pi);
      auto raw = std::make_shared<const ParallelCorpus>(pd.train);
      DirectedView fwd(pd.train.src_lang, pd.train.tgt_lang, true);
      fwd.add_segment(raw, false);
      DirectedView bwd(pd.train.tgt_lang, pd.train.src_lang, true);
      bwd.add_segment(raw, true);
      pool.push_back(std::move(fwd));
      pool.push_back(std::move(bwd));
    }
    return pool;
  }

  std::set<size_t> pool_language_indices(const std::vector<size_t>& pair_indices) const {
    std::set<size_t> out;
    for (size_t pi : pair_indices) {
      out.insert(pairs.at(pi).src_index);
      out.insert(pairs.at(pi).tgt_index);
    }
    return out;
  }
};

// Deterministic family generation. Latent sentences are unique within a pair
// (so train/dev/test are disjoint); surfaces are disjoint across languages.
inline SynthFamily generate_family(const SynthFamilySpec& spec) {
  spec.validate();
  SynthFamily family;
  family.spec = spec;
  for (size_t i = 0; i < spec.num_languages; ++i)
    family.languages.emplace_back(detail::synth_lang_code(i));

  // Zipf cumulative table over latent ids.
  std::vector<double> cumulative(spec.vocab_per_lang);
  double total = 0.0;
  for (size_t k = 0; k < spec.vocab_per_lang; ++k) {
    total += 1.0 / std::pow(double(k + 1), spec.zipf_exponent);
    cumulative[k] = total;
  }
  for (double& c : cumulative) c /= total;

  auto draw_latent = [&](Rng& rng) {
    const double r = rng.next_double();
    size_t lo = 0, hi = cumulative.size() - 1;
    while (lo < hi) {
      const size_t mid = (lo + hi) / 2;
      if (cumulative[mid] < r)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  };

  for (size_t pi = 0; pi < spec.pairs.size(); ++pi) {
    const auto& ps = spec.pairs[pi];
    Rng rng(derive_seed(derive_seed(spec.seed, "pair"), pi));
    const size_t needed = ps.train_size + ps.dev_size + ps.test_size;
    std::set<std::vector<size_t>> seen;
    std::vector<std::vector<size_t>> latents;
    latents.reserve(needed);
    size_t attempts = 0;
    const size_t max_attempts = needed * 100 + 1000;
    while (latents.size() < needed) {
      if (++attempts > max_attempts)
        throw UsageError("SpecInfeasible: cannot draw " + std::to_string(needed) +
                         " distinct sentences; vocab or length range too small");
      const size_t len = spec.min_len + size_t(rng.next_below(spec.max_len - spec.min_len + 1));
      std::vector<size_t> sent(len);
      for (auto& s : sent) s = draw_latent(rng);
      if (seen.insert(sent).second) latents.push_back(std::move(sent));
    }

    SynthFamily::PairData pd;
    pd.src_index = ps.src_index;
    pd.tgt_index = ps.tgt_index;
    pd.grammar = ps.grammar;
    const LanguageCode& src_lang = family.languages[ps.src_index];
    const LanguageCode& tgt_lang = family.languages[ps.tgt_index];
    for (ParallelCorpus* c : {&pd.train, &pd.dev, &pd.test}) {
      c->src_lang = src_lang;
      c->tgt_lang = tgt_lang;
    }
    for (size_t i = 0; i < latents.size(); ++i) {
      const auto& latent = latents[i];
      SentencePair pair;
      pair.src_lang = src_lang;
      pair.tgt_lang = tgt_lang;
      pair.source.reserve(latent.size());
      for (size_t s : latent) pair.source.push_back(family.word(ps.src_index, s));
      pair.target.resize(latent.size());
      for (size_t j = 0; j < latent.size(); ++j)
        pair.target[j] =
            family.word(ps.tgt_index, latent[ps.grammar.source_position(j, latent.size(), i)]);
      if (i < ps.train_size)
        pd.train.pairs.push_back(std::move(pair));
      else if (i < ps.train_size + ps.dev_size)
        pd.dev.pairs.push_back(std::move(pair));
      else
        pd.test.pairs.push_back(std::move(pair));
    }
    family.pairs.push_back(std::move(pd));
  }
  return family;
}

}  // namespace mrasp
