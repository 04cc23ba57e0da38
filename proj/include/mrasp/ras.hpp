#pragma once

// Bilingual dictionaries (MUSE format) and random aligned substitution:
// source words swap to dictionary translations in random other languages,
// producing code-switched pairs.

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrasp/common.hpp"
#include "mrasp/corpus.hpp"
#include "mrasp/rng.hpp"

namespace mrasp {

class BilingualDictionary {
public:
  BilingualDictionary() = default;
  BilingualDictionary(LanguageCode src, LanguageCode tgt)
      : src_(std::move(src)), tgt_(std::move(tgt)) {}

  const LanguageCode& src_lang() const { return src_; }
  const LanguageCode& tgt_lang() const { return tgt_; }
  size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }

  // Candidates accumulate in file order; duplicates per word are ignored.
  void add(const std::string& word, const std::string& translation) {
    auto it = entries_.find(word);
    if (it == entries_.end()) {
      order_.push_back(word);
      entries_.emplace(word, std::vector<std::string>{translation});
      return;
    }
    auto& cands = it->second;
    for (const auto& c : cands)
      if (c == translation) return;
    cands.push_back(translation);
  }

  const std::vector<std::string>* candidates(const std::string& word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
  }

  const std::vector<std::string>& words() const { return order_; }  // file order

private:
  LanguageCode src_, tgt_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::vector<std::string>> entries_;
};

// `srcword SPACE tgtword`, one per line.
inline BilingualDictionary load_muse_dictionary(const std::string& path,
                                                const LanguageCode& src,
                                                const LanguageCode& tgt) {
  auto lines = detail::read_lines(path);
  BilingualDictionary dict(src, tgt);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto fields = split_words(lines[i]);
    if (fields.size() != 2)
      throw DataError("MalformedLine: '" + path + "' line " + std::to_string(i + 1));
    dict.add(fields[0], fields[1]);
  }
  return dict;
}

// First k distinct source words in file order; candidate lists unchanged.
inline BilingualDictionary restrict_to_top_k(const BilingualDictionary& dict, size_t k) {
  BilingualDictionary out(dict.src_lang(), dict.tgt_lang());
  const auto& words = dict.words();
  for (size_t i = 0; i < words.size() && i < k; ++i)
    for (const auto& cand : *dict.candidates(words[i])) out.add(words[i], cand);
  return out;
}

// Uniformly random candidate, or nullopt for an absent word.
inline std::optional<std::string> translate_word(const BilingualDictionary& dict,
                                                 const std::string& word, Rng& rng) {
  const auto* cands = dict.candidates(word);
  if (!cands) return std::nullopt;
  return (*cands)[size_t(rng.next_below(cands->size()))];
}

// All dictionaries share one source anchor language (e.g. English-centric).
class DictionarySet {
public:
  void add(BilingualDictionary dict) {
    if (!dicts_.empty() && !(dict.src_lang() == src_lang()))
      throw UsageError("DictionarySourceMismatch: expected '" + src_lang().str() +
                       "', got '" + dict.src_lang().str() + "'");
    dicts_.emplace(dict.tgt_lang(), std::move(dict));
  }

  bool empty() const { return dicts_.empty(); }
  size_t size() const { return dicts_.size(); }
  const LanguageCode& src_lang() const { return dicts_.begin()->second.src_lang(); }
  const std::map<LanguageCode, BilingualDictionary>& dicts() const { return dicts_; }

  DictionarySet restricted(size_t top_k) const {
    DictionarySet out;
    for (const auto& [lang, dict] : dicts_) out.add(restrict_to_top_k(dict, top_k));
    return out;
  }

private:
  std::map<LanguageCode, BilingualDictionary> dicts_;
};

enum class AugmentMode {
  kDoubled,   // original pair plus substituted variant (2N stream)
  kInPlace,   // substituted variant replaces the original (N stream)
};

struct RasConfig {
  double substitution_prob = 0.3;
  size_t top_k_words = 1000;
  bool substitute_target_side = false;
  bool lowercase_lookup = true;
  AugmentMode mode = AugmentMode::kDoubled;
  uint64_t seed = 0;
};

namespace detail {

inline void ras_side(std::vector<std::string>& words, const DictionarySet& dicts,
                     const RasConfig& cfg, Rng& rng) {
  for (size_t i = 0; i < words.size(); ++i) {
    if (i == 0 && is_language_indicator(words[i])) continue;  // never eligible
    const std::string key = cfg.lowercase_lookup ? lowercase_ascii(words[i]) : words[i];
    // Languages whose dictionary covers this word, in map (language) order.
    std::vector<const BilingualDictionary*> covering;
    for (const auto& [lang, dict] : dicts.dicts())
      if (dict.candidates(key)) covering.push_back(&dict);
    if (covering.empty()) continue;
    if (!rng.bernoulli(cfg.substitution_prob)) continue;
    const auto* dict = covering[size_t(rng.next_below(covering.size()))];
    if (auto repl = translate_word(*dict, key, rng)) words[i] = *repl;
  }
}

}  // namespace detail

// C(x): each eligible source word (covered by some restricted dictionary) is
// replaced with probability cfg.substitution_prob by a random candidate from
// a random covering language. Sentence length, word order, the language
// indicator, and (by default) the target side are untouched. Pairs whose
// source language differs from the dictionary set's are returned unchanged.
inline SentencePair ras_substitute(const SentencePair& pair, const DictionarySet& dicts,
                                   const RasConfig& cfg, Rng& rng) {
  SentencePair out = pair;
  if (dicts.empty() || cfg.substitution_prob <= 0.0) return out;
  if (pair.src_lang == dicts.src_lang()) detail::ras_side(out.source, dicts, cfg, rng);
  if (cfg.substitute_target_side && pair.tgt_lang == dicts.src_lang())
    detail::ras_side(out.target, dicts, cfg, rng);
  return out;
}

// Substituted variant of pair `index`, with its own index-derived rng stream:
// consumption order cannot change the outputs.
inline SentencePair ras_variant(const SentencePair& pair, uint64_t index,
                                const DictionarySet& dicts, const RasConfig& cfg) {
  Rng rng(derive_seed(derive_seed(cfg.seed, "ras"), index));
  return ras_substitute(pair, dicts, cfg, rng);
}

// Streams a corpus through RAS. kDoubled yields 2N pairs (each original
// followed by its variant); kInPlace yields N substituted pairs. The
// dictionaries are restricted to top_k_words up front.
class AugmentStream {
public:
  AugmentStream(const ParallelCorpus& corpus, const DictionarySet& dicts, RasConfig cfg)
      : corpus_(&corpus), dicts_(dicts.restricted(cfg.top_k_words)), cfg_(cfg) {}

  size_t size() const {
    return cfg_.mode == AugmentMode::kDoubled ? corpus_->size() * 2 : corpus_->size();
  }

  SentencePair at(size_t i) const {
    if (cfg_.mode == AugmentMode::kInPlace) return ras_variant(corpus_->pairs[i], i, dicts_, cfg_);
    const size_t pair_idx = i / 2;
    if (i % 2 == 0) return corpus_->pairs[pair_idx];
    return ras_variant(corpus_->pairs[pair_idx], pair_idx, dicts_, cfg_);
  }

  ParallelCorpus materialize() const {
    ParallelCorpus out;
    out.src_lang = corpus_->src_lang;
    out.tgt_lang = corpus_->tgt_lang;
    out.pairs.reserve(size());
    for (size_t i = 0; i < size(); ++i) out.pairs.push_back(at(i));
    return out;
  }

private:
  const ParallelCorpus* corpus_;
  DictionarySet dicts_;
  RasConfig cfg_;
};

}  // namespace mrasp
