#pragma once

// Joint BPE with language oversampling. Symbols carry the `@@` continuation
// marker on every non-final subword of a word, during learning and at apply
// time, so merges and tokenized text share one representation.

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "mrasp/common.hpp"
#include "mrasp/corpus.hpp"

namespace mrasp {

inline constexpr const char* kBpeMarker = "@@";
inline constexpr const char* kBpeFileHeader = "#mrasp-bpe v1";

struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;  // priority order
  std::string version = "v1";
};

struct OversamplingPolicy {
  std::map<LanguageCode, double> weights;

  double weight(const LanguageCode& lang) const {
    auto it = weights.find(lang);
    return it == weights.end() ? 1.0 : it->second;
  }
};

// weight(lang) = |largest corpus| / |lang corpus|; the largest language gets 1.
inline OversamplingPolicy compute_oversampling_weights(
    const std::map<LanguageCode, size_t>& sizes) {
  if (sizes.empty()) throw UsageError("EmptySizes");
  size_t max_size = 0;
  for (const auto& [lang, n] : sizes) {
    if (n == 0) throw UsageError("ZeroSize: language '" + lang.str() + "'");
    max_size = std::max(max_size, n);
  }
  OversamplingPolicy policy;
  for (const auto& [lang, n] : sizes) policy.weights[lang] = double(max_size) / double(n);
  return policy;
}

// One BPE learning input: sentences in a single language (one side of a
// parallel corpus, or a monolingual supplement).
struct BpeText {
  LanguageCode lang;
  std::vector<std::string> sentences;
};

inline std::vector<BpeText> bpe_inputs_from_corpus(const ParallelCorpus& corpus) {
  BpeText src{corpus.src_lang, {}}, tgt{corpus.tgt_lang, {}};
  src.sentences.reserve(corpus.size());
  tgt.sentences.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    src.sentences.push_back(join_words(p.source));
    tgt.sentences.push_back(join_words(p.target));
  }
  return {std::move(src), std::move(tgt)};
}

namespace detail {

// Word -> marked symbol sequence: "low" -> ["l@@","o@@","w"].
inline std::vector<std::string> word_to_symbols(const std::string& word) {
  auto chars = utf8_chars(word);
  std::vector<std::string> syms;
  syms.reserve(chars.size());
  for (size_t i = 0; i < chars.size(); ++i)
    syms.push_back(i + 1 < chars.size() ? chars[i] + kBpeMarker : chars[i]);
  return syms;
}

// Merging "ab@@" + "c..." keeps the right symbol's marker status.
inline std::string merge_symbols(const std::string& left, const std::string& right) {
  std::string body = left;
  if (body.size() > 2 && body.compare(body.size() - 2, 2, kBpeMarker) == 0)
    body.resize(body.size() - 2);
  return body + right;
}

// Fixed-point pair counts (x1000) avoid float nondeterminism in ranking.
using PairCounts = std::map<std::pair<std::string, std::string>, uint64_t>;

struct WordEntry {
  std::vector<std::string> symbols;
  uint64_t scaled_freq;  // occurrences x round(weight * 1000)
};

}  // namespace detail

// Standard BPE over the weighted word-frequency table: repeatedly merge the
// most frequent adjacent symbol pair; ties broken lexicographically on
// (left, right); stops early once no pair has weighted count >= 2.
inline BpeModel learn_bpe(const std::vector<BpeText>& inputs, size_t num_merges,
                          const OversamplingPolicy& policy = {}, unsigned jobs = 1) {
  if (inputs.empty()) throw UsageError("EmptyCorpus: no BPE inputs");
  size_t total_sentences = 0;
  for (const auto& in : inputs) total_sentences += in.sentences.size();
  if (total_sentences == 0) throw UsageError("EmptyCorpus: no sentences");

  // Weighted word frequencies. Sharded by sentence ranges; integer reduction
  // keeps the result independent of the shard count.
  std::unordered_map<std::string, uint64_t> word_freq;
  for (const auto& in : inputs) {
    const uint64_t scale = uint64_t(policy.weight(in.lang) * 1000.0 + 0.5);
    auto count_range = [&](size_t lo, size_t hi,
                           std::unordered_map<std::string, uint64_t>& out) {
      for (size_t i = lo; i < hi; ++i)
        for (auto& w : split_words(in.sentences[i]))
          if (!is_language_indicator(w)) out[w] += scale;
    };
    if (jobs <= 1 || in.sentences.size() < 2048) {
      count_range(0, in.sentences.size(), word_freq);
    } else {
      std::vector<std::unordered_map<std::string, uint64_t>> shards(jobs);
      std::vector<std::thread> threads;
      size_t chunk = (in.sentences.size() + jobs - 1) / jobs;
      for (unsigned t = 0; t < jobs; ++t) {
        size_t lo = t * chunk, hi = std::min(in.sentences.size(), lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back(count_range, lo, hi, std::ref(shards[t]));
      }
      for (auto& th : threads) th.join();
      for (auto& shard : shards)
        for (auto& [w, c] : shard) word_freq[w] += c;
    }
  }

  // Distinct words in lexicographic order so every scan is deterministic.
  std::vector<detail::WordEntry> words;
  {
    std::map<std::string, uint64_t> ordered(word_freq.begin(), word_freq.end());
    words.reserve(ordered.size());
    for (auto& [w, f] : ordered) words.push_back({detail::word_to_symbols(w), f});
  }

  BpeModel model;
  model.merges.reserve(num_merges);
  for (size_t iter = 0; iter < num_merges; ++iter) {
    detail::PairCounts counts;
    for (const auto& we : words)
      for (size_t i = 0; i + 1 < we.symbols.size(); ++i)
        counts[{we.symbols[i], we.symbols[i + 1]}] += we.scaled_freq;
    const std::pair<std::string, std::string>* best = nullptr;
    uint64_t best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (c > best_count) {  // map order = lexicographic, so first max wins ties
        best = &pair;
        best_count = c;
      }
    }
    // A pair seen once is still mergeable; in fixed-point units the stop
    // threshold only fires once no adjacent pair is left at all.
    if (!best || best_count < 1) break;
    const auto [left, right] = *best;
    const std::string merged = detail::merge_symbols(left, right);
    for (auto& we : words) {
      auto& syms = we.symbols;
      size_t out = 0;
      for (size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          syms[out++] = merged;
          ++i;
        } else {
          if (out != i) syms[out] = std::move(syms[i]);
          ++out;
        }
      }
      syms.resize(out);
    }
    model.merges.emplace_back(left, right);
  }
  return model;
}

// Greedy application: repeatedly merge the highest-priority applicable pair.
// Language indicators pass through unsplit; unknown characters stay as
// single-character tokens.
class BpeApplier {
public:
  explicit BpeApplier(const BpeModel& model) : model_(&model) {
    for (size_t r = 0; r < model.merges.size(); ++r)
      ranks_.emplace(model.merges[r].first + " " + model.merges[r].second, r);
  }

  std::vector<std::string> apply_word(const std::string& word) const {
    if (is_language_indicator(word)) return {word};
    auto it = cache_.find(word);
    if (it != cache_.end()) return it->second;
    auto syms = detail::word_to_symbols(word);
    while (syms.size() > 1) {
      size_t best_rank = SIZE_MAX;
      for (size_t i = 0; i + 1 < syms.size(); ++i) {
        auto rit = ranks_.find(syms[i] + " " + syms[i + 1]);
        if (rit != ranks_.end() && rit->second < best_rank) best_rank = rit->second;
      }
      if (best_rank == SIZE_MAX) break;
      const auto& [left, right] = model_->merges[best_rank];
      const std::string merged = detail::merge_symbols(left, right);
      size_t out = 0;
      for (size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
          syms[out++] = merged;
          ++i;
        } else {
          if (out != i) syms[out] = std::move(syms[i]);
          ++out;
        }
      }
      syms.resize(out);
    }
    cache_.emplace(word, syms);
    return syms;
  }

  std::vector<std::string> apply(const std::vector<std::string>& words) const {
    std::vector<std::string> out;
    out.reserve(words.size() * 2);
    for (const auto& w : words)
      for (auto& s : apply_word(w)) out.push_back(std::move(s));
    return out;
  }

private:
  const BpeModel* model_;
  std::unordered_map<std::string, size_t> ranks_;
  mutable std::unordered_map<std::string, std::vector<std::string>> cache_;
};

inline std::vector<std::string> apply_bpe(const BpeModel& model,
                                          const std::vector<std::string>& words) {
  return BpeApplier(model).apply(words);
}

// Undoes `@@ ` joins: ["lo@@","w","it"] -> ["low","it"].
inline std::vector<std::string> merge_bpe_markers(const std::vector<std::string>& tokens) {
  std::vector<std::string> words;
  std::string cur;
  for (const auto& tok : tokens) {
    if (tok.size() > 2 && tok.compare(tok.size() - 2, 2, kBpeMarker) == 0) {
      cur += tok.substr(0, tok.size() - 2);
    } else {
      cur += tok;
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));  // dangling marker
  return words;
}

inline void save_bpe_model(const BpeModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("IoError: cannot write '" + path + "'");
  out << kBpeFileHeader << '\n';
  for (const auto& [l, r] : model.merges) out << l << ' ' << r << '\n';
}

inline BpeModel load_bpe_model(const std::string& path) {
  auto lines = detail::read_lines(path);
  if (lines.empty() || lines[0] != kBpeFileHeader)
    throw DataError("MalformedBpeFile: missing '" + std::string(kBpeFileHeader) +
                    "' header in '" + path + "'");
  BpeModel model;
  std::map<std::pair<std::string, std::string>, bool> seen;
  for (size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto fields = split_words(lines[i]);
    if (fields.size() != 2)
      throw DataError("MalformedBpeFile: line " + std::to_string(i + 1) + " in '" + path +
                      "'");
    if (seen[{fields[0], fields[1]}])
      throw DataError("MalformedBpeFile: duplicate merge at line " + std::to_string(i + 1));
    seen[{fields[0], fields[1]}] = true;
    model.merges.emplace_back(fields[0], fields[1]);
  }
  return model;
}

}  // namespace mrasp
