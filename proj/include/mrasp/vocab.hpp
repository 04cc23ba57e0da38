#pragma once

// Shared subword vocabulary with reserved specials and dense ids.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrasp/bpe.hpp"
#include "mrasp/common.hpp"
#include "mrasp/corpus.hpp"

namespace mrasp {

using TokenId = uint32_t;

class Vocabulary {
public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;

  Vocabulary() {
    for (const char* s : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(s, 0);
  }

  TokenId add(const std::string& token, uint64_t count) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    TokenId id = TokenId(tokens_.size());
    tokens_.push_back(token);
    counts_.push_back(count);
    index_.emplace(token, id);
    return id;
  }

  size_t size() const { return tokens_.size(); }

  TokenId id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token_of(TokenId id) const {
    if (id >= tokens_.size())
      throw DataError("UnknownId: " + std::to_string(id) + " >= |V|=" +
                      std::to_string(tokens_.size()));
    return tokens_[id];
  }

  uint64_t count_of(TokenId id) const { return id < counts_.size() ? counts_[id] : 0; }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens) const {
    std::vector<TokenId> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id_of(t));
    return ids;
  }

  std::vector<std::string> decode(const std::vector<TokenId>& ids) const {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (TokenId id : ids) tokens.push_back(token_of(id));
    return tokens;
  }

  // Decode plus `@@` unjoining: ids -> whitespace words.
  std::vector<std::string> decode_words(const std::vector<TokenId>& ids) const {
    return merge_bpe_markers(decode(ids));
  }

  // FNV-1a over the id-ordered entries; stored in checkpoints so fine-tuning
  // can detect a swapped vocab file.
  uint64_t content_hash() const {
    uint64_t h = 1469598103934665603ull;
    for (size_t i = 0; i < tokens_.size(); ++i) {
      h ^= fnv1a64(tokens_[i]);
      h *= 1099511628211ull;
      h ^= counts_[i];
      h *= 1099511628211ull;
    }
    return h;
  }

private:
  std::vector<std::string> tokens_;
  std::vector<uint64_t> counts_;
  std::unordered_map<std::string, TokenId> index_;
};

// Builds the vocabulary from BPE-tokenized sentences. Tokens with
// count >= min_count are kept (min_count 21 keeps "more than 20"); language
// indicators and `extra_tokens` are force-included regardless of count.
// Ids after the specials go by descending count, ties lexicographic.
inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& sentences,
                                   uint64_t min_count = 21,
                                   const std::vector<std::string>& extra_tokens = {}) {
  if (sentences.empty()) throw UsageError("EmptyCorpus: no tokenized sentences");
  std::unordered_map<std::string, uint64_t> counts;
  for (const auto& sent : sentences)
    for (const auto& tok : sent) ++counts[tok];
  std::unordered_map<std::string, bool> forced;
  for (const auto& t : extra_tokens) {
    counts.emplace(t, 0);
    forced[t] = true;
  }

  std::vector<std::pair<std::string, uint64_t>> kept;
  kept.reserve(counts.size());
  for (const auto& [tok, c] : counts)
    if (c >= min_count || is_language_indicator(tok) || forced.count(tok))
      kept.emplace_back(tok, c);

  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  for (const auto& [tok, c] : kept) vocab.add(tok, c);
  return vocab;
}

// `token TAB count` per line, ordered by id; specials come first with count 0.
inline void save_vocabulary(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("IoError: cannot write '" + path + "'");
  for (TokenId id = 0; id < vocab.size(); ++id)
    out << vocab.token_of(id) << '\t' << vocab.count_of(id) << '\n';
}

inline Vocabulary load_vocabulary(const std::string& path) {
  auto lines = detail::read_lines(path);
  Vocabulary vocab;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    size_t tab = lines[i].find('\t');
    if (tab == std::string::npos)
      throw DataError("MalformedVocabFile: line " + std::to_string(i + 1) + " in '" +
                      path + "'");
    std::string tok = lines[i].substr(0, tab);
    uint64_t count = 0;
    try {
      count = std::stoull(lines[i].substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError("MalformedVocabFile: bad count at line " + std::to_string(i + 1));
    }
    if (i < 4) {
      // Specials are pre-seeded by the constructor; verify they match.
      if (tok != vocab.token_of(TokenId(i)))
        throw DataError("MalformedVocabFile: expected special '" +
                        vocab.token_of(TokenId(i)) + "' at line " + std::to_string(i + 1));
      continue;
    }
    vocab.add(tok, count);
  }
  if (vocab.size() < 4) throw DataError("MalformedVocabFile: missing specials in '" + path + "'");
  return vocab;
}

}  // namespace mrasp
