#pragma once

// Cross-lingual embedding analyses: word embeddings summed over BPE
// subwords, aligned-word cosine similarity reports, and PCA dumps.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mrasp/bpe.hpp"
#include "mrasp/common.hpp"
#include "mrasp/corpus.hpp"
#include "mrasp/model.hpp"
#include "mrasp/pca.hpp"
#include "mrasp/ras.hpp"
#include "mrasp/vocab.hpp"

namespace mrasp {

struct WordEmbedding {
  std::string word;
  LanguageCode language;
  std::vector<double> vector;

  bool nonzero() const {
    for (double v : vector)
      if (v != 0.0) return true;
    return false;
  }
};

// Sum of the token-embedding rows of the word's BPE subwords (<unk> rows
// included when a subword is out of vocabulary).
inline WordEmbedding word_embedding(const ModelParameters& params, const Vocabulary& vocab,
                                    const BpeApplier& bpe, const std::string& word,
                                    const LanguageCode& lang) {
  if (trim(word).empty()) throw UsageError("EmptyWord");
  WordEmbedding we{word, lang, std::vector<double>(params.config.model_dim, 0.0)};
  for (TokenId id : vocab.encode(bpe.apply_word(word))) {
    const double* row = params.tok_embed.row(id);
    for (size_t j = 0; j < we.vector.size(); ++j) we.vector[j] += row[j];
  }
  return we;
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v) {
  if (u.size() != v.size()) throw UsageError("DimensionMismatch in cosine");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw UsageError("ZeroVector in cosine");
  double c = uv / (std::sqrt(uu) * std::sqrt(vv));
  return std::min(1.0, std::max(-1.0, c));
}

struct SimilarityReport {
  LanguageCode src_lang, tgt_lang;
  struct Entry {
    std::string src_word, tgt_word;
    double cosine;
  };
  std::vector<Entry> entries;
  double average = 0.0;
};

// Mean cosine between aligned word embeddings over the first `top_k`
// dictionary entries (first candidate per word); pairs with an all-zero
// embedding on either side are skipped.
inline SimilarityReport avg_aligned_cosine(const ModelParameters& params,
                                           const Vocabulary& vocab, const BpeApplier& bpe,
                                           const BilingualDictionary& dict,
                                           size_t top_k = 1000) {
  BilingualDictionary restricted = restrict_to_top_k(dict, top_k);
  SimilarityReport report;
  report.src_lang = dict.src_lang();
  report.tgt_lang = dict.tgt_lang();
  double total = 0.0;
  for (const auto& word : restricted.words()) {
    const auto& cands = *restricted.candidates(word);
    WordEmbedding u = word_embedding(params, vocab, bpe, word, dict.src_lang());
    WordEmbedding v = word_embedding(params, vocab, bpe, cands.front(), dict.tgt_lang());
    if (!u.nonzero() || !v.nonzero()) continue;
    const double c = cosine(u.vector, v.vector);
    report.entries.push_back({word, cands.front(), c});
    total += c;
  }
  if (report.entries.empty()) throw DataError("NoAlignablePairs");
  report.average = total / double(report.entries.size());
  return report;
}

// `src_word TAB tgt_word TAB cosine` lines, then `AVERAGE TAB value`.
inline void save_similarity_report(const SimilarityReport& report, std::ostream& out) {
  std::ostringstream body;
  body.precision(6);
  body << std::fixed;
  for (const auto& e : report.entries)
    body << e.src_word << '\t' << e.tgt_word << '\t' << e.cosine << '\n';
  body << "AVERAGE\t" << report.average << '\n';
  out << body.str();
}

struct LabeledPcaPoint {
  std::string word;
  LanguageCode language;
  double x = 0.0, y = 0.0;
};

struct LabeledPca {
  std::vector<LabeledPcaPoint> points;
  std::vector<double> explained_variance;
  bool degenerate = false;
};

// PCA of the given words' embeddings into 2-d plot coordinates.
inline LabeledPca pca_of_words(const ModelParameters& params, const Vocabulary& vocab,
                               const BpeApplier& bpe,
                               const std::vector<std::pair<std::string, LanguageCode>>& words) {
  std::vector<std::vector<double>> vectors;
  vectors.reserve(words.size());
  for (const auto& [w, lang] : words)
    vectors.push_back(word_embedding(params, vocab, bpe, w, lang).vector);
  PcaProjection proj = pca_project(vectors, 2);
  LabeledPca out;
  out.explained_variance = proj.explained_variance;
  out.degenerate = proj.degenerate;
  out.points.reserve(words.size());
  for (size_t i = 0; i < words.size(); ++i)
    out.points.push_back({words[i].first, words[i].second, proj.coordinates.at(i, 0),
                          proj.coordinates.at(i, 1)});
  return out;
}

// Header comment with explained variances, then `word TAB lang TAB x TAB y`.
inline void save_pca_report(const LabeledPca& pca, std::ostream& out) {
  std::ostringstream body;
  body.precision(6);
  body << std::fixed;
  body << "# explained_variance";
  for (double v : pca.explained_variance) body << ' ' << v;
  if (pca.degenerate) body << " degenerate";
  body << '\n';
  for (const auto& p : pca.points)
    body << p.word << '\t' << p.language.str() << '\t' << p.x << '\t' << p.y << '\n';
  out << body.str();
}

}  // namespace mrasp
