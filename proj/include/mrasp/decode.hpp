#pragma once

// Beam search over log-probabilities. A hypothesis is a decoder token
// sequence (excluding <bos>) that ends in <eos>; <eos> is forced at max_len,
// so every hypothesis terminates. Scores are raw log-prob sums; optional
// length normalization divides by sequence length at comparison time.

#include <algorithm>
#include <cmath>
#include <vector>

#include "mrasp/model.hpp"
#include "mrasp/vocab.hpp"

namespace mrasp {

struct Hypothesis {
  std::vector<TokenId> ids;  // ends in <eos>
  double score = 0.0;        // sum of token log-probabilities
};

namespace detail {

// Log-softmax of the last decoder position for the given prefix. The source
// is encoded once per sentence and passed in as `memory`.
inline std::vector<double> next_token_logprobs(const ModelParameters& p, const Mat& memory,
                                               const std::vector<TokenId>& prefix_with_bos) {
  Mat logits = decode_logits(p, memory, prefix_with_bos);
  const size_t vocab = logits.cols;
  const double* lr = logits.row(logits.rows - 1);
  double maxv = lr[0];
  for (size_t v = 1; v < vocab; ++v) maxv = std::max(maxv, lr[v]);
  double denom = 0.0;
  for (size_t v = 0; v < vocab; ++v) denom += std::exp(lr[v] - maxv);
  const double log_denom = std::log(denom) + maxv;
  std::vector<double> out(vocab);
  for (size_t v = 0; v < vocab; ++v) out[v] = lr[v] - log_denom;
  return out;
}

}  // namespace detail

struct DecodeOptions {
  size_t beam = 5;
  size_t max_len = 32;                  // generated tokens, <eos> included
  std::vector<TokenId> forced_prefix;   // e.g. the target-language indicator
  bool length_normalize = false;
};

// Greedy argmax decoding (ties go to the lowest token id).
inline Hypothesis greedy_decode(const ModelParameters& p, const std::vector<TokenId>& src_ids,
                                const DecodeOptions& opts) {
  const Mat memory = encode_source(p, src_ids);
  std::vector<TokenId> prefix{Vocabulary::kBos};
  Hypothesis hyp;
  for (TokenId forced : opts.forced_prefix) {
    auto lp = detail::next_token_logprobs(p, memory, prefix);
    hyp.score += lp[forced];
    hyp.ids.push_back(forced);
    prefix.push_back(forced);
  }
  while (hyp.ids.size() < opts.max_len) {
    auto lp = detail::next_token_logprobs(p, memory, prefix);
    size_t best = 0;
    if (hyp.ids.size() + 1 == opts.max_len) {
      best = Vocabulary::kEos;  // forced termination
    } else {
      for (size_t v = 1; v < lp.size(); ++v)
        if (lp[v] > lp[best]) best = v;
    }
    hyp.score += lp[best];
    hyp.ids.push_back(TokenId(best));
    prefix.push_back(TokenId(best));
    if (best == Vocabulary::kEos) break;
  }
  return hyp;
}

inline Hypothesis beam_search_decode(const ModelParameters& p,
                                     const std::vector<TokenId>& src_ids,
                                     const DecodeOptions& opts) {
  if (opts.beam == 0) throw UsageError("InvalidBeam: beam must be >= 1");
  if (opts.max_len <= opts.forced_prefix.size())
    throw UsageError("InvalidMaxLen: max_len must exceed the forced prefix");

  struct Beam {
    std::vector<TokenId> ids;  // excludes <bos>
    double score = 0.0;
  };
  auto compare_score = [&](double a, size_t len_a, double b, size_t len_b) {
    const double sa = opts.length_normalize ? a / double(len_a) : a;
    const double sb = opts.length_normalize ? b / double(len_b) : b;
    return sa > sb;
  };

  const Mat memory = encode_source(p, src_ids);
  Beam root;
  // Score the forced prefix so hypothesis scores cover every token in ids.
  {
    std::vector<TokenId> ctx{Vocabulary::kBos};
    for (TokenId forced : opts.forced_prefix) {
      auto lp = detail::next_token_logprobs(p, memory, ctx);
      root.score += lp[forced];
      root.ids.push_back(forced);
      ctx.push_back(forced);
    }
  }

  std::vector<Beam> live{root};
  std::vector<Hypothesis> finished;

  while (!live.empty()) {
    const size_t next_len = live.front().ids.size() + 1;
    const bool force_eos = next_len == opts.max_len;

    struct Candidate {
      double score;
      size_t parent;
      TokenId token;
    };
    std::vector<Candidate> cands;
    for (size_t b = 0; b < live.size(); ++b) {
      auto ctx = live[b].ids;
      ctx.insert(ctx.begin(), Vocabulary::kBos);
      auto lp = detail::next_token_logprobs(p, memory, ctx);
      if (force_eos) {
        cands.push_back({live[b].score + lp[Vocabulary::kEos], b, Vocabulary::kEos});
      } else {
        for (size_t v = 0; v < lp.size(); ++v)
          cands.push_back({live[b].score + lp[v], b, TokenId(v)});
      }
    }
    // Deterministic order: score desc, then token id, then parent index.
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });

    // Top `beam` candidates only: <eos> within the selection retires its
    // hypothesis (so the live set may shrink), everything below the cut is
    // pruned. With beam=1 this is exactly greedy decoding.
    std::vector<Beam> next_live;
    for (size_t rank = 0; rank < cands.size() && rank < opts.beam; ++rank) {
      const auto& c = cands[rank];
      if (c.token == Vocabulary::kEos) {
        Hypothesis h;
        h.ids = live[c.parent].ids;
        h.ids.push_back(Vocabulary::kEos);
        h.score = c.score;
        finished.push_back(std::move(h));
      } else {
        Beam nb;
        nb.ids = live[c.parent].ids;
        nb.ids.push_back(c.token);
        nb.score = c.score;
        next_live.push_back(std::move(nb));
      }
    }
    if (force_eos) break;
    // Sound pruning without length normalization: extensions only lower raw
    // scores, so a live beam below the best finished score cannot win.
    if (!opts.length_normalize && !finished.empty()) {
      double best_fin = finished.front().score;
      for (const auto& f : finished) best_fin = std::max(best_fin, f.score);
      std::vector<Beam> kept;
      for (auto& b : next_live)
        if (b.score > best_fin) kept.push_back(std::move(b));
      next_live = std::move(kept);
    }
    live = std::move(next_live);
  }

  if (finished.empty()) throw NumericError("DecodeFailed: no finished hypothesis");
  size_t best = 0;
  for (size_t i = 1; i < finished.size(); ++i)
    if (compare_score(finished[i].score, finished[i].ids.size(), finished[best].score,
                      finished[best].ids.size()))
      best = i;
  return finished[best];
}

}  // namespace mrasp
