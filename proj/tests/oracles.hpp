#pragma once

// Independent oracles used by the test suites. These deliberately
// re-implement the algorithms from their definitions with naive code and
// must stay decoupled from the library implementations they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mrasp/model.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// Brute-force BPE: marked symbols, full pair recount every iteration,
// lexicographic tie-break on (left, right), stop when best weighted count < 2.

using MergeList = std::vector<std::pair<std::string, std::string>>;

inline std::vector<std::string> chars_with_markers(const std::string& word) {
  // ASCII-only corpora in these tests
  std::vector<std::string> syms;
  for (size_t i = 0; i < word.size(); ++i) {
    std::string s(1, word[i]);
    if (i + 1 < word.size()) s += "@@";
    syms.push_back(s);
  }
  return syms;
}

inline MergeList brute_force_bpe(const std::map<std::string, uint64_t>& word_freq,
                                 size_t num_merges) {
  std::vector<std::pair<std::vector<std::string>, uint64_t>> words;
  for (const auto& [w, f] : word_freq) words.emplace_back(chars_with_markers(w), f);

  MergeList merges;
  for (size_t it = 0; it < num_merges; ++it) {
    std::map<std::pair<std::string, std::string>, uint64_t> counts;
    for (const auto& [syms, f] : words)
      for (size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += f;

    bool found = false;
    std::pair<std::string, std::string> best;
    uint64_t best_count = 0;
    for (const auto& [pair, c] : counts) {
      if (c > best_count) {  // map order gives the lexicographic tie-break
        best = pair;
        best_count = c;
        found = true;
      }
    }
    if (!found) break;

    std::string merged = best.first;
    if (merged.size() > 2 && merged.substr(merged.size() - 2) == "@@")
      merged.resize(merged.size() - 2);
    merged += best.second;
    for (auto& [syms, f] : words) {
      std::vector<std::string> out;
      for (size_t i = 0; i < syms.size(); ++i) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          out.push_back(merged);
          ++i;
        } else {
          out.push_back(syms[i]);
        }
      }
      syms = out;
    }
    merges.push_back(best);
  }
  return merges;
}

// ---------------------------------------------------------------------------
// Straight-line transformer forward for tiny configs: plain loops over the
// parameter matrices, no shared helpers with the library.

namespace straightline {

using Vec = std::vector<double>;
using Grid = std::vector<Vec>;  // [rows][cols]

inline Grid layer_norm(const Grid& x, const mrasp::Mat& gain, const mrasp::Mat& bias) {
  Grid y(x.size(), Vec(x[0].size()));
  const size_t d = x[0].size();
  for (size_t t = 0; t < x.size(); ++t) {
    double mean = 0;
    for (double v : x[t]) mean += v;
    mean /= double(d);
    double var = 0;
    for (double v : x[t]) var += (v - mean) * (v - mean);
    var /= double(d);
    const double denom = std::sqrt(var + 1e-5);
    for (size_t j = 0; j < d; ++j)
      y[t][j] = (x[t][j] - mean) / denom * gain.at(0, j) + bias.at(0, j);
  }
  return y;
}

inline Grid affine(const Grid& x, const mrasp::Mat& w, const mrasp::Mat& b) {
  Grid y(x.size(), Vec(w.cols, 0.0));
  for (size_t t = 0; t < x.size(); ++t)
    for (size_t o = 0; o < w.cols; ++o) {
      double acc = b.empty() ? 0.0 : b.at(0, o);
      for (size_t i = 0; i < w.rows; ++i) acc += x[t][i] * w.at(i, o);
      y[t][o] = acc;
    }
  return y;
}

inline Grid attention(const Grid& q_src, const Grid& kv_src,
                      const mrasp::AttentionParams& ap, size_t heads, bool causal) {
  const size_t d = q_src[0].size();
  const size_t hd = d / heads;
  Grid q = affine(q_src, ap.wq, ap.bq);
  Grid k = affine(kv_src, ap.wk, ap.bk);
  Grid v = affine(kv_src, ap.wv, ap.bv);
  Grid concat(q.size(), Vec(d, 0.0));
  for (size_t h = 0; h < heads; ++h) {
    for (size_t i = 0; i < q.size(); ++i) {
      const size_t limit = causal ? i + 1 : k.size();
      Vec scores(limit);
      for (size_t j = 0; j < limit; ++j) {
        double s = 0;
        for (size_t c = 0; c < hd; ++c) s += q[i][h * hd + c] * k[j][h * hd + c];
        scores[j] = s / std::sqrt(double(hd));
      }
      double mx = *std::max_element(scores.begin(), scores.end());
      double z = 0;
      for (double& s : scores) {
        s = std::exp(s - mx);
        z += s;
      }
      for (size_t j = 0; j < limit; ++j)
        for (size_t c = 0; c < hd; ++c) concat[i][h * hd + c] += scores[j] / z * v[j][h * hd + c];
    }
  }
  return affine(concat, ap.wo, ap.bo);
}

inline Grid add(const Grid& a, const Grid& b) {
  Grid y = a;
  for (size_t t = 0; t < y.size(); ++t)
    for (size_t j = 0; j < y[t].size(); ++j) y[t][j] += b[t][j];
  return y;
}

inline Grid ffn(const Grid& x, const mrasp::FfnParams& fp) {
  Grid h = affine(x, fp.w1, fp.b1);
  for (auto& row : h)
    for (double& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  return affine(h, fp.w2, fp.b2);
}

// Independent forward: logits[t][v].
inline Grid forward(const mrasp::ModelParameters& p, const std::vector<mrasp::TokenId>& src,
                    const std::vector<mrasp::TokenId>& tgt) {
  const size_t d = p.config.model_dim;
  const double scale = std::sqrt(double(d));

  auto embed = [&](const std::vector<mrasp::TokenId>& ids) {
    Grid x(ids.size(), Vec(d));
    for (size_t t = 0; t < ids.size(); ++t)
      for (size_t j = 0; j < d; ++j)
        x[t][j] = p.tok_embed.at(ids[t], j) * scale + p.pos_embed.at(t, j);
    return x;
  };

  Grid h = embed(src);
  for (const auto& layer : p.enc) {
    h = add(h, attention(layer_norm(h, layer.ln1.gain, layer.ln1.bias),
                         layer_norm(h, layer.ln1.gain, layer.ln1.bias), layer.attn,
                         p.config.heads, false));
    h = add(h, ffn(layer_norm(h, layer.ln2.gain, layer.ln2.bias), layer.ffn));
  }
  Grid memory = layer_norm(h, p.enc_final_ln.gain, p.enc_final_ln.bias);

  Grid g = embed(tgt);
  for (const auto& layer : p.dec) {
    Grid n1 = layer_norm(g, layer.ln1.gain, layer.ln1.bias);
    g = add(g, attention(n1, n1, layer.self_attn, p.config.heads, true));
    Grid n2 = layer_norm(g, layer.ln2.gain, layer.ln2.bias);
    g = add(g, attention(n2, memory, layer.cross_attn, p.config.heads, false));
    g = add(g, ffn(layer_norm(g, layer.ln3.gain, layer.ln3.bias), layer.ffn));
  }
  Grid out = layer_norm(g, p.dec_final_ln.gain, p.dec_final_ln.bias);

  Grid logits(tgt.size(), Vec(p.config.vocab_size, 0.0));
  for (size_t t = 0; t < tgt.size(); ++t)
    for (size_t v = 0; v < p.config.vocab_size; ++v) {
      double acc = 0;
      for (size_t j = 0; j < d; ++j) acc += out[t][j] * p.tok_embed.at(v, j);
      logits[t][v] = acc;
    }
  return logits;
}

}  // namespace straightline

// ---------------------------------------------------------------------------
// Exhaustive decode: enumerate every token sequence of length <= max_len that
// ends in <eos> (forced at max_len), score by summed log-probabilities.

struct ScoredSequence {
  std::vector<mrasp::TokenId> ids;
  double score = -1e300;
};

inline std::vector<double> log_softmax_last_row(const mrasp::Mat& logits) {
  const double* lr = logits.row(logits.rows - 1);
  double mx = lr[0];
  for (size_t v = 1; v < logits.cols; ++v) mx = std::max(mx, lr[v]);
  double z = 0;
  for (size_t v = 0; v < logits.cols; ++v) z += std::exp(lr[v] - mx);
  std::vector<double> out(logits.cols);
  for (size_t v = 0; v < logits.cols; ++v) out[v] = lr[v] - (std::log(z) + mx);
  return out;
}

inline void enumerate_sequences(const mrasp::ModelParameters& p,
                                const std::vector<mrasp::TokenId>& src,
                                std::vector<mrasp::TokenId>& prefix_with_bos, double score,
                                size_t max_len, ScoredSequence& best) {
  const size_t generated = prefix_with_bos.size() - 1;
  mrasp::Mat logits = mrasp::forward(p, src, prefix_with_bos);
  auto lp = log_softmax_last_row(logits);

  // terminate with <eos> here
  {
    const double s = score + lp[mrasp::Vocabulary::kEos];
    if (s > best.score) {
      best.ids.assign(prefix_with_bos.begin() + 1, prefix_with_bos.end());
      best.ids.push_back(mrasp::Vocabulary::kEos);
      best.score = s;
    }
  }
  if (generated + 1 >= max_len) return;  // only <eos> fits in the last slot
  for (mrasp::TokenId v = 0; v < lp.size(); ++v) {
    if (v == mrasp::Vocabulary::kEos) continue;
    prefix_with_bos.push_back(v);
    enumerate_sequences(p, src, prefix_with_bos, score + lp[v], max_len, best);
    prefix_with_bos.pop_back();
  }
}

inline ScoredSequence exhaustive_best_sequence(const mrasp::ModelParameters& p,
                                               const std::vector<mrasp::TokenId>& src,
                                               size_t max_len) {
  ScoredSequence best;
  std::vector<mrasp::TokenId> prefix{mrasp::Vocabulary::kBos};
  enumerate_sequences(p, src, prefix, 0.0, max_len, best);
  return best;
}

// ---------------------------------------------------------------------------
// Power iteration with deflation: top-k eigenpairs of a symmetric matrix.

inline std::pair<std::vector<double>, std::vector<std::vector<double>>> power_iteration_eigen(
    std::vector<std::vector<double>> a, size_t k, size_t iters = 20000) {
  const size_t n = a.size();
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
  for (size_t comp = 0; comp < k; ++comp) {
    std::vector<double> v(n, 0.0);
    v[comp % n] = 1.0;
    v[(comp + 1) % n] = 0.5;  // deterministic, generic start
    double eig = 0.0;
    for (size_t it = 0; it < iters; ++it) {
      std::vector<double> w(n, 0.0);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) w[i] += a[i][j] * v[j];
      double norm = 0.0;
      for (double x : w) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-300) {  // null space; any unit vector orthogonal works
        eig = 0.0;
        break;
      }
      for (size_t i = 0; i < n; ++i) w[i] /= norm;
      double delta = 0.0;
      for (size_t i = 0; i < n; ++i) delta = std::max(delta, std::abs(w[i] - v[i]));
      v = w;
      eig = 0.0;
      std::vector<double> av(n, 0.0);
      for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) av[i] += a[i][j] * v[j];
      for (size_t i = 0; i < n; ++i) eig += v[i] * av[i];
      if (delta < 1e-13 && it > 10) break;
    }
    values.push_back(eig);
    vectors.push_back(v);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < n; ++j) a[i][j] -= eig * v[i] * v[j];
  }
  return {values, vectors};
}

// ---------------------------------------------------------------------------
// Independent erf via its Maclaurin series in long double.

inline long double erf_series(long double x) {
  // erf(x) = 2/sqrt(pi) * sum_{n>=0} (-1)^n x^(2n+1) / (n! (2n+1))
  const long double two_over_sqrt_pi = 1.128379167095512573896L;
  long double term = x, sum = 0.0L;
  for (int n = 0; n < 200; ++n) {
    sum += term / (2 * n + 1);
    term *= -x * x / (long double)(n + 1);
    if (std::abs(term) < 1e-30L) break;
  }
  return two_over_sqrt_pi * sum;
}

}  // namespace oracles
