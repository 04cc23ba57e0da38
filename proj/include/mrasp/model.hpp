#pragma once

// Pre-norm transformer encoder-decoder with exact, hand-derived gradients.
// Double precision throughout; every backward path is checked against central
// finite differences in the test suite.
//
// Conventions (the test oracle mirrors these exactly):
//   - token embedding rows are scaled by sqrt(model_dim) before the learned
//     position embedding is added; the same table is the decoder input
//     embedding and the output projection (three-way tying)
//   - layer norm epsilon 1e-5, applied pre-sublayer; a final layer norm
//     closes each stack
//   - attention scores divided by sqrt(head_dim); decoder self-attention is
//     causal; feed-forward uses exact Gaussian GeLU
//   - dropout (inverted, seeded) on the embedding output and on each
//     sublayer output before its residual add; eval mode bypasses it

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mrasp/common.hpp"
#include "mrasp/rng.hpp"
#include "mrasp/tensor.hpp"
#include "mrasp/vocab.hpp"

namespace mrasp {

inline constexpr double kLayerNormEps = 1e-5;

// x * Phi(x), Phi the standard normal CDF.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) * 0.3989422804014326779;  // 1/sqrt(2*pi)
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

struct ModelConfig {
  size_t enc_layers = 2;
  size_t dec_layers = 2;
  size_t model_dim = 64;
  size_t heads = 4;
  size_t ffn_dim = 256;
  size_t max_positions = 64;
  size_t vocab_size = 0;
  double dropout = 0.1;
  double label_smoothing = 0.0;

  void validate() const {
    if (model_dim == 0 || heads == 0 || model_dim % heads != 0)
      throw UsageError("InvalidConfig: model_dim must be a positive multiple of heads");
    if (enc_layers == 0 || dec_layers == 0 || ffn_dim == 0 || max_positions == 0 ||
        vocab_size == 0)
      throw UsageError("InvalidConfig: zero-sized dimension");
    if (dropout < 0.0 || dropout >= 1.0)
      throw UsageError("InvalidConfig: dropout must be in [0,1)");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
      throw UsageError("InvalidConfig: label_smoothing must be in [0,1)");
  }

  size_t head_dim() const { return model_dim / heads; }
};

struct LayerNormParams {
  Mat gain, bias;  // [1 x d]
};

struct AttentionParams {
  Mat wq, wk, wv, wo;  // [d x d], stored input-major
  Mat bq, bk, bv, bo;  // [1 x d]
};

struct FfnParams {
  Mat w1, b1, w2, b2;  // w1: [d x f], w2: [f x d]
};

struct EncoderLayerParams {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  FfnParams ffn;
};

struct DecoderLayerParams {
  LayerNormParams ln1, ln2, ln3;
  AttentionParams self_attn, cross_attn;
  FfnParams ffn;
};

struct ModelParameters {
  ModelConfig config;
  Mat tok_embed;  // [V x d]; tied output projection
  Mat pos_embed;  // [max_positions x d]
  std::vector<EncoderLayerParams> enc;
  std::vector<DecoderLayerParams> dec;
  LayerNormParams enc_final_ln, dec_final_ln;
};

enum class InitKind { kWeight, kBias, kGain };

struct NamedTensor {
  std::string name;
  Mat* mat;
  InitKind kind;
};

namespace detail {

template <typename P, typename NT>
void collect_ln(P& ln, const std::string& prefix, std::vector<NT>& out) {
  out.push_back({prefix + ".gain", &ln.gain, InitKind::kGain});
  out.push_back({prefix + ".bias", &ln.bias, InitKind::kBias});
}

template <typename P, typename NT>
void collect_attn(P& attn, const std::string& prefix, std::vector<NT>& out) {
  out.push_back({prefix + ".wq", &attn.wq, InitKind::kWeight});
  out.push_back({prefix + ".wk", &attn.wk, InitKind::kWeight});
  out.push_back({prefix + ".wv", &attn.wv, InitKind::kWeight});
  out.push_back({prefix + ".wo", &attn.wo, InitKind::kWeight});
  out.push_back({prefix + ".bq", &attn.bq, InitKind::kBias});
  out.push_back({prefix + ".bk", &attn.bk, InitKind::kBias});
  out.push_back({prefix + ".bv", &attn.bv, InitKind::kBias});
  out.push_back({prefix + ".bo", &attn.bo, InitKind::kBias});
}

template <typename P, typename NT>
void collect_ffn(P& ffn, const std::string& prefix, std::vector<NT>& out) {
  out.push_back({prefix + ".w1", &ffn.w1, InitKind::kWeight});
  out.push_back({prefix + ".b1", &ffn.b1, InitKind::kBias});
  out.push_back({prefix + ".w2", &ffn.w2, InitKind::kWeight});
  out.push_back({prefix + ".b2", &ffn.b2, InitKind::kBias});
}

}  // namespace detail

// Canonical tensor order: drives init draws, Adam state, checkpoints, and the
// finite-difference sweep.
inline std::vector<NamedTensor> tensor_list(ModelParameters& p) {
  std::vector<NamedTensor> out;
  out.push_back({"tok_embed", &p.tok_embed, InitKind::kWeight});
  out.push_back({"pos_embed", &p.pos_embed, InitKind::kWeight});
  for (size_t l = 0; l < p.enc.size(); ++l) {
    const std::string lp = "enc." + std::to_string(l);
    detail::collect_ln(p.enc[l].ln1, lp + ".ln1", out);
    detail::collect_attn(p.enc[l].attn, lp + ".attn", out);
    detail::collect_ln(p.enc[l].ln2, lp + ".ln2", out);
    detail::collect_ffn(p.enc[l].ffn, lp + ".ffn", out);
  }
  detail::collect_ln(p.enc_final_ln, "enc_final_ln", out);
  for (size_t l = 0; l < p.dec.size(); ++l) {
    const std::string lp = "dec." + std::to_string(l);
    detail::collect_ln(p.dec[l].ln1, lp + ".ln1", out);
    detail::collect_attn(p.dec[l].self_attn, lp + ".self_attn", out);
    detail::collect_ln(p.dec[l].ln2, lp + ".ln2", out);
    detail::collect_attn(p.dec[l].cross_attn, lp + ".cross_attn", out);
    detail::collect_ln(p.dec[l].ln3, lp + ".ln3", out);
    detail::collect_ffn(p.dec[l].ffn, lp + ".ffn", out);
  }
  detail::collect_ln(p.dec_final_ln, "dec_final_ln", out);
  return out;
}

struct NamedTensorView {
  std::string name;
  const Mat* mat;
  InitKind kind;
};

inline std::vector<NamedTensorView> tensor_list(const ModelParameters& p) {
  auto mut = tensor_list(const_cast<ModelParameters&>(p));
  std::vector<NamedTensorView> out;
  out.reserve(mut.size());
  for (auto& nt : mut) out.push_back({std::move(nt.name), nt.mat, nt.kind});
  return out;
}

namespace detail {

inline void shape_ln(LayerNormParams& ln, size_t d) {
  ln.gain = Mat(1, d);
  ln.bias = Mat(1, d);
}

inline void shape_attn(AttentionParams& a, size_t d) {
  a.wq = Mat(d, d);
  a.wk = Mat(d, d);
  a.wv = Mat(d, d);
  a.wo = Mat(d, d);
  a.bq = Mat(1, d);
  a.bk = Mat(1, d);
  a.bv = Mat(1, d);
  a.bo = Mat(1, d);
}

inline void shape_ffn(FfnParams& f, size_t d, size_t ffn) {
  f.w1 = Mat(d, ffn);
  f.b1 = Mat(1, ffn);
  f.w2 = Mat(ffn, d);
  f.b2 = Mat(1, d);
}

}  // namespace detail

inline ModelParameters make_parameters(const ModelConfig& cfg) {
  cfg.validate();
  ModelParameters p;
  p.config = cfg;
  const size_t d = cfg.model_dim;
  p.tok_embed = Mat(cfg.vocab_size, d);
  p.pos_embed = Mat(cfg.max_positions, d);
  p.enc.resize(cfg.enc_layers);
  p.dec.resize(cfg.dec_layers);
  for (auto& l : p.enc) {
    detail::shape_ln(l.ln1, d);
    detail::shape_attn(l.attn, d);
    detail::shape_ln(l.ln2, d);
    detail::shape_ffn(l.ffn, d, cfg.ffn_dim);
  }
  for (auto& l : p.dec) {
    detail::shape_ln(l.ln1, d);
    detail::shape_attn(l.self_attn, d);
    detail::shape_ln(l.ln2, d);
    detail::shape_attn(l.cross_attn, d);
    detail::shape_ln(l.ln3, d);
    detail::shape_ffn(l.ffn, d, cfg.ffn_dim);
  }
  detail::shape_ln(p.enc_final_ln, d);
  detail::shape_ln(p.dec_final_ln, d);
  return p;
}

// Weights ~ uniform(+-sqrt(6/(fan_in+fan_out))), biases 0, layer-norm gains 1.
// zero_output_projection zeroes the tied embedding table, which makes every
// output softmax row exactly uniform.
inline ModelParameters init_parameters(const ModelConfig& cfg, uint64_t seed,
                                       bool zero_output_projection = false) {
  ModelParameters p = make_parameters(cfg);
  Rng rng(derive_seed(seed, "init"));
  for (auto& nt : tensor_list(p)) {
    switch (nt.kind) {
      case InitKind::kGain:
        std::fill(nt.mat->a.begin(), nt.mat->a.end(), 1.0);
        break;
      case InitKind::kBias:
        break;  // zero
      case InitKind::kWeight: {
        const double bound = std::sqrt(6.0 / double(nt.mat->rows + nt.mat->cols));
        for (double& v : nt.mat->a) v = rng.next_in(-bound, bound);
        break;
      }
    }
  }
  if (zero_output_projection) p.tok_embed.zero();
  return p;
}

inline ModelParameters zeros_like(const ModelParameters& p) {
  return make_parameters(p.config);
}

// ---------------------------------------------------------------------------
// Forward / backward

// Seeded inverted dropout; null rng (eval mode) disables it.
struct DropoutState {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }

  // mask holds 0 or 1/(1-rate); draw order is row-major generation order.
  Mat make_mask(size_t rows, size_t cols) {
    Mat m(rows, cols);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (double& v : m.a) v = rng->bernoulli(rate) ? 0.0 : keep_scale;
    return m;
  }
};

namespace detail {

struct LayerNormTrace {
  Mat normalized;           // x-hat, before gain/bias
  std::vector<double> inv_std;  // per row
};

inline void layer_norm_forward(const Mat& x, const LayerNormParams& ln, Mat& y,
                               LayerNormTrace& trace) {
  const size_t d = x.cols;
  y = Mat(x.rows, d);
  trace.normalized = Mat(x.rows, d);
  trace.inv_std.assign(x.rows, 0.0);
  for (size_t t = 0; t < x.rows; ++t) {
    const double* xr = x.row(t);
    double mean = 0.0;
    for (size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= double(d);
    double var = 0.0;
    for (size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= double(d);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    trace.inv_std[t] = inv_std;
    double* nr = trace.normalized.row(t);
    double* yr = y.row(t);
    for (size_t j = 0; j < d; ++j) {
      nr[j] = (xr[j] - mean) * inv_std;
      yr[j] = nr[j] * ln.gain.at(0, j) + ln.bias.at(0, j);
    }
  }
}

inline void layer_norm_backward(const Mat& dy, const LayerNormParams& ln,
                                const LayerNormTrace& trace, Mat& dx_accum,
                                LayerNormParams& dln) {
  const size_t d = dy.cols;
  for (size_t t = 0; t < dy.rows; ++t) {
    const double* dyr = dy.row(t);
    const double* nr = trace.normalized.row(t);
    double* dgr = dln.gain.row(0);
    double* dbr = dln.bias.row(0);
    double m1 = 0.0, m2 = 0.0;
    for (size_t j = 0; j < d; ++j) {
      const double dn = dyr[j] * ln.gain.at(0, j);
      m1 += dn;
      m2 += dn * nr[j];
      dgr[j] += dyr[j] * nr[j];
      dbr[j] += dyr[j];
    }
    m1 /= double(d);
    m2 /= double(d);
    double* dxr = dx_accum.row(t);
    for (size_t j = 0; j < d; ++j) {
      const double dn = dyr[j] * ln.gain.at(0, j);
      dxr[j] += trace.inv_std[t] * (dn - m1 - nr[j] * m2);
    }
  }
}

struct AttentionTrace {
  Mat normed;             // LN output fed to q/k/v (self) or to q (cross)
  Mat q, k, v;            // [T x d]
  std::vector<Mat> probs; // per head, [Tq x Tk]
  Mat heads_out;          // concatenated head outputs, before wo
  Mat drop_mask;          // empty in eval mode
  LayerNormTrace ln;
};

// Self- or cross-attention. For cross-attention `memory` supplies k/v and
// `normed` (the LN of the decoder stream) supplies q.
inline void attention_forward(const Mat& normed, const Mat& memory, bool causal,
                              const AttentionParams& ap, size_t heads, Mat& out,
                              AttentionTrace& tr) {
  const size_t d = normed.cols;
  const size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(double(hd));
  const Mat& kv_src = memory.empty() ? normed : memory;
  const size_t tq = normed.rows, tk = kv_src.rows;

  tr.q = Mat(tq, d);
  tr.k = Mat(tk, d);
  tr.v = Mat(tk, d);
  matmul(normed, ap.wq, tr.q);
  add_row_inplace(tr.q, ap.bq);
  matmul(kv_src, ap.wk, tr.k);
  add_row_inplace(tr.k, ap.bk);
  matmul(kv_src, ap.wv, tr.v);
  add_row_inplace(tr.v, ap.bv);

  tr.heads_out = Mat(tq, d);
  tr.probs.assign(heads, Mat());
  for (size_t h = 0; h < heads; ++h) {
    const size_t off = h * hd;
    Mat& p = tr.probs[h];
    p = Mat(tq, tk);
    for (size_t i = 0; i < tq; ++i) {
      const size_t limit = causal ? i + 1 : tk;
      double maxv = -1e300;
      for (size_t j = 0; j < limit; ++j) {
        const double s = dot(tr.q.row(i) + off, tr.k.row(j) + off, hd) * scale;
        p.at(i, j) = s;
        maxv = std::max(maxv, s);
      }
      double denom = 0.0;
      for (size_t j = 0; j < limit; ++j) {
        const double e = std::exp(p.at(i, j) - maxv);
        p.at(i, j) = e;
        denom += e;
      }
      for (size_t j = 0; j < limit; ++j) p.at(i, j) /= denom;
      double* ho = tr.heads_out.row(i) + off;
      for (size_t j = 0; j < limit; ++j) {
        const double pij = p.at(i, j);
        const double* vr = tr.v.row(j) + off;
        for (size_t c = 0; c < hd; ++c) ho[c] += pij * vr[c];
      }
    }
  }
  out = Mat(tq, d);
  matmul(tr.heads_out, ap.wo, out);
  add_row_inplace(out, ap.bo);
}

// d_out is the gradient at the attention output (post wo, pre dropout).
// d_normed accumulates the query-side gradient; d_memory (nullable)
// accumulates the key/value-side gradient for cross-attention.
inline void attention_backward(const Mat& d_out, const Mat& normed, const Mat& memory,
                               bool causal, const AttentionParams& ap, size_t heads,
                               const AttentionTrace& tr, Mat& d_normed, Mat* d_memory,
                               AttentionParams& dap) {
  const size_t d = normed.cols;
  const size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(double(hd));
  const Mat& kv_src = memory.empty() ? normed : memory;
  const size_t tq = normed.rows, tk = kv_src.rows;

  Mat d_heads(tq, d);
  matmul_transposed(d_out, ap.wo, d_heads);
  accumulate_outer(tr.heads_out, d_out, dap.wo);
  accumulate_row_sums(d_out, dap.bo);

  Mat dq(tq, d), dk(tk, d), dv(tk, d);
  for (size_t h = 0; h < heads; ++h) {
    const size_t off = h * hd;
    const Mat& p = tr.probs[h];
    for (size_t i = 0; i < tq; ++i) {
      const size_t limit = causal ? i + 1 : tk;
      const double* dho = d_heads.row(i) + off;
      // dP and softmax backward, row i
      double inner = 0.0;
      std::vector<double> dp(limit);
      for (size_t j = 0; j < limit; ++j) {
        dp[j] = dot(dho, tr.v.row(j) + off, hd);
        inner += dp[j] * p.at(i, j);
      }
      for (size_t j = 0; j < limit; ++j) {
        const double ds = p.at(i, j) * (dp[j] - inner) * scale;
        const double pij = p.at(i, j);
        double* dvr = dv.row(j) + off;
        for (size_t c = 0; c < hd; ++c) dvr[c] += pij * dho[c];
        const double* kr = tr.k.row(j) + off;
        const double* qr = tr.q.row(i) + off;
        double* dqr = dq.row(i) + off;
        double* dkr = dk.row(j) + off;
        for (size_t c = 0; c < hd; ++c) {
          dqr[c] += ds * kr[c];
          dkr[c] += ds * qr[c];
        }
      }
    }
  }

  matmul_transposed(dq, ap.wq, d_normed, /*accumulate=*/true);
  accumulate_outer(normed, dq, dap.wq);
  accumulate_row_sums(dq, dap.bq);
  Mat& d_kv = d_memory ? *d_memory : d_normed;
  matmul_transposed(dk, ap.wk, d_kv, /*accumulate=*/true);
  accumulate_outer(kv_src, dk, dap.wk);
  accumulate_row_sums(dk, dap.bk);
  matmul_transposed(dv, ap.wv, d_kv, /*accumulate=*/true);
  accumulate_outer(kv_src, dv, dap.wv);
  accumulate_row_sums(dv, dap.bv);
}

struct FfnTrace {
  Mat normed;      // LN output fed to w1
  Mat pre_act;     // x*w1+b1
  Mat activated;   // gelu(pre_act)
  Mat drop_mask;
  LayerNormTrace ln;
};

inline void ffn_forward(const Mat& normed, const FfnParams& fp, Mat& out, FfnTrace& tr) {
  tr.pre_act = Mat(normed.rows, fp.w1.cols);
  matmul(normed, fp.w1, tr.pre_act);
  add_row_inplace(tr.pre_act, fp.b1);
  tr.activated = Mat(tr.pre_act.rows, tr.pre_act.cols);
  for (size_t i = 0; i < tr.pre_act.a.size(); ++i)
    tr.activated.a[i] = gelu(tr.pre_act.a[i]);
  out = Mat(normed.rows, fp.w2.cols);
  matmul(tr.activated, fp.w2, out);
  add_row_inplace(out, fp.b2);
}

inline void ffn_backward(const Mat& d_out, const Mat& normed, const FfnParams& fp,
                         const FfnTrace& tr, Mat& d_normed, FfnParams& dfp) {
  Mat d_act(tr.activated.rows, tr.activated.cols);
  matmul_transposed(d_out, fp.w2, d_act);
  accumulate_outer(tr.activated, d_out, dfp.w2);
  accumulate_row_sums(d_out, dfp.b2);
  for (size_t i = 0; i < d_act.a.size(); ++i) d_act.a[i] *= gelu_grad(tr.pre_act.a[i]);
  matmul_transposed(d_act, fp.w1, d_normed, /*accumulate=*/true);
  accumulate_outer(normed, d_act, dfp.w1);
  accumulate_row_sums(d_act, dfp.b1);
}

struct EncoderLayerTrace {
  Mat input;  // residual stream entering the layer
  AttentionTrace attn;
  Mat after_attn;  // residual stream after the attention sublayer
  FfnTrace ffn;
};

struct DecoderLayerTrace {
  Mat input;
  AttentionTrace self_attn;
  Mat after_self;
  AttentionTrace cross_attn;
  Mat after_cross;
  FfnTrace ffn;
};

struct ForwardTrace {
  std::vector<TokenId> src_ids, tgt_ids;
  Mat enc_embed_mask, dec_embed_mask;
  std::vector<EncoderLayerTrace> enc_layers;
  LayerNormTrace enc_final_ln;
  Mat enc_pre_final;   // encoder stream before the final LN
  Mat memory;          // encoder output
  std::vector<DecoderLayerTrace> dec_layers;
  LayerNormTrace dec_final_ln;
  Mat dec_pre_final;
  Mat dec_out;         // decoder output after final LN
};

inline void apply_mask(Mat& x, const Mat& mask) {
  if (mask.empty()) return;
  for (size_t i = 0; i < x.a.size(); ++i) x.a[i] *= mask.a[i];
}

}  // namespace detail

namespace detail {

inline Mat embed(const ModelParameters& p, const std::vector<TokenId>& ids,
                 DropoutState& drop, Mat& mask_out) {
  const size_t d = p.config.model_dim;
  const double scale = std::sqrt(double(d));
  Mat x(ids.size(), d);
  for (size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= p.config.vocab_size)
      throw UsageError("IdOutOfRange: id " + std::to_string(ids[t]) + " >= vocab " +
                       std::to_string(p.config.vocab_size));
    const double* er = p.tok_embed.row(ids[t]);
    const double* pr = p.pos_embed.row(t);
    double* xr = x.row(t);
    for (size_t j = 0; j < d; ++j) xr[j] = er[j] * scale + pr[j];
  }
  if (drop.active()) {
    mask_out = drop.make_mask(x.rows, x.cols);
    apply_mask(x, mask_out);
  }
  return x;
}

inline void check_lengths(const ModelParameters& p, size_t src_len, size_t tgt_len) {
  if (src_len > p.config.max_positions || tgt_len > p.config.max_positions)
    throw UsageError("LengthOverflow: sequence exceeds max_positions=" +
                     std::to_string(p.config.max_positions));
  if (src_len == 0 || tgt_len == 0) throw UsageError("EmptySequence");
}

}  // namespace detail

namespace detail {

inline void encoder_forward(const ModelParameters& p, const std::vector<TokenId>& src_ids,
                            ForwardTrace& tr, DropoutState& drop) {
  const size_t heads = p.config.heads;
  tr.src_ids = src_ids;
  Mat h = embed(p, src_ids, drop, tr.enc_embed_mask);
  tr.enc_layers.resize(p.enc.size());
  for (size_t l = 0; l < p.enc.size(); ++l) {
    auto& lt = tr.enc_layers[l];
    lt.input = h;
    Mat normed;
    layer_norm_forward(h, p.enc[l].ln1, normed, lt.attn.ln);
    lt.attn.normed = std::move(normed);
    Mat attn_out;
    attention_forward(lt.attn.normed, Mat(), /*causal=*/false, p.enc[l].attn, heads,
                      attn_out, lt.attn);
    if (drop.active()) {
      lt.attn.drop_mask = drop.make_mask(attn_out.rows, attn_out.cols);
      apply_mask(attn_out, lt.attn.drop_mask);
    }
    add_inplace(h, attn_out);
    lt.after_attn = h;
    Mat ffn_normed;
    layer_norm_forward(h, p.enc[l].ln2, ffn_normed, lt.ffn.ln);
    lt.ffn.normed = std::move(ffn_normed);
    Mat ffn_out;
    ffn_forward(lt.ffn.normed, p.enc[l].ffn, ffn_out, lt.ffn);
    if (drop.active()) {
      lt.ffn.drop_mask = drop.make_mask(ffn_out.rows, ffn_out.cols);
      apply_mask(ffn_out, lt.ffn.drop_mask);
    }
    add_inplace(h, ffn_out);
  }
  tr.enc_pre_final = h;
  layer_norm_forward(h, p.enc_final_ln, tr.memory, tr.enc_final_ln);
}

// Decoder stack over tr.memory; returns logits through the tied projection.
inline Mat decoder_forward(const ModelParameters& p, const std::vector<TokenId>& tgt_ids,
                           ForwardTrace& tr, DropoutState& drop) {
  const size_t heads = p.config.heads;
  tr.tgt_ids = tgt_ids;
  Mat g = embed(p, tgt_ids, drop, tr.dec_embed_mask);
  tr.dec_layers.resize(p.dec.size());
  for (size_t l = 0; l < p.dec.size(); ++l) {
    auto& lt = tr.dec_layers[l];
    lt.input = g;
    Mat normed;
    layer_norm_forward(g, p.dec[l].ln1, normed, lt.self_attn.ln);
    lt.self_attn.normed = std::move(normed);
    Mat self_out;
    attention_forward(lt.self_attn.normed, Mat(), /*causal=*/true, p.dec[l].self_attn,
                      heads, self_out, lt.self_attn);
    if (drop.active()) {
      lt.self_attn.drop_mask = drop.make_mask(self_out.rows, self_out.cols);
      apply_mask(self_out, lt.self_attn.drop_mask);
    }
    add_inplace(g, self_out);
    lt.after_self = g;
    Mat cross_normed;
    layer_norm_forward(g, p.dec[l].ln2, cross_normed, lt.cross_attn.ln);
    lt.cross_attn.normed = std::move(cross_normed);
    Mat cross_out;
    attention_forward(lt.cross_attn.normed, tr.memory, /*causal=*/false, p.dec[l].cross_attn,
                      heads, cross_out, lt.cross_attn);
    if (drop.active()) {
      lt.cross_attn.drop_mask = drop.make_mask(cross_out.rows, cross_out.cols);
      apply_mask(cross_out, lt.cross_attn.drop_mask);
    }
    add_inplace(g, cross_out);
    lt.after_cross = g;
    Mat ffn_normed;
    layer_norm_forward(g, p.dec[l].ln3, ffn_normed, lt.ffn.ln);
    lt.ffn.normed = std::move(ffn_normed);
    Mat ffn_out;
    ffn_forward(lt.ffn.normed, p.dec[l].ffn, ffn_out, lt.ffn);
    if (drop.active()) {
      lt.ffn.drop_mask = drop.make_mask(ffn_out.rows, ffn_out.cols);
      apply_mask(ffn_out, lt.ffn.drop_mask);
    }
    add_inplace(g, ffn_out);
  }
  tr.dec_pre_final = g;
  layer_norm_forward(g, p.dec_final_ln, tr.dec_out, tr.dec_final_ln);

  Mat logits(tgt_ids.size(), p.config.vocab_size);
  matmul_transposed(tr.dec_out, p.tok_embed, logits);
  return logits;
}

}  // namespace detail

// Full forward pass. `tgt_ids` is the decoder input (caller prepends <bos>);
// logits row t is the next-token distribution after tgt_ids[0..t].
// Pass a DropoutState with a non-null rng for training mode.
inline Mat forward(const ModelParameters& p, const std::vector<TokenId>& src_ids,
                   const std::vector<TokenId>& tgt_ids, detail::ForwardTrace* trace = nullptr,
                   DropoutState drop = {}) {
  detail::check_lengths(p, src_ids.size(), tgt_ids.size());
  detail::ForwardTrace local;
  detail::ForwardTrace& tr = trace ? *trace : local;
  detail::encoder_forward(p, src_ids, tr, drop);
  return detail::decoder_forward(p, tgt_ids, tr, drop);
}

// Evaluation-mode encoder output, reusable across incremental decoder calls.
inline Mat encode_source(const ModelParameters& p, const std::vector<TokenId>& src_ids) {
  detail::check_lengths(p, src_ids.size(), 1);
  detail::ForwardTrace tr;
  DropoutState off;
  detail::encoder_forward(p, src_ids, tr, off);
  return std::move(tr.memory);
}

// Decoder-only forward against a precomputed source encoding (eval mode).
inline Mat decode_logits(const ModelParameters& p, const Mat& memory,
                         const std::vector<TokenId>& tgt_ids) {
  detail::check_lengths(p, 1, tgt_ids.size());
  detail::ForwardTrace tr;
  tr.memory = memory;
  DropoutState off;
  return detail::decoder_forward(p, tgt_ids, tr, off);
}

namespace detail {

inline void embed_backward(const Mat& d_embed, const std::vector<TokenId>& ids,
                           double scale, ModelParameters& grads) {
  const size_t d = d_embed.cols;
  for (size_t t = 0; t < ids.size(); ++t) {
    double* er = grads.tok_embed.row(ids[t]);
    double* pr = grads.pos_embed.row(t);
    const double* dr = d_embed.row(t);
    for (size_t j = 0; j < d; ++j) {
      er[j] += dr[j] * scale;
      pr[j] += dr[j];
    }
  }
}

// Backward through the whole graph given d_logits. Gradients accumulate into
// `grads` (parameter-shaped).
inline void backward(const ModelParameters& p, const ForwardTrace& tr, const Mat& d_logits,
                     ModelParameters& grads) {
  const size_t heads = p.config.heads;
  const size_t d = p.config.model_dim;
  const double embed_scale = std::sqrt(double(d));

  // Tied output projection: logits = dec_out * tok_embed^T.
  //   d_dec_out = d_logits * tok_embed;  d_tok_embed += d_logits^T * dec_out
  Mat d_dec_out(tr.dec_out.rows, d);
  matmul(d_logits, p.tok_embed, d_dec_out);
  accumulate_outer(d_logits, tr.dec_out, grads.tok_embed);

  Mat dg(tr.dec_out.rows, d);
  layer_norm_backward(d_dec_out, p.dec_final_ln, tr.dec_final_ln, dg, grads.dec_final_ln);

  Mat d_memory(tr.memory.rows, d);  // cross-attention gradient, summed over layers

  for (size_t l = p.dec.size(); l-- > 0;) {
    const auto& lt = tr.dec_layers[l];
    const auto& lp = p.dec[l];
    auto& lg = grads.dec[l];
    // FFN sublayer: dg flows through the skip and through LN3 -> FFN
    Mat d_ffn_out = dg;
    apply_mask(d_ffn_out, lt.ffn.drop_mask);
    Mat d_ffn_normed(dg.rows, d);
    ffn_backward(d_ffn_out, lt.ffn.normed, lp.ffn, lt.ffn, d_ffn_normed, lg.ffn);
    layer_norm_backward(d_ffn_normed, lp.ln3, lt.ffn.ln, dg, lg.ln3);
    // Cross-attention sublayer
    Mat d_cross_out = dg;
    apply_mask(d_cross_out, lt.cross_attn.drop_mask);
    Mat d_cross_normed(dg.rows, d);
    attention_backward(d_cross_out, lt.cross_attn.normed, tr.memory, /*causal=*/false,
                       lp.cross_attn, heads, lt.cross_attn, d_cross_normed, &d_memory,
                       lg.cross_attn);
    layer_norm_backward(d_cross_normed, lp.ln2, lt.cross_attn.ln, dg, lg.ln2);
    // Self-attention sublayer
    Mat d_self_out = dg;
    apply_mask(d_self_out, lt.self_attn.drop_mask);
    Mat d_self_normed(dg.rows, d);
    attention_backward(d_self_out, lt.self_attn.normed, Mat(), /*causal=*/true,
                       lp.self_attn, heads, lt.self_attn, d_self_normed, nullptr,
                       lg.self_attn);
    layer_norm_backward(d_self_normed, lp.ln1, lt.self_attn.ln, dg, lg.ln1);
  }

  apply_mask(dg, tr.dec_embed_mask);
  embed_backward(dg, tr.tgt_ids, embed_scale, grads);

  // Encoder, entered through the gradient at its final layer norm
  Mat de(tr.memory.rows, d);
  layer_norm_backward(d_memory, p.enc_final_ln, tr.enc_final_ln, de, grads.enc_final_ln);

  for (size_t l = p.enc.size(); l-- > 0;) {
    const auto& lt = tr.enc_layers[l];
    const auto& lp = p.enc[l];
    auto& lg = grads.enc[l];
    Mat d_ffn_out = de;
    apply_mask(d_ffn_out, lt.ffn.drop_mask);
    Mat d_ffn_normed(de.rows, d);
    ffn_backward(d_ffn_out, lt.ffn.normed, lp.ffn, lt.ffn, d_ffn_normed, lg.ffn);
    layer_norm_backward(d_ffn_normed, lp.ln2, lt.ffn.ln, de, lg.ln2);
    Mat d_attn_out = de;
    apply_mask(d_attn_out, lt.attn.drop_mask);
    Mat d_attn_normed(de.rows, d);
    attention_backward(d_attn_out, lt.attn.normed, Mat(), /*causal=*/false, lp.attn,
                       heads, lt.attn, d_attn_normed, nullptr, lg.attn);
    layer_norm_backward(d_attn_normed, lp.ln1, lt.attn.ln, de, lg.ln1);
  }

  apply_mask(de, tr.enc_embed_mask);
  embed_backward(de, tr.src_ids, embed_scale, grads);
}

}  // namespace detail

// One training example: encoder input, decoder input, and the gold next
// tokens (same length as tgt_in).
struct Example {
  std::vector<TokenId> src_ids;
  std::vector<TokenId> tgt_in;
  std::vector<TokenId> tgt_out;
};

struct LossResult {
  double loss = 0.0;       // mean negative log-likelihood per target token
  size_t target_tokens = 0;
};

namespace detail {

// Softmax cross-entropy over one sentence's logits. Returns summed NLL and
// writes d(sum NLL)/d(logits) if d_logits is non-null.
inline double cross_entropy(const Mat& logits, const std::vector<TokenId>& gold,
                            double label_smoothing, Mat* d_logits) {
  const size_t vocab = logits.cols;
  double total = 0.0;
  for (size_t t = 0; t < gold.size(); ++t) {
    const double* lr = logits.row(t);
    double maxv = lr[0];
    for (size_t v = 1; v < vocab; ++v) maxv = std::max(maxv, lr[v]);
    double denom = 0.0;
    for (size_t v = 0; v < vocab; ++v) denom += std::exp(lr[v] - maxv);
    const double log_denom = std::log(denom) + maxv;
    if (gold[t] >= vocab) throw UsageError("IdOutOfRange: gold token id");
    double nll;
    if (label_smoothing == 0.0) {
      nll = log_denom - lr[gold[t]];
    } else {
      // Target q = (1-eps) one-hot + eps/V uniform:
      //   nll = -sum_v q_v log p_v = log_denom - (1-eps) l_gold - (eps/V) sum_v l_v
      const double eps = label_smoothing;
      double sum_logits = 0.0;
      for (size_t v = 0; v < vocab; ++v) sum_logits += lr[v];
      nll = log_denom - (1.0 - eps) * lr[gold[t]] - eps / double(vocab) * sum_logits;
    }
    if (!std::isfinite(nll)) throw NumericError("NaNLoss: non-finite log-likelihood");
    total += nll;
    if (d_logits) {
      double* dr = d_logits->row(t);
      const double eps = label_smoothing;
      for (size_t v = 0; v < vocab; ++v) {
        const double prob = std::exp(lr[v] - log_denom);
        const double target = (v == gold[t] ? 1.0 - eps : 0.0) + eps / double(vocab);
        dr[v] = prob - target;
      }
    }
  }
  return total;
}

}  // namespace detail

// Mean NLL over all target tokens in the batch plus exact parameter
// gradients. Throws NumericError on any non-finite intermediate.
inline LossResult loss_and_grad(const ModelParameters& p, const std::vector<Example>& batch,
                                ModelParameters& grads, DropoutState drop = {}) {
  if (batch.empty()) throw UsageError("EmptyBatch");
  size_t total_tokens = 0;
  for (const auto& ex : batch) total_tokens += ex.tgt_out.size();
  if (total_tokens == 0) throw UsageError("EmptyBatch: no target tokens");

  double total_nll = 0.0;
  for (const auto& ex : batch) {
    if (ex.tgt_in.size() != ex.tgt_out.size())
      throw UsageError("LengthMismatch: tgt_in vs tgt_out");
    detail::ForwardTrace tr;
    Mat logits = forward(p, ex.src_ids, ex.tgt_in, &tr, drop);
    Mat d_logits(logits.rows, logits.cols);
    total_nll +=
        detail::cross_entropy(logits, ex.tgt_out, p.config.label_smoothing, &d_logits);
    // d(mean)/d(logits) = d(sum)/d(logits) / total_tokens
    for (double& v : d_logits.a) v /= double(total_tokens);
    detail::backward(p, tr, d_logits, grads);
  }
  const double loss = total_nll / double(total_tokens);
  if (!std::isfinite(loss)) throw NumericError("NaNLoss: non-finite batch loss");
  return {loss, total_tokens};
}

// Evaluation-mode loss (no gradients, no dropout).
inline LossResult evaluate_loss(const ModelParameters& p, const std::vector<Example>& batch) {
  if (batch.empty()) throw UsageError("EmptyBatch");
  size_t total_tokens = 0;
  double total_nll = 0.0;
  for (const auto& ex : batch) {
    Mat logits = forward(p, ex.src_ids, ex.tgt_in);
    total_nll += detail::cross_entropy(logits, ex.tgt_out, p.config.label_smoothing, nullptr);
    total_tokens += ex.tgt_out.size();
  }
  if (total_tokens == 0) throw UsageError("EmptyBatch: no target tokens");
  return {total_nll / double(total_tokens), total_tokens};
}

// Teacher-forced next-token accuracy (argmax, lowest id wins ties).
inline double token_accuracy(const ModelParameters& p, const std::vector<Example>& batch) {
  size_t correct = 0, total = 0;
  for (const auto& ex : batch) {
    Mat logits = forward(p, ex.src_ids, ex.tgt_in);
    for (size_t t = 0; t < ex.tgt_out.size(); ++t) {
      const double* lr = logits.row(t);
      size_t best = 0;
      for (size_t v = 1; v < logits.cols; ++v)
        if (lr[v] > lr[best]) best = v;
      if (best == ex.tgt_out[t]) ++correct;
      ++total;
    }
  }
  return total == 0 ? 0.0 : double(correct) / double(total);
}

}  // namespace mrasp
