#pragma once

// Pre-training over a multilingual pool of directed corpora (with optional
// RAS augmentation) and fine-tuning on a single direction. All randomness is
// derived from the config seed through named sub-seeds (init / sample / ras /
// dropout), so runs are bit-reproducible.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mrasp/bpe.hpp"
#include "mrasp/checkpoint.hpp"
#include "mrasp/corpus.hpp"
#include "mrasp/decode.hpp"
#include "mrasp/model.hpp"
#include "mrasp/optim.hpp"
#include "mrasp/ras.hpp"
#include "mrasp/vocab.hpp"

namespace mrasp {

// words -> ids. Encoder input ends with <eos>; decoder input starts with
// <bos>; gold outputs end with <eos>.
class ExampleBuilder {
public:
  ExampleBuilder(const BpeApplier& bpe, const Vocabulary& vocab)
      : bpe_(&bpe), vocab_(&vocab) {}

  Example build(const SentencePair& pair) const {
    Example ex;
    ex.src_ids = vocab_->encode(bpe_->apply(pair.source));
    ex.src_ids.push_back(Vocabulary::kEos);
    auto tgt = vocab_->encode(bpe_->apply(pair.target));
    ex.tgt_in.reserve(tgt.size() + 1);
    ex.tgt_in.push_back(Vocabulary::kBos);
    ex.tgt_in.insert(ex.tgt_in.end(), tgt.begin(), tgt.end());
    ex.tgt_out = std::move(tgt);
    ex.tgt_out.push_back(Vocabulary::kEos);
    return ex;
  }

  const Vocabulary& vocab() const { return *vocab_; }
  const BpeApplier& bpe() const { return *bpe_; }

private:
  const BpeApplier* bpe_;
  const Vocabulary* vocab_;
};

namespace detail {

struct TrainDirection {
  ParallelCorpus corpus;  // tagged
  std::unique_ptr<AugmentStream> stream;  // null without RAS
  std::vector<std::optional<Example>> cache;
  size_t cursor = 0;
  double sample_weight = 1.0;

  size_t stream_size() const { return stream ? stream->size() : corpus.size(); }

  const Example& example(size_t i, const ExampleBuilder& builder) {
    if (cache.empty()) cache.resize(stream_size());
    if (!cache[i])
      cache[i] = builder.build(stream ? stream->at(i) : corpus.pairs[i]);
    return *cache[i];
  }
};

// Per-language volumes -> oversampling policy; a direction's sampling weight
// is corpus_size * manifest_weight * sqrt(w_src * w_tgt).
inline std::vector<double> direction_weights(const std::vector<DirectedView>& pool) {
  std::map<LanguageCode, size_t> volumes;
  for (const auto& v : pool) {
    volumes[v.src_lang()] += v.size();
    volumes[v.tgt_lang()] += v.size();
  }
  OversamplingPolicy policy = compute_oversampling_weights(volumes);
  std::vector<double> w;
  w.reserve(pool.size());
  for (const auto& v : pool)
    w.push_back(double(v.size()) * v.weight() *
                std::sqrt(policy.weight(v.src_lang()) * policy.weight(v.tgt_lang())));
  return w;
}

inline size_t sample_index(const std::vector<double>& weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double r = rng.next_double() * total;
  for (size_t i = 0; i < weights.size(); ++i) {
    r -= weights[i];
    if (r < 0.0) return i;
  }
  return weights.size() - 1;
}

}  // namespace detail

using CheckpointSink = std::function<void(const Checkpoint&, size_t step)>;

struct TrainResult {
  Checkpoint checkpoint;
  bool aborted = false;  // hit a non-finite loss/update; checkpoint is last good
};

namespace detail {

// Shared core for pretrain/finetune. `directions` are tagged corpora.
inline TrainResult train_loop(ModelParameters params,
                              std::vector<std::unique_ptr<TrainDirection>> directions,
                              const TrainConfig& cfg, const ExampleBuilder& builder,
                              uint64_t vocab_hash, std::ostream* log,
                              const CheckpointSink& sink) {
  cfg.validate();
  std::vector<double> weights;
  for (const auto& d : directions) weights.push_back(d->sample_weight);

  Rng sample_rng(derive_seed(cfg.seed, "sample"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  AdamState state = AdamState::fresh(params);
  ModelParameters grads = zeros_like(params);
  const size_t max_pos = params.config.max_positions;

  TrainResult result;
  double last_loss = 0.0;
  size_t step = 0;
  bool aborted = false;
  for (step = 1; step <= cfg.total_steps; ++step) {
    auto& dir = *directions[weights.size() == 1 ? 0 : sample_index(weights, sample_rng)];
    std::vector<Example> batch;
    size_t batch_token_count = 0;
    size_t consecutive_skips = 0;
    const size_t stream_len = dir.stream_size();
    while (batch_token_count < cfg.batch_tokens) {
      const size_t idx = dir.cursor % stream_len;
      dir.cursor++;
      const Example& ex = dir.example(idx, builder);
      if (ex.src_ids.size() > max_pos || ex.tgt_in.size() > max_pos) {
        if (++consecutive_skips > stream_len) break;  // everything is too long
        continue;
      }
      consecutive_skips = 0;
      batch.push_back(ex);
      batch_token_count += ex.tgt_out.size();
    }
    if (batch.empty()) throw DataError("EmptyBatch: every example exceeds max_positions");

    const double lr = lr_schedule(step, cfg);
    try {
      for (auto& nt : tensor_list(grads)) nt.mat->zero();
      DropoutState drop{cfg.dropout, cfg.dropout > 0.0 ? &dropout_rng : nullptr};
      LossResult lr_res = loss_and_grad(params, batch, grads, drop);
      last_loss = lr_res.loss;
      ModelParameters snapshot = params;  // adam_step may fail mid-tensor
      AdamState state_snapshot = state;
      try {
        adam_step(params, grads, state, lr, cfg);
      } catch (const NumericError&) {
        params = std::move(snapshot);
        state = std::move(state_snapshot);
        throw;
      }
    } catch (const NumericError&) {
      aborted = true;
      --step;  // the failed step does not count
      break;
    }
    if (log && (cfg.log_every > 0 && step % cfg.log_every == 0)) {
      std::ostringstream line;
      line.precision(17);
      line << step << '\t' << lr << '\t' << last_loss;
      (*log) << line.str() << '\n';
    }
    if (sink && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) {
      Checkpoint periodic{params, state, vocab_hash, step, last_loss};
      sink(periodic, step);
    }
  }

  result.aborted = aborted;
  result.checkpoint =
      Checkpoint{std::move(params), std::move(state), vocab_hash,
                 aborted ? step : cfg.total_steps, last_loss};
  return result;
}

inline std::unique_ptr<TrainDirection> make_direction(ParallelCorpus corpus,
                                                      const DictionarySet& dicts,
                                                      const TrainConfig& cfg,
                                                      double weight) {
  auto dir = std::make_unique<TrainDirection>();
  dir->corpus = std::move(corpus);
  dir->sample_weight = weight;
  if (cfg.ras && !dicts.empty()) {
    RasConfig ras = *cfg.ras;
    ras.seed = derive_seed(cfg.seed, "ras");
    dir->stream = std::make_unique<AugmentStream>(dir->corpus, dicts, ras);
  }
  return dir;
}

}  // namespace detail

// Multilingual pre-training: batches sampled across directions proportionally
// to corpus size x manifest weight x oversampling weight, each pair streaming
// through RAS augmentation when configured.
inline TrainResult pretrain(const std::vector<DirectedView>& pool,
                            const DictionarySet& dicts, const TrainConfig& cfg,
                            ModelConfig model_cfg, const ExampleBuilder& builder,
                            std::ostream* log = nullptr, const CheckpointSink& sink = {}) {
  if (pool.empty()) throw UsageError("EmptyPool");
  if (model_cfg.vocab_size == 0) model_cfg.vocab_size = builder.vocab().size();
  model_cfg.dropout = cfg.dropout;
  ModelParameters params = init_parameters(model_cfg, cfg.seed);

  auto weights = detail::direction_weights(pool);
  std::vector<std::unique_ptr<detail::TrainDirection>> directions;
  for (size_t i = 0; i < pool.size(); ++i)
    directions.push_back(detail::make_direction(pool[i].materialize(), dicts, cfg, weights[i]));
  return detail::train_loop(std::move(params), std::move(directions), cfg, builder,
                            builder.vocab().content_hash(), log, sink);
}

// Continues from a checkpoint with a fresh optimizer state and the fine-tune
// schedule. The corpus must be language-tagged.
inline TrainResult finetune(const Checkpoint& ckpt, const ParallelCorpus& corpus,
                            const TrainConfig& cfg, const ExampleBuilder& builder,
                            std::ostream* log = nullptr, const CheckpointSink& sink = {}) {
  if (ckpt.vocab_hash != 0 && ckpt.vocab_hash != builder.vocab().content_hash())
    throw DataError("VocabMismatch: checkpoint was trained with a different vocabulary");
  if (corpus.empty()) throw UsageError("EmptyCorpus: nothing to fine-tune on");
  ModelParameters params = ckpt.params;
  params.config.dropout = cfg.dropout;
  if (cfg.total_steps == 0) {
    AdamState fresh = AdamState::fresh(params);
    return {Checkpoint{std::move(params), std::move(fresh), ckpt.vocab_hash, 0, 0.0}, false};
  }
  std::vector<std::unique_ptr<detail::TrainDirection>> directions;
  directions.push_back(detail::make_direction(corpus, DictionarySet{}, cfg, 1.0));
  return detail::train_loop(std::move(params), std::move(directions), cfg, builder,
                            builder.vocab().content_hash(), log, sink);
}

// Training a fresh random init on one direction (the "direct" baseline arm).
inline TrainResult train_direct(const ParallelCorpus& corpus, const TrainConfig& cfg,
                                ModelConfig model_cfg, const ExampleBuilder& builder,
                                std::ostream* log = nullptr) {
  DirectedView view(corpus.src_lang, corpus.tgt_lang, /*tagged=*/false);
  view.add_segment(std::make_shared<const ParallelCorpus>(corpus), false, 1.0);
  std::vector<DirectedView> pool{view};
  // corpus is already tagged; pool views must not re-tag
  return pretrain(pool, DictionarySet{}, cfg, model_cfg, builder, log);
}

struct EvalMetrics {
  double loss = 0.0;
  double token_accuracy = 0.0;
  size_t sentences = 0;
};

inline EvalMetrics evaluate_model(const ModelParameters& params, const ParallelCorpus& corpus,
                                  const ExampleBuilder& builder) {
  std::vector<Example> batch;
  batch.reserve(corpus.size());
  const size_t max_pos = params.config.max_positions;
  for (const auto& p : corpus.pairs) {
    Example ex = builder.build(p);
    if (ex.src_ids.size() > max_pos || ex.tgt_in.size() > max_pos) continue;
    batch.push_back(std::move(ex));
  }
  if (batch.empty()) throw DataError("EmptyEvalSet");
  EvalMetrics m;
  m.loss = evaluate_loss(params, batch).loss;
  m.token_accuracy = token_accuracy(params, batch);
  m.sentences = batch.size();
  return m;
}

// Beam-decodes each source sentence into target words (indicator and BPE
// markers removed). The corpus supplies sources and target languages.
inline std::vector<std::vector<std::string>> translate_corpus(
    const ModelParameters& params, const ParallelCorpus& corpus,
    const ExampleBuilder& builder, size_t beam, size_t max_len,
    bool length_normalize = false, bool greedy = false) {
  std::vector<std::vector<std::string>> out;
  out.reserve(corpus.size());
  const Vocabulary& vocab = builder.vocab();
  for (const auto& pair : corpus.pairs) {
    Example ex = builder.build(pair);
    DecodeOptions opts;
    opts.beam = beam;
    opts.max_len = std::min(max_len, params.config.max_positions - 1);
    opts.length_normalize = length_normalize;
    const TokenId indicator = vocab.id_of(pair.tgt_lang.token());
    opts.forced_prefix = {indicator};
    Hypothesis hyp = greedy ? greedy_decode(params, ex.src_ids, opts)
                            : beam_search_decode(params, ex.src_ids, opts);
    std::vector<TokenId> body(hyp.ids.begin() + 1, hyp.ids.end());  // drop indicator
    while (!body.empty() && body.back() == Vocabulary::kEos) body.pop_back();
    out.push_back(vocab.decode_words(body));
  }
  return out;
}

}  // namespace mrasp
