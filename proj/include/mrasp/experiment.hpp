#pragma once

// Experiment harness over synthetic families: paired direct vs
// pretrain+finetune comparisons (with and without RAS) and fine-tuning
// volume curves. Arms share data splits, BPE, vocabulary, and step budgets;
// runs are independent and may execute in parallel.

#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mrasp/analysis.hpp"
#include "mrasp/bleu.hpp"
#include "mrasp/bpe.hpp"
#include "mrasp/synth.hpp"
#include "mrasp/trainer.hpp"

namespace mrasp {

struct ArmSpec {
  std::string name;
  bool pretrain = false;
  std::vector<size_t> pool_pairs;  // family pair indices in the pretrain pool
  bool ras = false;
  size_t eval_pair = 0;            // downstream pair
  bool eval_reverse = false;       // fine-tune/evaluate the reverse direction
  size_t finetune_size = SIZE_MAX; // subsample of the downstream train split
  size_t pretrain_steps = 2000;
  size_t finetune_steps = 400;
};

struct ExperimentOptions {
  ModelConfig model;
  TrainConfig train;           // base; step counts come from the arms
  size_t bpe_merges = 200;
  uint64_t vocab_min_count = 2;
  size_t beam = 5;
  size_t max_decode_len = 32;
  size_t ras_anchor = 0;       // family language index supplying dictionaries
  double ras_prob = 0.3;
  size_t ras_top_k = 1000;
  unsigned jobs = 1;
};

struct MetricRow {
  std::string arm;
  uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

struct ExperimentReport {
  std::vector<MetricRow> rows;
  std::map<std::string, std::string> arm_labels;  // arm -> taxonomy label

  void add(const std::string& arm, uint64_t seed, const std::string& metric, double value) {
    rows.push_back({arm, seed, metric, value});
  }

  double value(const std::string& arm, uint64_t seed, const std::string& metric) const {
    for (const auto& r : rows)
      if (r.arm == arm && r.seed == seed && r.metric == metric) return r.value;
    throw UsageError("MissingMetric: " + arm + "/" + metric);
  }

  double mean(const std::string& arm, const std::string& metric) const {
    double total = 0.0;
    size_t n = 0;
    for (const auto& r : rows)
      if (r.arm == arm && r.metric == metric) {
        total += r.value;
        ++n;
      }
    if (n == 0) throw UsageError("MissingMetric: " + arm + "/" + metric);
    return total / double(n);
  }

  // `arm TAB seed TAB metric TAB value` dump.
  std::string machine_lines() const {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed;
    for (const auto& r : rows)
      out << r.arm << '\t' << r.seed << '\t' << r.metric << '\t' << r.value << '\n';
    return out.str();
  }

  // Per-seed deltas of every other arm against `baseline`, Table-1 style.
  std::string delta_table(const std::string& baseline) const {
    std::vector<std::string> arms, metrics;
    std::vector<uint64_t> seeds;
    for (const auto& r : rows) {
      if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) arms.push_back(r.arm);
      if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end())
        metrics.push_back(r.metric);
      if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end())
        seeds.push_back(r.seed);
    }
    std::ostringstream out;
    out.precision(4);
    out << std::fixed;
    for (const auto& arm : arms) {
      if (arm == baseline) continue;
      for (const auto& metric : metrics) {
        std::vector<double> per_seed;
        for (uint64_t seed : seeds) {
          try {
            per_seed.push_back(value(arm, seed, metric) - value(baseline, seed, metric));
          } catch (const UsageError&) {
            break;  // metric not reported for one of the arms
          }
        }
        if (per_seed.size() != seeds.size()) continue;
        double mean_delta = 0.0;
        for (double d : per_seed) mean_delta += d;
        mean_delta /= double(per_seed.size());
        out << "delta " << arm << " - " << baseline << " " << metric << ": mean "
            << (mean_delta >= 0 ? "+" : "") << mean_delta << " per-seed";
        for (double d : per_seed) out << ' ' << (d >= 0 ? "+" : "") << d;
        out << '\n';
      }
    }
    return out.str();
  }

  std::string table() const {
    // columns: arm, label, then one column per metric (mean over seeds)
    std::vector<std::string> arms, metrics;
    for (const auto& r : rows) {
      if (std::find(arms.begin(), arms.end(), r.arm) == arms.end()) arms.push_back(r.arm);
      if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end())
        metrics.push_back(r.metric);
    }
    std::ostringstream out;
    out << std::left << std::setw(20) << "arm" << std::setw(16) << "label";
    for (const auto& m : metrics) out << std::right << std::setw(14) << m;
    out << '\n';
    for (const auto& a : arms) {
      auto it = arm_labels.find(a);
      out << std::left << std::setw(20) << a << std::setw(16)
          << (it == arm_labels.end() ? "-" : it->second);
      for (const auto& m : metrics) {
        out << std::right << std::setw(14);
        try {
          std::ostringstream v;
          v.precision(4);
          v << std::fixed << mean(a, m);
          out << v.str();
        } catch (const UsageError&) {
          out << "-";
        }
      }
      out << '\n';
    }
    return out.str();
  }
};

// Shared tokenization artifacts for one family.
struct FamilyTokenization {
  BpeModel bpe;
  Vocabulary vocab;
};

// Joint BPE + vocabulary over every pair's train split (both sides), with
// oversampling weights from per-language sentence volumes and all family
// indicators force-included.
inline FamilyTokenization build_family_tokenization(const SynthFamily& family,
                                                    const ExperimentOptions& opts) {
  std::vector<BpeText> inputs;
  std::map<LanguageCode, size_t> volumes;
  for (const auto& pd : family.pairs) {
    for (auto& text : bpe_inputs_from_corpus(pd.train)) {
      volumes[text.lang] += text.sentences.size();
      inputs.push_back(std::move(text));
    }
  }
  if (inputs.empty()) throw UsageError("EmptyFamily");
  OversamplingPolicy policy = compute_oversampling_weights(volumes);
  FamilyTokenization tk;
  tk.bpe = learn_bpe(inputs, opts.bpe_merges, policy, opts.jobs);

  BpeApplier applier(tk.bpe);
  std::vector<std::vector<std::string>> tokenized;
  for (const auto& pd : family.pairs) {
    for (const auto& pair : pd.train.pairs) {
      SentencePair tagged = inject_language_tokens(pair);
      tokenized.push_back(applier.apply(tagged.source));
      tokenized.push_back(applier.apply(tagged.target));
    }
  }
  std::vector<std::string> indicators;
  for (const auto& lang : family.languages) indicators.push_back(lang.token());
  tk.vocab = build_vocabulary(tokenized, opts.vocab_min_count, indicators);
  return tk;
}

inline std::string taxonomy_label(const SynthFamily& family, const ArmSpec& arm) {
  if (!arm.pretrain) return "direct";
  const auto pool_langs = family.pool_language_indices(arm.pool_pairs);
  const auto& pd = family.pairs.at(arm.eval_pair);
  const size_t s = arm.eval_reverse ? pd.tgt_index : pd.src_index;
  const size_t t = arm.eval_reverse ? pd.src_index : pd.tgt_index;
  for (size_t pi : arm.pool_pairs) {
    const auto& pp = family.pairs.at(pi);
    if ((pp.src_index == s && pp.tgt_index == t) || (pp.src_index == t && pp.tgt_index == s))
      return "in-pretraining";
  }
  const bool src_in = pool_langs.count(s) > 0, tgt_in = pool_langs.count(t) > 0;
  if (src_in && tgt_in) return "exotic-pair";
  if (!src_in && tgt_in) return "exotic-source";
  if (src_in && !tgt_in) return "exotic-target";
  return "exotic-full";
}

struct ArmMetrics {
  EvalMetrics dev;
  double bleu_score = 0.0;
  double avg_cosine = -2.0;  // sentinel: not computed
};

namespace detail {

inline ParallelCorpus tagged_copy(const ParallelCorpus& corpus, bool reverse) {
  ParallelCorpus out;
  out.src_lang = reverse ? corpus.tgt_lang : corpus.src_lang;
  out.tgt_lang = reverse ? corpus.src_lang : corpus.tgt_lang;
  out.pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    SentencePair q = p;
    if (reverse) {
      std::swap(q.source, q.target);
      std::swap(q.src_lang, q.tgt_lang);
    }
    out.pairs.push_back(inject_language_tokens(q));
  }
  return out;
}

}  // namespace detail

// Evaluates parameters on a pair's dev split: loss, accuracy, beam BLEU.
inline ArmMetrics evaluate_arm(const ModelParameters& params, const SynthFamily& family,
                               const ArmSpec& arm, const FamilyTokenization& tk,
                               const ExperimentOptions& opts) {
  const auto& pd = family.pairs.at(arm.eval_pair);
  BpeApplier bpe(tk.bpe);
  ExampleBuilder builder(bpe, tk.vocab);
  ParallelCorpus dev_tagged = detail::tagged_copy(pd.dev, arm.eval_reverse);

  ArmMetrics out;
  out.dev = evaluate_model(params, dev_tagged, builder);
  auto hyps = translate_corpus(params, dev_tagged, builder, opts.beam, opts.max_decode_len);
  std::vector<std::vector<std::string>> refs;
  refs.reserve(dev_tagged.size());
  for (const auto& p : dev_tagged.pairs)
    refs.emplace_back(p.target.begin() + 1, p.target.end());  // drop indicator
  out.bleu_score = bleu(hyps, refs, 4, /*smoothing=*/true).score;
  return out;
}

// Mean aligned-word cosine from the anchor language to every other pool
// language, using the ground-truth dictionaries.
inline double family_avg_cosine(const ModelParameters& params, const SynthFamily& family,
                                const std::set<size_t>& pool_langs,
                                const FamilyTokenization& tk, const ExperimentOptions& opts) {
  BpeApplier bpe(tk.bpe);
  double total = 0.0;
  size_t n = 0;
  for (size_t t : pool_langs) {
    if (t == opts.ras_anchor) continue;
    auto report = avg_aligned_cosine(params, tk.vocab, bpe,
                                     family.dictionary(opts.ras_anchor, t), opts.ras_top_k);
    total += report.average;
    ++n;
  }
  if (n == 0) throw DataError("NoAlignablePairs: pool has no non-anchor language");
  return total / double(n);
}

// One arm x seed run. Pretrained checkpoints are cached by the caller and
// reused between arms that share (pool, ras, steps, seed).
inline ArmMetrics run_arm(const SynthFamily& family, const ArmSpec& arm, uint64_t seed,
                          const FamilyTokenization& tk, const ExperimentOptions& opts,
                          std::shared_ptr<const Checkpoint> pretrained) {
  BpeApplier bpe(tk.bpe);
  ExampleBuilder builder(bpe, tk.vocab);
  const auto& pd = family.pairs.at(arm.eval_pair);

  ParallelCorpus train_tagged = detail::tagged_copy(pd.train, arm.eval_reverse);
  if (arm.finetune_size < train_tagged.size())
    train_tagged = subsample(train_tagged, arm.finetune_size, derive_seed(seed, "volume"));

  ModelConfig mc = opts.model;
  mc.vocab_size = tk.vocab.size();

  TrainConfig ft_cfg = opts.train;
  ft_cfg.seed = derive_seed(seed, "finetune");
  ft_cfg.total_steps = arm.finetune_steps;
  ft_cfg.warmup_steps = std::min(opts.train.warmup_steps, arm.finetune_steps / 5);
  ft_cfg.ras.reset();

  ModelParameters params = [&] {
    if (!arm.pretrain) {
      TrainConfig direct_cfg = ft_cfg;
      direct_cfg.seed = derive_seed(seed, "direct");
      return train_direct(train_tagged, direct_cfg, mc, builder).checkpoint.params;
    }
    if (arm.finetune_steps == 0) return pretrained->params;  // "w/o ft"
    return finetune(*pretrained, train_tagged, ft_cfg, builder).checkpoint.params;
  }();

  ArmMetrics out = evaluate_arm(params, family, arm, tk, opts);
  if (arm.pretrain)
    out.avg_cosine = family_avg_cosine(params, family,
                                       family.pool_language_indices(arm.pool_pairs), tk, opts);
  return out;
}

inline std::shared_ptr<const Checkpoint> pretrain_for_arm(const SynthFamily& family,
                                                          const ArmSpec& arm, uint64_t seed,
                                                          const FamilyTokenization& tk,
                                                          const ExperimentOptions& opts) {
  BpeApplier bpe(tk.bpe);
  ExampleBuilder builder(bpe, tk.vocab);
  auto pool = family.training_pool(arm.pool_pairs);
  DictionarySet dicts;
  TrainConfig cfg = opts.train;
  cfg.seed = derive_seed(seed, "pretrain");
  cfg.total_steps = arm.pretrain_steps;
  if (arm.ras) {
    dicts = family.dictionary_set(opts.ras_anchor,
                                  family.pool_language_indices(arm.pool_pairs));
    RasConfig ras;
    ras.substitution_prob = opts.ras_prob;
    ras.top_k_words = opts.ras_top_k;
    cfg.ras = ras;
  } else {
    cfg.ras.reset();
  }
  ModelConfig mc = opts.model;
  mc.vocab_size = tk.vocab.size();
  auto result = pretrain(pool, dicts, cfg, mc, builder);
  return std::make_shared<const Checkpoint>(std::move(result.checkpoint));
}

// Trains and evaluates every arm under every seed; rows carry dev_loss,
// token_acc, bleu, and avg_cosine (pretrained arms).
inline ExperimentReport run_comparison(const SynthFamily& family,
                                       const std::vector<ArmSpec>& arms,
                                       const std::vector<uint64_t>& seeds,
                                       const ExperimentOptions& opts) {
  if (arms.empty() || seeds.empty()) throw UsageError("EmptyExperiment");
  FamilyTokenization tk = build_family_tokenization(family, opts);

  // Pretrained checkpoints shared between arms with the same recipe.
  struct PretrainKey {
    std::vector<size_t> pool;
    bool ras;
    size_t steps;
    uint64_t seed;
    bool operator<(const PretrainKey& o) const {
      return std::tie(pool, ras, steps, seed) < std::tie(o.pool, o.ras, o.steps, o.seed);
    }
  };
  std::map<PretrainKey, std::shared_ptr<const Checkpoint>> cache;
  std::mutex cache_mutex;

  struct Job {
    size_t arm_index;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (size_t a = 0; a < arms.size(); ++a)
    for (uint64_t s : seeds) jobs.push_back({a, s});
  std::vector<ArmMetrics> outputs(jobs.size());
  std::vector<std::string> errors(jobs.size());

  auto worker = [&](size_t job_index) {
    const Job& job = jobs[job_index];
    const ArmSpec& arm = arms[job.arm_index];
    try {
      std::shared_ptr<const Checkpoint> pre;
      if (arm.pretrain) {
        PretrainKey key{arm.pool_pairs, arm.ras, arm.pretrain_steps, job.seed};
        {
          std::lock_guard<std::mutex> lock(cache_mutex);
          auto it = cache.find(key);
          if (it != cache.end()) pre = it->second;
        }
        if (!pre) {
          pre = pretrain_for_arm(family, arm, job.seed, tk, opts);
          std::lock_guard<std::mutex> lock(cache_mutex);
          auto [it, inserted] = cache.emplace(key, pre);
          pre = it->second;  // keep the first one on a race
        }
      }
      outputs[job_index] = run_arm(family, arm, job.seed, tk, opts, pre);
    } catch (const std::exception& e) {
      errors[job_index] = e.what();
    }
  };

  const unsigned thread_count = std::max(1u, opts.jobs);
  if (thread_count == 1) {
    for (size_t i = 0; i < jobs.size(); ++i) worker(i);
  } else {
    std::vector<std::thread> threads;
    std::mutex next_mutex;
    size_t next = 0;
    for (unsigned t = 0; t < thread_count; ++t) {
      threads.emplace_back([&] {
        for (;;) {
          size_t i;
          {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (next >= jobs.size()) return;
            i = next++;
          }
          worker(i);
        }
      });
    }
    for (auto& th : threads) th.join();
  }

  for (size_t i = 0; i < jobs.size(); ++i)
    if (!errors[i].empty())
      throw DataError("ArmFailed: " + arms[jobs[i].arm_index].name + ": " + errors[i]);

  ExperimentReport report;
  for (size_t i = 0; i < jobs.size(); ++i) {
    const auto& arm = arms[jobs[i].arm_index];
    const auto& out = outputs[i];
    report.add(arm.name, jobs[i].seed, "dev_loss", out.dev.loss);
    report.add(arm.name, jobs[i].seed, "token_acc", out.dev.token_accuracy);
    report.add(arm.name, jobs[i].seed, "bleu", out.bleu_score);
    if (out.avg_cosine > -1.5) report.add(arm.name, jobs[i].seed, "avg_cosine", out.avg_cosine);
  }
  for (const auto& arm : arms) report.arm_labels[arm.name] = taxonomy_label(family, arm);
  return report;
}

// Fig. 7 analogue: for each size, fine-tune the pretrained checkpoint on a
// subsample and train a same-budget direct control. size 0 = evaluate the
// checkpoint as-is ("w/o ft").
inline ExperimentReport volume_curve(const SynthFamily& family, const ArmSpec& base_arm,
                                     const std::vector<size_t>& sizes,
                                     const std::vector<uint64_t>& seeds,
                                     const ExperimentOptions& opts) {
  std::vector<ArmSpec> arms;
  for (size_t size : sizes) {
    ArmSpec pre = base_arm;
    pre.name = "pretrain@" + std::to_string(size);
    pre.pretrain = true;
    pre.finetune_size = size == 0 ? SIZE_MAX : size;
    if (size == 0) pre.finetune_steps = 0;
    arms.push_back(pre);
    if (size > 0) {
      ArmSpec direct = base_arm;
      direct.name = "direct@" + std::to_string(size);
      direct.pretrain = false;
      direct.ras = false;
      direct.finetune_size = size;
      arms.push_back(direct);
    }
  }
  return run_comparison(family, arms, seeds, opts);
}

}  // namespace mrasp
