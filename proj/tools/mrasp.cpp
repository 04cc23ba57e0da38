// mrasp command-line tool: corpus preprocessing, BPE, RAS augmentation,
// training, decoding, scoring, and the synthetic-family experiment harness.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mrasp/mrasp.hpp"

namespace fs = std::filesystem;
using namespace mrasp;

namespace {

// --- small helpers ----------------------------------------------------------

std::vector<std::string> read_lines_checked(const std::string& path) {
  return mrasp::detail::read_lines(path);
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("IoError: cannot write '" + path + "'");
  out << content;
}

std::vector<uint64_t> parse_u64_list(const std::string& csv) {
  std::vector<uint64_t> out;
  std::string cur;
  std::istringstream in(csv);
  while (std::getline(in, cur, ','))
    if (!trim(cur).empty()) out.push_back(std::stoull(std::string(trim(cur))));
  return out;
}

std::vector<size_t> parse_size_list(const std::string& csv) {
  std::vector<size_t> out;
  for (uint64_t v : parse_u64_list(csv)) out.push_back(size_t(v));
  return out;
}

// key = value files; later keys override earlier ones, # comments ignored.
std::map<std::string, std::string> load_kv_file(const std::string& path) {
  std::map<std::string, std::string> kv;
  auto lines = read_lines_checked(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    auto line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("MalformedSpec: line " + std::to_string(i + 1) + " in '" + path +
                      "' has no '='");
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

// BPE inputs from a manifest: both sides of each parallel entry plus
// monolingual supplements truncated to the per-language limit.
std::vector<BpeText> manifest_bpe_inputs(const CorpusManifest& manifest, size_t mono_limit) {
  std::vector<BpeText> inputs;
  std::map<LanguageCode, size_t> mono_used;
  for (const auto& e : manifest.entries) {
    if (e.monolingual()) {
      auto lines = read_lines_checked(e.src_path);
      size_t& used = mono_used[e.src_lang];
      BpeText text{e.src_lang, {}};
      for (const auto& line : lines) {
        if (used >= mono_limit) break;
        if (trim(line).empty()) continue;
        text.sentences.push_back(line);
        ++used;
      }
      inputs.push_back(std::move(text));
    } else {
      auto corpus = load_parallel_corpus(e.src_path, e.tgt_path, e.src_lang, e.tgt_lang);
      for (auto& text : bpe_inputs_from_corpus(corpus)) inputs.push_back(std::move(text));
    }
  }
  return inputs;
}

std::map<LanguageCode, size_t> language_volumes(const std::vector<BpeText>& inputs) {
  std::map<LanguageCode, size_t> volumes;
  for (const auto& in : inputs) volumes[in.lang] += in.sentences.size();
  return volumes;
}

// Dictionary directory: files named `src-tgt.txt` hold MUSE pairs.
DictionarySet load_dictionary_dir(const std::string& dir, const LanguageCode& src) {
  DictionarySet dicts;
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    const std::string stem = path.stem().string();
    size_t dash = stem.find('-');
    if (dash == std::string::npos) continue;
    const std::string a = stem.substr(0, dash), b = stem.substr(dash + 1);
    if (!LanguageCode::valid(a) || !LanguageCode::valid(b)) continue;
    if (a != src.str()) continue;
    dicts.add(load_muse_dictionary(path.string(), LanguageCode(a), LanguageCode(b)));
  }
  if (dicts.empty())
    throw DataError("NoDictionaries: no '" + src.str() + "-*.txt' files in '" + dir + "'");
  return dicts;
}

struct ModelFlags {
  size_t enc_layers = 2, dec_layers = 2, dim = 64, heads = 4, ffn = 256, max_positions = 64;
  double label_smoothing = 0.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--enc-layers", enc_layers, "encoder layers");
    cmd->add_option("--dec-layers", dec_layers, "decoder layers");
    cmd->add_option("--dim", dim, "model dimension");
    cmd->add_option("--heads", heads, "attention heads");
    cmd->add_option("--ffn", ffn, "feed-forward dimension");
    cmd->add_option("--max-positions", max_positions, "maximum sequence length");
    cmd->add_option("--label-smoothing", label_smoothing, "label smoothing epsilon");
  }

  ModelConfig config(size_t vocab_size) const {
    ModelConfig cfg;
    cfg.enc_layers = enc_layers;
    cfg.dec_layers = dec_layers;
    cfg.model_dim = dim;
    cfg.heads = heads;
    cfg.ffn_dim = ffn;
    cfg.max_positions = max_positions;
    cfg.vocab_size = vocab_size;
    cfg.label_smoothing = label_smoothing;
    return cfg;
  }
};

struct TrainFlags {
  double lr = 3e-3;
  size_t warmup = 200, steps = 2000, batch_tokens = 1024;
  double dropout = 0.1;
  uint64_t seed = 0;
  size_t checkpoint_every = 0;
  std::string log_path;

  void attach(CLI::App* cmd, bool require_seed = true) {
    cmd->add_option("--lr", lr, "peak learning rate");
    cmd->add_option("--warmup", warmup, "warmup steps");
    cmd->add_option("--steps", steps, "total optimizer steps");
    cmd->add_option("--batch-tokens", batch_tokens, "target tokens per batch");
    cmd->add_option("--dropout", dropout, "dropout rate");
    auto* s = cmd->add_option("--seed", seed, "random seed (stochastic commands)");
    if (require_seed) s->required();
    cmd->add_option("--checkpoint-every", checkpoint_every, "periodic checkpoint interval");
    cmd->add_option("--log", log_path, "training log file (step TAB lr TAB loss)");
  }

  TrainConfig config() const {
    TrainConfig cfg;
    cfg.peak_lr = lr;
    cfg.warmup_steps = warmup;
    cfg.total_steps = steps;
    cfg.batch_tokens = batch_tokens;
    cfg.dropout = dropout;
    cfg.seed = seed;
    cfg.checkpoint_every = checkpoint_every;
    return cfg;
  }
};

std::string effective_config_header(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += "# " + k + "=" + v + "\n";
  return out;
}

// --- experiment spec --------------------------------------------------------

ArmSpec parse_arm(const std::string& value) {
  ArmSpec arm;
  auto tokens = split_words(value);
  if (tokens.empty()) throw DataError("MalformedSpec: empty arm definition");
  size_t start = 0;
  if (tokens[0].find('=') == std::string::npos) {
    arm.name = tokens[0];
    start = 1;
  }
  for (size_t i = start; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    size_t eq = tok.find('=');
    if (eq == std::string::npos) throw DataError("MalformedSpec: arm token '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "pretrain") {
      if (val == "none" || val == "off") {
        arm.pretrain = false;
      } else {
        arm.pretrain = true;
        arm.pool_pairs = parse_size_list(val);
      }
    } else if (key == "ras") {
      arm.ras = (val == "on" || val == "1" || val == "true");
    } else if (key == "eval") {
      std::string v = val;
      if (!v.empty() && (v.back() == 'r' || v.back() == 'R')) {
        arm.eval_reverse = true;
        v.pop_back();
      }
      arm.eval_pair = std::stoull(v);
    } else if (key == "size") {
      arm.finetune_size = std::stoull(val);
    } else if (key == "psteps") {
      arm.pretrain_steps = std::stoull(val);
    } else if (key == "fsteps") {
      arm.finetune_steps = std::stoull(val);
    } else {
      throw DataError("MalformedSpec: unknown arm key '" + key + "'");
    }
  }
  if (arm.name.empty())
    arm.name = (arm.pretrain ? std::string("pretrain") : std::string("direct"));
  return arm;
}

struct ExperimentSpec {
  SynthFamilySpec family;
  std::vector<ArmSpec> arms;
  std::vector<uint64_t> seeds;
  ExperimentOptions options;
  std::string mode = "comparison";
  std::vector<size_t> volume_sizes;
  ArmSpec volume_arm;
};

ExperimentSpec load_experiment_spec(const std::string& path) {
  auto kv = load_kv_file(path);
  auto get = [&](const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };
  ExperimentSpec spec;
  spec.mode = get("mode", "comparison");
  spec.family.num_languages = std::stoull(get("languages", "3"));
  spec.family.vocab_per_lang = std::stoull(get("vocab_per_lang", "60"));
  spec.family.min_len = std::stoull(get("min_len", "3"));
  spec.family.max_len = std::stoull(get("max_len", "8"));
  spec.family.zipf_exponent = std::stod(get("zipf", "1.0"));
  spec.family.seed = std::stoull(get("family_seed", "1"));
  for (size_t i = 0;; ++i) {
    auto it = kv.find("pair." + std::to_string(i));
    if (it == kv.end()) break;
    auto f = split_words(it->second);
    if (f.size() < 3)
      throw DataError("MalformedSpec: pair." + std::to_string(i) +
                      " needs `src tgt train [dev test grammar]`");
    SynthPairSpec ps;
    ps.src_index = std::stoull(f[0]);
    ps.tgt_index = std::stoull(f[1]);
    ps.train_size = std::stoull(f[2]);
    if (f.size() > 3) ps.dev_size = std::stoull(f[3]);
    if (f.size() > 4) ps.test_size = std::stoull(f[4]);
    if (f.size() > 5) ps.grammar = GrammarSpec::parse(f[5]);
    spec.family.pairs.push_back(ps);
  }
  if (spec.family.pairs.empty()) throw DataError("MalformedSpec: no pair.N entries");

  if (kv.count("seeds") == 0)
    throw DataError("MalformedSpec: stochastic experiments need `seeds = ...`");
  spec.seeds = parse_u64_list(kv.at("seeds"));
  if (spec.seeds.empty()) throw DataError("MalformedSpec: empty seeds list");

  ExperimentOptions& opts = spec.options;
  opts.bpe_merges = std::stoull(get("bpe_merges", "200"));
  opts.vocab_min_count = std::stoull(get("vocab_min_count", "2"));
  opts.beam = std::stoull(get("beam", "5"));
  opts.max_decode_len = std::stoull(get("max_decode_len", "24"));
  opts.ras_anchor = std::stoull(get("anchor", "0"));
  opts.ras_prob = std::stod(get("ras_prob", "0.3"));
  opts.ras_top_k = std::stoull(get("ras_top_k", "1000"));
  opts.model.enc_layers = std::stoull(get("enc_layers", "1"));
  opts.model.dec_layers = std::stoull(get("dec_layers", "1"));
  opts.model.model_dim = std::stoull(get("dim", "32"));
  opts.model.heads = std::stoull(get("heads", "2"));
  opts.model.ffn_dim = std::stoull(get("ffn", "128"));
  opts.model.max_positions = std::stoull(get("max_positions", "48"));
  opts.train.peak_lr = std::stod(get("peak_lr", "3e-3"));
  opts.train.warmup_steps = std::stoull(get("warmup", "200"));
  opts.train.batch_tokens = std::stoull(get("batch_tokens", "192"));
  opts.train.dropout = std::stod(get("dropout", "0.1"));

  for (size_t i = 0;; ++i) {
    auto it = kv.find("arm." + std::to_string(i));
    if (it == kv.end()) break;
    spec.arms.push_back(parse_arm(it->second));
  }
  if (spec.mode == "comparison" && spec.arms.empty())
    throw DataError("MalformedSpec: comparison mode needs arm.N entries");
  if (spec.mode == "volume") {
    if (kv.count("volume_sizes") == 0 || kv.count("volume_arm") == 0)
      throw DataError("MalformedSpec: volume mode needs volume_sizes and volume_arm");
    spec.volume_sizes = parse_size_list(kv.at("volume_sizes"));
    spec.volume_arm = parse_arm(kv.at("volume_arm"));
  }
  return spec;
}

// --- subcommand bodies -------------------------------------------------------

int cmd_learn_bpe(const std::string& manifest_path, size_t num_merges, size_t mono_limit,
                  unsigned jobs, const std::string& out) {
  auto manifest = load_manifest(manifest_path);
  auto inputs = manifest_bpe_inputs(manifest, mono_limit);
  auto policy = compute_oversampling_weights(language_volumes(inputs));
  auto model = learn_bpe(inputs, num_merges, policy, jobs);
  save_bpe_model(model, out);
  std::cerr << "learned " << model.merges.size() << " merges -> " << out << "\n";
  return 0;
}

int cmd_apply_bpe(const std::string& merges, const std::string& input,
                  const std::string& out) {
  BpeModel model = load_bpe_model(merges);
  BpeApplier applier(model);
  std::ostringstream buf;
  for (const auto& line : read_lines_checked(input))
    buf << join_words(applier.apply(split_words(line))) << '\n';
  write_text(out, buf.str());
  return 0;
}

int cmd_build_vocab(const std::string& manifest_path, const std::string& merges,
                    uint64_t min_count, size_t mono_limit, const std::string& out) {
  auto manifest = load_manifest(manifest_path);
  BpeModel model = load_bpe_model(merges);
  BpeApplier applier(model);
  std::vector<std::vector<std::string>> tokenized;
  std::vector<std::string> indicators;
  for (const auto& e : manifest.entries) {
    indicators.push_back(e.src_lang.token());
    if (!e.monolingual()) indicators.push_back(e.tgt_lang.token());
  }
  for (const auto& text : manifest_bpe_inputs(manifest, mono_limit)) {
    const std::string indicator = text.lang.token();
    for (const auto& sentence : text.sentences) {
      auto words = split_words(sentence);
      words.insert(words.begin(), indicator);
      tokenized.push_back(applier.apply(words));
    }
  }
  auto vocab = build_vocabulary(tokenized, min_count, indicators);
  save_vocabulary(vocab, out);
  std::cerr << "vocabulary of " << vocab.size() << " tokens -> " << out << "\n";
  return 0;
}

int cmd_ras_augment(const std::string& src, const std::string& tgt, const std::string& src_lang,
                    const std::string& tgt_lang, const std::string& dict_dir, double prob,
                    size_t top_k, uint64_t seed, bool target_side, bool in_place,
                    const std::string& out_prefix) {
  LanguageCode sl(src_lang), tl(tgt_lang);
  auto corpus = load_parallel_corpus(src, tgt, sl, tl);
  DictionarySet dicts = load_dictionary_dir(dict_dir, sl);
  RasConfig cfg;
  cfg.substitution_prob = prob;
  cfg.top_k_words = top_k;
  cfg.seed = seed;
  cfg.substitute_target_side = target_side;
  cfg.mode = in_place ? AugmentMode::kInPlace : AugmentMode::kDoubled;
  AugmentStream stream(corpus, dicts, cfg);
  ParallelCorpus augmented = stream.materialize();
  save_parallel_corpus(augmented, out_prefix + "." + src_lang + ".ras",
                       out_prefix + "." + tgt_lang + ".ras");
  std::cerr << "augmented " << corpus.size() << " -> " << augmented.size() << " pairs\n";
  return 0;
}

int cmd_pretrain(const std::string& manifest_path, const std::string& merges_path,
                 const std::string& vocab_path, const std::string& dict_dir, double ras_prob,
                 size_t ras_top_k, const ModelFlags& mf, const TrainFlags& tf,
                 const std::string& out, const std::string& checkpoint_dir) {
  auto manifest = load_manifest(manifest_path);
  auto pool = build_training_pool(manifest);
  if (pool.empty()) throw DataError("EmptyPool: manifest has no parallel entries");
  BpeModel bpe_model = load_bpe_model(merges_path);
  Vocabulary vocab = load_vocabulary(vocab_path);
  BpeApplier applier(bpe_model);
  ExampleBuilder builder(applier, vocab);

  TrainConfig cfg = tf.config();
  DictionarySet dicts;
  if (!dict_dir.empty()) {
    // English-centric by convention of the dictionary directory naming; the
    // anchor is the source language of the first manifest entry.
    dicts = load_dictionary_dir(dict_dir, manifest.entries.front().src_lang);
    RasConfig ras;
    ras.substitution_prob = ras_prob;
    ras.top_k_words = ras_top_k;
    cfg.ras = ras;
  }

  std::ofstream log;
  if (!tf.log_path.empty()) {
    log.open(tf.log_path, std::ios::binary | std::ios::app);
    if (!log) throw DataError("IoError: cannot open log '" + tf.log_path + "'");
  }
  CheckpointSink sink;
  if (!checkpoint_dir.empty()) {
    fs::create_directories(checkpoint_dir);
    sink = [&](const Checkpoint& ckpt, size_t step) {
      save_checkpoint(ckpt, (fs::path(checkpoint_dir) /
                             ("step_" + std::to_string(step) + ".mrasp"))
                                .string());
    };
  }

  auto result = pretrain(pool, dicts, cfg, mf.config(vocab.size()), builder,
                         tf.log_path.empty() ? nullptr : &log, sink);
  save_checkpoint(result.checkpoint, out);
  if (result.aborted) {
    std::cerr << "aborted on non-finite loss; last good checkpoint at step "
              << result.checkpoint.step << " -> " << out << "\n";
    return 3;
  }
  std::cerr << "pretrained " << cfg.total_steps << " steps, final loss "
            << result.checkpoint.final_loss << " -> " << out << "\n";
  return 0;
}

int cmd_finetune(const std::string& ckpt_path, const std::string& src, const std::string& tgt,
                 const std::string& src_lang, const std::string& tgt_lang,
                 const std::string& merges_path, const std::string& vocab_path,
                 const TrainFlags& tf, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  BpeModel bpe_model = load_bpe_model(merges_path);
  Vocabulary vocab = load_vocabulary(vocab_path);
  BpeApplier applier(bpe_model);
  ExampleBuilder builder(applier, vocab);

  LanguageCode sl(src_lang), tl(tgt_lang);
  auto raw = load_parallel_corpus(src, tgt, sl, tl);
  ParallelCorpus tagged;
  tagged.src_lang = sl;
  tagged.tgt_lang = tl;
  for (const auto& p : raw.pairs) tagged.pairs.push_back(inject_language_tokens(p));

  TrainConfig cfg = tf.config();
  std::ofstream log;
  if (!tf.log_path.empty()) {
    log.open(tf.log_path, std::ios::binary | std::ios::app);
    if (!log) throw DataError("IoError: cannot open log '" + tf.log_path + "'");
  }
  auto result =
      finetune(ckpt, tagged, cfg, builder, tf.log_path.empty() ? nullptr : &log);
  save_checkpoint(result.checkpoint, out);
  if (result.aborted) {
    std::cerr << "aborted on non-finite loss at step " << result.checkpoint.step << "\n";
    return 3;
  }
  std::cerr << "fine-tuned " << cfg.total_steps << " steps -> " << out << "\n";
  return 0;
}

int cmd_translate(const std::string& ckpt_path, const std::string& merges_path,
                  const std::string& vocab_path, const std::string& input,
                  const std::string& src_lang, const std::string& tgt_lang, size_t beam,
                  size_t max_len, bool greedy, bool length_norm, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  BpeModel bpe_model = load_bpe_model(merges_path);
  Vocabulary vocab = load_vocabulary(vocab_path);
  BpeApplier applier(bpe_model);
  ExampleBuilder builder(applier, vocab);

  LanguageCode sl(src_lang), tl(tgt_lang);
  ParallelCorpus pseudo;
  pseudo.src_lang = sl;
  pseudo.tgt_lang = tl;
  for (const auto& line : read_lines_checked(input)) {
    auto words = split_words(line);
    if (words.empty()) continue;
    SentencePair pair{std::move(words), {"-"}, sl, tl};
    pseudo.pairs.push_back(inject_language_tokens(pair));
  }
  auto hyps = translate_corpus(ckpt.params, pseudo, builder, beam, max_len, length_norm,
                               greedy);
  std::ostringstream buf;
  for (const auto& h : hyps) buf << join_words(h) << '\n';
  write_text(out, buf.str());
  return 0;
}

int cmd_score_bleu(const std::string& hyp_path, const std::string& ref_path, size_t max_n,
                   bool smooth) {
  std::vector<std::vector<std::string>> hyps, refs;
  for (const auto& line : read_lines_checked(hyp_path)) hyps.push_back(split_words(line));
  for (const auto& line : read_lines_checked(ref_path)) refs.push_back(split_words(line));
  auto report = bleu(hyps, refs, max_n, smooth);
  std::ostringstream buf;
  buf.precision(6);
  buf << std::fixed;
  buf << "bleu\t" << report.score << "\nbp\t" << report.brevity_penalty << '\n';
  for (size_t n = 1; n <= max_n; ++n)
    buf << 'p' << n << '\t' << report.precisions[n - 1] << '\n';
  std::cout << buf.str();
  return 0;
}

int cmd_analyze_similarity(const std::string& ckpt_path, const std::string& merges_path,
                           const std::string& vocab_path, const std::string& dict_path,
                           const std::string& src_lang, const std::string& tgt_lang,
                           size_t top_k, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  BpeModel bpe_model = load_bpe_model(merges_path);
  Vocabulary vocab = load_vocabulary(vocab_path);
  BpeApplier applier(bpe_model);
  auto dict = load_muse_dictionary(dict_path, LanguageCode(src_lang), LanguageCode(tgt_lang));
  auto report = avg_aligned_cosine(ckpt.params, vocab, applier, dict, top_k);
  std::ostringstream buf;
  buf << effective_config_header({{"dict", dict_path},
                                  {"pair", src_lang + "-" + tgt_lang},
                                  {"top_k", std::to_string(top_k)}});
  save_similarity_report(report, buf);
  write_text(out, buf.str());
  std::cerr << "average cosine " << report.average << " over " << report.entries.size()
            << " pairs -> " << out << "\n";
  return 0;
}

int cmd_analyze_pca(const std::string& ckpt_path, const std::string& merges_path,
                    const std::string& vocab_path, const std::string& words_path,
                    const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  BpeModel bpe_model = load_bpe_model(merges_path);
  Vocabulary vocab = load_vocabulary(vocab_path);
  BpeApplier applier(bpe_model);
  std::vector<std::pair<std::string, LanguageCode>> words;
  for (const auto& line : read_lines_checked(words_path)) {
    auto fields = split_words(line);
    if (fields.empty()) continue;
    if (fields.size() != 2)
      throw DataError("MalformedWordsFile: want `word lang` per line, got '" + line + "'");
    words.emplace_back(fields[0], LanguageCode(fields[1]));
  }
  auto pca = pca_of_words(ckpt.params, vocab, applier, words);
  std::ostringstream buf;
  save_pca_report(pca, buf);
  write_text(out, buf.str());
  return 0;
}

int cmd_synth_generate(const std::string& spec_path, uint64_t seed, const std::string& out_dir) {
  auto kv = load_kv_file(spec_path);
  auto get = [&](const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  };
  SynthFamilySpec spec;
  spec.num_languages = std::stoull(get("languages", "3"));
  spec.vocab_per_lang = std::stoull(get("vocab_per_lang", "60"));
  spec.min_len = std::stoull(get("min_len", "3"));
  spec.max_len = std::stoull(get("max_len", "8"));
  spec.zipf_exponent = std::stod(get("zipf", "1.0"));
  spec.seed = seed;
  for (size_t i = 0;; ++i) {
    auto it = kv.find("pair." + std::to_string(i));
    if (it == kv.end()) break;
    auto f = split_words(it->second);
    if (f.size() < 3) throw DataError("MalformedSpec: pair." + std::to_string(i));
    SynthPairSpec ps;
    ps.src_index = std::stoull(f[0]);
    ps.tgt_index = std::stoull(f[1]);
    ps.train_size = std::stoull(f[2]);
    if (f.size() > 3) ps.dev_size = std::stoull(f[3]);
    if (f.size() > 4) ps.test_size = std::stoull(f[4]);
    if (f.size() > 5) ps.grammar = GrammarSpec::parse(f[5]);
    spec.pairs.push_back(ps);
  }
  if (spec.pairs.empty()) throw DataError("MalformedSpec: no pair.N entries");

  auto family = generate_family(spec);
  fs::create_directories(out_dir);
  std::ostringstream manifest;
  for (size_t pi = 0; pi < family.pairs.size(); ++pi) {
    const auto& pd = family.pairs[pi];
    const std::string s = family.lang(pd.src_index).str();
    const std::string t = family.lang(pd.tgt_index).str();
    const std::string stem = s + "-" + t;
    auto path = [&](const std::string& split, const std::string& lang) {
      return (fs::path(out_dir) / (stem + "." + split + "." + lang)).string();
    };
    save_parallel_corpus(pd.train, path("train", s), path("train", t));
    save_parallel_corpus(pd.dev, path("dev", s), path("dev", t));
    save_parallel_corpus(pd.test, path("test", s), path("test", t));
    manifest << s << '\t' << t << '\t' << path("train", s) << '\t' << path("train", t)
             << "\t1.0\n";
  }
  write_text((fs::path(out_dir) / "manifest.tsv").string(), manifest.str());

  fs::create_directories(fs::path(out_dir) / "dicts");
  for (size_t i = 0; i < family.languages.size(); ++i) {
    for (size_t j = 0; j < family.languages.size(); ++j) {
      if (i == j) continue;
      auto dict = family.dictionary(i, j);
      std::ostringstream buf;
      for (const auto& w : dict.words()) buf << w << ' ' << dict.candidates(w)->front() << '\n';
      write_text((fs::path(out_dir) / "dicts" /
                  (family.lang(i).str() + "-" + family.lang(j).str() + ".txt"))
                     .string(),
                 buf.str());
    }
  }
  std::cerr << "family of " << family.languages.size() << " languages, "
            << family.pairs.size() << " pairs -> " << out_dir << "\n";
  return 0;
}

int cmd_experiment(const std::string& spec_path, const std::string& out_dir, unsigned jobs) {
  ExperimentSpec spec = load_experiment_spec(spec_path);
  spec.options.jobs = jobs;
  auto family = generate_family(spec.family);
  ExperimentReport report;
  if (spec.mode == "comparison") {
    report = run_comparison(family, spec.arms, spec.seeds, spec.options);
  } else if (spec.mode == "volume") {
    report = volume_curve(family, spec.volume_arm, spec.volume_sizes, spec.seeds,
                          spec.options);
  } else {
    throw DataError("MalformedSpec: unknown mode '" + spec.mode + "'");
  }
  fs::create_directories(out_dir);
  std::string header = effective_config_header(
      {{"spec", spec_path}, {"mode", spec.mode}, {"seeds", std::to_string(spec.seeds.size())}});
  std::string body = report.table();
  if (spec.mode == "comparison" && !spec.arms.empty())
    body += report.delta_table(spec.arms.front().name);
  write_text((fs::path(out_dir) / "report.txt").string(), header + body);
  write_text((fs::path(out_dir) / "report.tsv").string(), report.machine_lines());
  std::cout << body;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale multilingual NMT pre-training with random aligned substitution"};
  app.require_subcommand(1);

  // learn-bpe
  auto* learn = app.add_subcommand("learn-bpe", "learn joint BPE merges from a manifest");
  std::string manifest_path, out_path, merges_path, vocab_path, input_path;
  size_t num_merges = 32000, mono_limit = 1000000;
  unsigned jobs = 1;
  learn->add_option("--manifest", manifest_path, "corpus manifest")->required();
  learn->add_option("--num-merges", num_merges, "merge operations");
  learn->add_option("--mono-limit", mono_limit, "monolingual sentence cap per language");
  learn->add_option("--jobs", jobs, "worker threads");
  learn->add_option("--out", out_path, "output merges file")->required();

  // apply-bpe
  auto* apply = app.add_subcommand("apply-bpe", "tokenize a text file with learned merges");
  apply->add_option("--merges", merges_path, "merges file")->required();
  apply->add_option("--input", input_path, "input text")->required();
  apply->add_option("--out", out_path, "output tokenized text")->required();

  // build-vocab
  auto* bv = app.add_subcommand("build-vocab", "build the shared vocabulary");
  uint64_t min_count = 21;
  bv->add_option("--manifest", manifest_path, "corpus manifest")->required();
  bv->add_option("--merges", merges_path, "merges file")->required();
  bv->add_option("--min-count", min_count, "keep tokens with count >= this");
  bv->add_option("--mono-limit", mono_limit, "monolingual sentence cap per language");
  bv->add_option("--out", out_path, "output vocab file")->required();

  // ras-augment
  auto* ras = app.add_subcommand("ras-augment", "code-switch a parallel corpus");
  std::string src_path, tgt_path, src_lang, tgt_lang, dict_dir;
  double prob = 0.3;
  size_t top_k = 1000;
  uint64_t seed = 0;
  bool target_side = false, in_place = false;
  ras->add_option("--src", src_path, "source file")->required();
  ras->add_option("--tgt", tgt_path, "target file")->required();
  ras->add_option("--src-lang", src_lang, "source language")->required();
  ras->add_option("--tgt-lang", tgt_lang, "target language")->required();
  ras->add_option("--dict", dict_dir, "dictionary directory (src-tgt.txt files)")->required();
  ras->add_option("--prob", prob, "substitution probability");
  ras->add_option("--top-k", top_k, "dictionary entries considered");
  ras->add_option("--seed", seed, "random seed")->required();
  ras->add_flag("--target-side", target_side, "also substitute the target side");
  ras->add_flag("--replace-in-place", in_place, "substitute in place instead of doubling");
  ras->add_option("--out", out_path, "output prefix (.ras two-file corpus)")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "multilingual pre-training");
  ModelFlags pre_model;
  TrainFlags pre_train;
  std::string checkpoint_dir;
  double ras_prob = 0.3;
  size_t ras_top_k = 1000;
  pre->add_option("--manifest", manifest_path, "corpus manifest")->required();
  pre->add_option("--merges", merges_path, "merges file")->required();
  pre->add_option("--vocab", vocab_path, "vocab file")->required();
  pre->add_option("--dict", dict_dir, "dictionary directory enabling RAS");
  pre->add_option("--prob", ras_prob, "RAS substitution probability");
  pre->add_option("--top-k", ras_top_k, "RAS dictionary entries");
  pre_model.attach(pre);
  pre_train.attach(pre);
  pre->add_option("--checkpoint-dir", checkpoint_dir, "periodic checkpoint directory");
  pre->add_option("--out", out_path, "output checkpoint")->required();
  pre->set_config("--config");

  // finetune
  auto* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on one direction");
  TrainFlags ft_train;
  ft_train.dropout = 0.3;
  ft_train.steps = 400;
  ft_train.warmup = 40;
  std::string ckpt_path;
  ft->add_option("--ckpt", ckpt_path, "input checkpoint")->required();
  ft->add_option("--src", src_path, "source file")->required();
  ft->add_option("--tgt", tgt_path, "target file")->required();
  ft->add_option("--src-lang", src_lang, "source language")->required();
  ft->add_option("--tgt-lang", tgt_lang, "target language")->required();
  ft->add_option("--merges", merges_path, "merges file")->required();
  ft->add_option("--vocab", vocab_path, "vocab file")->required();
  ft_train.attach(ft);
  ft->add_option("--out", out_path, "output checkpoint")->required();
  ft->set_config("--config");

  // translate
  auto* tr = app.add_subcommand("translate", "beam-decode a source file");
  size_t beam = 5, max_len = 32;
  bool greedy = false, length_norm = false;
  tr->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  tr->add_option("--merges", merges_path, "merges file")->required();
  tr->add_option("--vocab", vocab_path, "vocab file")->required();
  tr->add_option("--input", input_path, "source sentences")->required();
  tr->add_option("--src-lang", src_lang, "source language")->required();
  tr->add_option("--tgt-lang", tgt_lang, "target language")->required();
  tr->add_option("--beam", beam, "beam size");
  tr->add_option("--max-len", max_len, "max generated tokens");
  tr->add_flag("--greedy", greedy, "greedy decoding");
  tr->add_flag("--length-norm", length_norm, "length-normalized scores");
  tr->add_option("--out", out_path, "output translations")->required();

  // score-bleu
  auto* sb = app.add_subcommand("score-bleu", "corpus BLEU of hypotheses vs references");
  std::string hyp_path, ref_path;
  size_t max_n = 4;
  bool smooth = false;
  sb->add_option("--hyp", hyp_path, "hypotheses file")->required();
  sb->add_option("--ref", ref_path, "references file")->required();
  sb->add_option("--max-n", max_n, "maximum n-gram order");
  sb->add_flag("--smooth", smooth, "add-one smoothing on n>=2");

  // analyze-similarity
  auto* sim = app.add_subcommand("analyze-similarity", "aligned-word cosine report");
  std::string dict_path, words_path;
  sim->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  sim->add_option("--merges", merges_path, "merges file")->required();
  sim->add_option("--vocab", vocab_path, "vocab file")->required();
  sim->add_option("--dict", dict_path, "MUSE dictionary file")->required();
  sim->add_option("--src-lang", src_lang, "dictionary source language")->required();
  sim->add_option("--tgt-lang", tgt_lang, "dictionary target language")->required();
  sim->add_option("--top-k", top_k, "dictionary entries");
  sim->add_option("--out", out_path, "output report")->required();

  // analyze-pca
  auto* pca = app.add_subcommand("analyze-pca", "2-d PCA of word embeddings");
  pca->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  pca->add_option("--merges", merges_path, "merges file")->required();
  pca->add_option("--vocab", vocab_path, "vocab file")->required();
  pca->add_option("--words", words_path, "file of `word lang` lines")->required();
  pca->add_option("--out", out_path, "output coordinates")->required();

  // synth-generate
  auto* synth = app.add_subcommand("synth-generate", "generate a synthetic family");
  std::string spec_path, out_dir;
  synth->add_option("--spec", spec_path, "family spec (key=value)")->required();
  synth->add_option("--seed", seed, "generation seed")->required();
  synth->add_option("--out", out_dir, "output directory")->required();

  // experiment
  auto* exp = app.add_subcommand("experiment", "run a comparison or volume experiment");
  exp->add_option("--spec", spec_path, "experiment spec (key=value)")->required();
  exp->add_option("--jobs", jobs, "parallel arm runs");
  exp->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*learn) return cmd_learn_bpe(manifest_path, num_merges, mono_limit, jobs, out_path);
    if (*apply) return cmd_apply_bpe(merges_path, input_path, out_path);
    if (*bv) return cmd_build_vocab(manifest_path, merges_path, min_count, mono_limit, out_path);
    if (*ras)
      return cmd_ras_augment(src_path, tgt_path, src_lang, tgt_lang, dict_dir, prob, top_k,
                             seed, target_side, in_place, out_path);
    if (*pre)
      return cmd_pretrain(manifest_path, merges_path, vocab_path, dict_dir, ras_prob,
                          ras_top_k, pre_model, pre_train, out_path, checkpoint_dir);
    if (*ft)
      return cmd_finetune(ckpt_path, src_path, tgt_path, src_lang, tgt_lang, merges_path,
                          vocab_path, ft_train, out_path);
    if (*tr)
      return cmd_translate(ckpt_path, merges_path, vocab_path, input_path, src_lang,
                           tgt_lang, beam, max_len, greedy, length_norm, out_path);
    if (*sb) return cmd_score_bleu(hyp_path, ref_path, max_n, smooth);
    if (*sim)
      return cmd_analyze_similarity(ckpt_path, merges_path, vocab_path, dict_path, src_lang,
                                    tgt_lang, top_k, out_path);
    if (*pca) return cmd_analyze_pca(ckpt_path, merges_path, vocab_path, words_path, out_path);
    if (*synth) return cmd_synth_generate(spec_path, seed, out_dir);
    if (*exp) return cmd_experiment(spec_path, out_dir, jobs);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
