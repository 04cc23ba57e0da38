#pragma once

// Parallel corpora: loading, language tagging, pooling into directed
// training views, and deterministic subsampling.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mrasp/common.hpp"
#include "mrasp/rng.hpp"

namespace mrasp {

class LanguageCode {
public:
  LanguageCode() = default;
  explicit LanguageCode(std::string code) : code_(std::move(code)) {
    if (!valid(code_)) throw UsageError("InvalidLanguageCode: '" + code_ + "'");
  }

  static bool valid(std::string_view code) {
    if (code.size() < 2 || code.size() > 3) return false;
    for (char c : code)
      if (c < 'a' || c > 'z') return false;
    // Reserved special-token names cannot double as language codes.
    return code != "pad" && code != "bos" && code != "eos" && code != "unk";
  }

  const std::string& str() const { return code_; }
  std::string token() const { return "<" + code_ + ">"; }

  bool operator==(const LanguageCode& o) const { return code_ == o.code_; }
  bool operator!=(const LanguageCode& o) const { return code_ != o.code_; }
  bool operator<(const LanguageCode& o) const { return code_ < o.code_; }

private:
  std::string code_;
};

// True for `<xx>` / `<xxx>` language-indicator tokens.
inline bool is_language_indicator(std::string_view tok) {
  return tok.size() >= 4 && tok.front() == '<' && tok.back() == '>' &&
         LanguageCode::valid(tok.substr(1, tok.size() - 2));
}

struct SentencePair {
  std::vector<std::string> source;
  std::vector<std::string> target;
  LanguageCode src_lang;
  LanguageCode tgt_lang;
};

struct ParallelCorpus {
  std::vector<SentencePair> pairs;
  LanguageCode src_lang;
  LanguageCode tgt_lang;

  size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

struct LoadReport {
  size_t retained = 0;
  std::vector<size_t> dropped_lines;  // 1-based, blank on both sides
};

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("IoError: cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw DataError("IoError: read failure on '" + path + "'");
  return lines;
}

}  // namespace detail

// Loads a line-aligned file pair. Lines blank on both sides are dropped and
// recorded in the report; a line blank on exactly one side is malformed.
inline ParallelCorpus load_parallel_corpus(const std::string& src_path,
                                           const std::string& tgt_path,
                                           const LanguageCode& src,
                                           const LanguageCode& tgt,
                                           LoadReport* report = nullptr) {
  auto src_lines = detail::read_lines(src_path);
  auto tgt_lines = detail::read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size())
    throw DataError("LineCountMismatch: " + src_path + " has " +
                    std::to_string(src_lines.size()) + " lines, " + tgt_path + " has " +
                    std::to_string(tgt_lines.size()));
  ParallelCorpus corpus;
  corpus.src_lang = src;
  corpus.tgt_lang = tgt;
  LoadReport local;
  for (size_t i = 0; i < src_lines.size(); ++i) {
    if (!valid_utf8(src_lines[i]))
      throw DataError("InvalidUtf8: " + src_path + " line " + std::to_string(i + 1));
    if (!valid_utf8(tgt_lines[i]))
      throw DataError("InvalidUtf8: " + tgt_path + " line " + std::to_string(i + 1));
    auto s = split_words(src_lines[i]);
    auto t = split_words(tgt_lines[i]);
    if (s.empty() && t.empty()) {
      local.dropped_lines.push_back(i + 1);
      continue;
    }
    if (s.empty() || t.empty())
      throw DataError("EmptySide: line " + std::to_string(i + 1) +
                      " is blank on one side only");
    corpus.pairs.push_back({std::move(s), std::move(t), src, tgt});
  }
  local.retained = corpus.pairs.size();
  if (report) *report = local;
  return corpus;
}

// Two-file format: one sentence per line, LF endings, line i <-> line i.
inline void save_parallel_corpus(const ParallelCorpus& corpus, const std::string& src_path,
                                 const std::string& tgt_path) {
  std::ofstream src(src_path, std::ios::binary), tgt(tgt_path, std::ios::binary);
  if (!src || !tgt) throw DataError("IoError: cannot write corpus files");
  for (const auto& p : corpus.pairs) {
    src << join_words(p.source) << '\n';
    tgt << join_words(p.target) << '\n';
  }
}

inline SentencePair inject_language_tokens(const SentencePair& pair) {
  if (!pair.source.empty() && is_language_indicator(pair.source.front()))
    throw DataError("AlreadyTagged: source starts with " + pair.source.front());
  SentencePair out = pair;
  out.source.insert(out.source.begin(), pair.src_lang.token());
  out.target.insert(out.target.begin(), pair.tgt_lang.token());
  return out;
}

// ---------------------------------------------------------------------------
// Manifest and training pool

struct ManifestEntry {
  LanguageCode src_lang;
  LanguageCode tgt_lang;  // unset for monolingual supplements
  std::string src_path;
  std::string tgt_path;  // empty for monolingual supplements
  double weight = 1.0;

  bool monolingual() const { return tgt_path.empty(); }
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
};

// `src TAB tgt TAB src_path TAB tgt_path TAB weight`, `#` comments ignored.
// A `-` (or empty) tgt_path marks a monolingual supplement.
inline CorpusManifest load_manifest(const std::string& path) {
  auto lines = detail::read_lines(path);
  CorpusManifest m;
  std::vector<std::string> seen;
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    std::string_view line = trim(lines[ln]);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    size_t start = 0;
    std::string raw(line);
    for (size_t i = 0; i <= raw.size(); ++i) {
      if (i == raw.size() || raw[i] == '\t') {
        fields.push_back(raw.substr(start, i - start));
        start = i + 1;
      }
    }
    if (fields.size() != 5)
      throw DataError("MalformedManifest: line " + std::to_string(ln + 1) +
                      " has " + std::to_string(fields.size()) + " fields, want 5");
    ManifestEntry e;
    e.src_lang = LanguageCode(fields[0]);
    e.src_path = fields[2];
    e.tgt_path = (fields[3] == "-") ? "" : fields[3];
    if (!e.monolingual()) e.tgt_lang = LanguageCode(fields[1]);
    try {
      e.weight = std::stod(fields[4]);
    } catch (const std::exception&) {
      throw DataError("MalformedManifest: line " + std::to_string(ln + 1) + " bad weight");
    }
    if (!(e.weight > 0))
      throw DataError("MalformedManifest: line " + std::to_string(ln + 1) +
                      " weight must be positive");
    std::string key = fields[0] + "\t" + fields[1] + "\t" + e.src_path + "\t" + e.tgt_path;
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw DataError("DuplicateManifestEntry: line " + std::to_string(ln + 1));
    seen.push_back(key);
    if (!std::filesystem::exists(e.src_path))
      throw DataError("IoError: missing file '" + e.src_path + "'");
    if (!e.monolingual() && !std::filesystem::exists(e.tgt_path))
      throw DataError("IoError: missing file '" + e.tgt_path + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

// A directed, language-tagged view over loaded corpora. Reverse directions
// and merges are views over the shared storage, never copies.
class DirectedView {
public:
  struct Segment {
    std::shared_ptr<const ParallelCorpus> raw;
    bool reversed = false;
    double weight = 1.0;
  };

  DirectedView(LanguageCode src, LanguageCode tgt, bool tagged = true)
      : src_(std::move(src)), tgt_(std::move(tgt)), tagged_(tagged) {}

  void add_segment(std::shared_ptr<const ParallelCorpus> raw, bool reversed,
                   double weight = 1.0) {
    sizes_.push_back((sizes_.empty() ? 0 : sizes_.back()) + raw->size());
    segments_.push_back({std::move(raw), reversed, weight});
  }

  const LanguageCode& src_lang() const { return src_; }
  const LanguageCode& tgt_lang() const { return tgt_; }
  size_t size() const { return sizes_.empty() ? 0 : sizes_.back(); }
  size_t segment_count() const { return segments_.size(); }

  // Average manifest weight across segments, weighted by segment size.
  double weight() const {
    if (size() == 0) return 1.0;
    double acc = 0;
    for (const auto& s : segments_) acc += s.weight * double(s.raw->size());
    return acc / double(size());
  }

  SentencePair pair(size_t i) const {
    auto it = std::upper_bound(sizes_.begin(), sizes_.end(), i);
    size_t seg = size_t(it - sizes_.begin());
    size_t base = seg == 0 ? 0 : sizes_[seg - 1];
    const auto& s = segments_[seg];
    const SentencePair& p = s.raw->pairs[i - base];
    SentencePair out;
    if (s.reversed) {
      out.source = p.target;
      out.target = p.source;
      out.src_lang = s.raw->tgt_lang;
      out.tgt_lang = s.raw->src_lang;
    } else {
      out = p;
    }
    return tagged_ ? inject_language_tokens(out) : out;
  }

  ParallelCorpus materialize() const {
    ParallelCorpus c;
    c.src_lang = src_;
    c.tgt_lang = tgt_;
    c.pairs.reserve(size());
    for (size_t i = 0; i < size(); ++i) c.pairs.push_back(pair(i));
    return c;
  }

private:
  LanguageCode src_, tgt_;
  bool tagged_;
  std::vector<DirectedView::Segment> segments_;
  std::vector<size_t> sizes_;  // cumulative
};

// Expands each bilingual manifest entry into both directions (A->B and B->A),
// merging entries that land on the same direction. Monolingual supplements do
// not contribute training directions. Directions come out tagged.
inline std::vector<DirectedView> build_training_pool(const CorpusManifest& manifest,
                                                     bool tagged = true) {
  std::vector<DirectedView> pool;
  auto find_or_add = [&](const LanguageCode& s, const LanguageCode& t) -> DirectedView& {
    for (auto& v : pool)
      if (v.src_lang() == s && v.tgt_lang() == t) return v;
    pool.emplace_back(s, t, tagged);
    return pool.back();
  };
  for (const auto& e : manifest.entries) {
    if (e.monolingual()) continue;
    auto raw = std::make_shared<const ParallelCorpus>(
        load_parallel_corpus(e.src_path, e.tgt_path, e.src_lang, e.tgt_lang));
    find_or_add(e.src_lang, e.tgt_lang).add_segment(raw, false, e.weight);
    find_or_add(e.tgt_lang, e.src_lang).add_segment(raw, true, e.weight);
  }
  return pool;
}

// Uniform sample of min(n, |corpus|) pairs without replacement; the selected
// pairs keep their original order. Deterministic for a fixed seed.
inline ParallelCorpus subsample(const ParallelCorpus& corpus, size_t n, uint64_t seed) {
  ParallelCorpus out;
  out.src_lang = corpus.src_lang;
  out.tgt_lang = corpus.tgt_lang;
  const size_t total = corpus.size();
  if (n >= total) {
    out.pairs = corpus.pairs;
    return out;
  }
  std::vector<size_t> idx(total);
  for (size_t i = 0; i < total; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, "subsample"));
  for (size_t i = 0; i < n; ++i) {
    size_t j = i + size_t(rng.next_below(total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  out.pairs.reserve(n);
  for (size_t i : idx) out.pairs.push_back(corpus.pairs[i]);
  return out;
}

}  // namespace mrasp
