#pragma once

// Corpus-level BLEU on whitespace tokens: clipped n-gram precisions,
// geometric mean, brevity penalty min(1, e^(1-r/c)).

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mrasp/common.hpp"

namespace mrasp {

struct BleuReport {
  double score = 0.0;                 // in [0, 1]
  std::vector<double> precisions;     // p_1 .. p_max_n
  double brevity_penalty = 1.0;
  size_t hyp_length = 0, ref_length = 0;
};

namespace detail {

using NgramCounts = std::map<std::vector<std::string>, size_t>;

inline NgramCounts ngram_counts(const std::vector<std::string>& tokens, size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

}  // namespace detail

// One reference per hypothesis. With smoothing enabled, precisions for
// n >= 2 get add-one smoothing; otherwise any zero precision zeroes the score.
inline BleuReport bleu(const std::vector<std::vector<std::string>>& hypotheses,
                       const std::vector<std::vector<std::string>>& references,
                       size_t max_n = 4, bool smoothing = false) {
  if (hypotheses.size() != references.size())
    throw DataError("LengthMismatch: " + std::to_string(hypotheses.size()) +
                    " hypotheses vs " + std::to_string(references.size()) + " references");
  if (hypotheses.empty()) throw UsageError("EmptyCorpus: nothing to score");

  BleuReport report;
  std::vector<size_t> matches(max_n, 0), totals(max_n, 0);
  for (size_t s = 0; s < hypotheses.size(); ++s) {
    report.hyp_length += hypotheses[s].size();
    report.ref_length += references[s].size();
    for (size_t n = 1; n <= max_n; ++n) {
      auto hyp_counts = detail::ngram_counts(hypotheses[s], n);
      auto ref_counts = detail::ngram_counts(references[s], n);
      for (const auto& [gram, count] : hyp_counts) {
        totals[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  report.precisions.resize(max_n, 0.0);
  double log_sum = 0.0;
  bool any_zero = false;
  for (size_t n = 1; n <= max_n; ++n) {
    double m = double(matches[n - 1]);
    double t = double(totals[n - 1]);
    if (smoothing && n >= 2) {
      m += 1.0;
      t += 1.0;
    }
    report.precisions[n - 1] = t > 0.0 ? m / t : 0.0;
    if (report.precisions[n - 1] <= 0.0)
      any_zero = true;
    else
      log_sum += std::log(report.precisions[n - 1]);
  }

  const double c = double(report.hyp_length), r = double(report.ref_length);
  report.brevity_penalty = (c == 0.0) ? 0.0 : std::min(1.0, std::exp(1.0 - r / c));
  report.score = any_zero ? 0.0 : report.brevity_penalty * std::exp(log_sum / double(max_n));
  return report;
}

}  // namespace mrasp
