#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "conceptrank/core.hpp"

namespace conceptrank::rerank {

struct ScoredCandidate {
  CandidateSentence candidate;
  double sent_score_norm = 0.0;
  std::vector<ConceptScore> matched;
  double conc_score = 0.0;
  double new_score = 0.0;
  std::size_t original_rank = 0;
};

namespace detail {

inline bool contains_run(const Tokens& haystack, const Tokens& needle) {
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

}  // namespace detail

/// A detected concept in token form, ready for repeated matching.
struct ConceptPattern {
  ConceptScore score;
  Tokens tokens;

  ConceptPattern(ConceptScore c, bool use_stem)
      : score(std::move(c)), tokens(tokenize(score.term)) {
    if (use_stem) tokens = stem_all(tokens);
  }
};

inline std::vector<ConceptPattern> compile(std::span<const ConceptScore> concepts,
                                           bool use_stem = false) {
  std::vector<ConceptPattern> out;
  out.reserve(concepts.size());
  for (const auto& c : concepts) out.emplace_back(c, use_stem);
  return out;
}

/// Concepts whose token sequence occurs contiguously in `tokens`, in detector
/// order, each at most once. With `use_stem` both sides are suffix-stripped.
inline std::vector<ConceptScore> match_concepts(const Tokens& tokens,
                                                std::span<const ConceptPattern> patterns,
                                                bool use_stem = false) {
  const Tokens sentence = use_stem ? stem_all(tokens) : tokens;
  std::vector<ConceptScore> matched;
  for (const auto& p : patterns) {
    if (detail::contains_run(sentence, p.tokens)) matched.push_back(p.score);
  }
  return matched;
}

inline std::vector<ConceptScore> match_concepts(const Tokens& tokens,
                                                std::span<const ConceptScore> concepts,
                                                bool use_stem = false) {
  return match_concepts(tokens, compile(concepts, use_stem), use_stem);
}

inline double conc_score(std::span<const ConceptScore> matched) {
  if (matched.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : matched) total += c.confidence;
  return std::clamp(total / static_cast<double>(matched.size()), 0.0, 1.0);
}

/// theta * conc + (1 - theta) * sent. The result is pinned to [min, max] of
/// the two inputs so last-ulp rounding can never escape the interval.
inline double fuse(double conc, double sent, double theta) {
  if (!(conc >= 0.0 && conc <= 1.0)) throw RangeError("concept score outside [0,1]");
  if (!(sent >= 0.0 && sent <= 1.0)) throw RangeError("sentence score outside [0,1]");
  if (!(theta >= 0.0 && theta <= 1.0)) throw RangeError("theta outside [0,1]");
  const double v = theta * conc + (1.0 - theta) * sent;
  return std::clamp(v, std::min(conc, sent), std::max(conc, sent));
}

/// Reorders a k-best list by fused score. Sorting is stable, so equal scores
/// keep their generator order.
inline std::vector<ScoredCandidate> rerank(const KBestList& list,
                                           std::span<const ConceptPattern> patterns,
                                           const RerankConfig& config) {
  config.validate();
  const auto& cands = list.candidates();
  if (cands.empty()) throw ValidationError("cannot rerank an empty candidate list");

  std::vector<double> raw;
  raw.reserve(cands.size());
  for (const auto& c : cands) raw.push_back(c.sent_score);
  const std::vector<double> norm = normalize_sentence_scores(raw, config.normalization);

  std::vector<ScoredCandidate> out;
  out.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i) {
    ScoredCandidate sc;
    sc.candidate = cands[i];
    sc.sent_score_norm = norm[i];
    sc.matched = match_concepts(cands[i].tokens, patterns, config.stem);
    sc.conc_score = conc_score(sc.matched);
    sc.new_score = fuse(sc.conc_score, sc.sent_score_norm, config.theta);
    sc.original_rank = i;
    out.push_back(std::move(sc));
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    return a.new_score > b.new_score;
  });
  return out;
}

inline std::vector<ScoredCandidate> rerank(const KBestList& list,
                                           std::span<const ConceptScore> concepts,
                                           const RerankConfig& config) {
  return rerank(list, compile(concepts, config.stem), config);
}

}  // namespace conceptrank::rerank
