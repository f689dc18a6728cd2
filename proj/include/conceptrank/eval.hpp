#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "conceptrank/core.hpp"
#include "conceptrank/rerank.hpp"

namespace conceptrank::eval {

struct ReferenceSet {
  std::string image_id;
  std::vector<Tokens> references;

  ReferenceSet() = default;
  ReferenceSet(std::string id, std::vector<Tokens> refs)
      : image_id(std::move(id)), references(std::move(refs)) {
    if (references.empty())
      throw ValidationError("reference set for '" + image_id + "' is empty");
  }
};

using GoldMap = std::map<std::string, ReferenceSet>;
using PredictionMap = std::map<std::string, Tokens>;
using ConceptMap = std::map<std::string, std::vector<ConceptScore>>;

/// Classic METEOR parameterization: F = PR / (alpha P + (1 - alpha) R) and
/// penalty = gamma (chunks / matches)^beta. The optional stem stage lets two
/// words match when their suffix-stripped forms agree.
struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
  bool stem = false;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw RangeError("alpha must lie in (0,1)");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw RangeError("beta must be positive");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw RangeError("gamma must lie in (0,1]");
  }
};

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  bool exact = true;  // false when the greedy aligner was used

  friend bool operator==(const Alignment& a, const Alignment& b) {
    return a.matches == b.matches && a.chunks == b.chunks;
  }
};

/// Sentences longer than this (either side) use the greedy aligner.
inline constexpr std::size_t kExactAlignLimit = 20;

namespace detail {

// Tokens mapped to equivalence-class ids; -1 marks a class that cannot match.
struct ClassView {
  std::vector<int> hyp, ref;
  std::vector<std::size_t> target;  // matches each class must receive
  std::size_t total = 0;
};

inline ClassView classify(const Tokens& hyp, const Tokens& ref, bool use_stem) {
  std::unordered_map<std::string, int> ids;
  auto key = [&](const std::string& t) { return use_stem ? stem(t) : t; };
  ClassView v;
  std::vector<std::size_t> hc, rc;
  auto id_of = [&](const std::string& t) {
    auto [it, inserted] = ids.emplace(key(t), static_cast<int>(ids.size()));
    if (inserted) {
      hc.push_back(0);
      rc.push_back(0);
    }
    return it->second;
  };
  for (const auto& t : hyp) {
    int c = id_of(t);
    v.hyp.push_back(c);
    ++hc[c];
  }
  for (const auto& t : ref) {
    int c = id_of(t);
    v.ref.push_back(c);
    ++rc[c];
  }
  v.target.resize(hc.size());
  for (std::size_t c = 0; c < hc.size(); ++c) {
    v.target[c] = std::min(hc[c], rc[c]);
    v.total += v.target[c];
  }
  for (auto& c : v.hyp) {
    if (v.target[c] == 0) c = -1;
  }
  for (auto& c : v.ref) {
    if (v.target[c] == 0) c = -1;
  }
  return v;
}

// Left to right: continue the current chunk when possible, otherwise start
// at the unused position with the longest matching run (earliest on ties).
// Every class reaches its target, so the matching is maximum.
inline std::size_t greedy_chunks(const ClassView& v) {
  std::vector<bool> used(v.ref.size(), false);
  std::vector<std::size_t> got(v.target.size(), 0);
  std::size_t chunks = 0;
  std::ptrdiff_t prev = -2;
  for (std::size_t i = 0; i < v.hyp.size(); ++i) {
    const int c = v.hyp[i];
    if (c < 0 || got[c] == v.target[c]) {
      prev = -2;
      continue;
    }
    std::ptrdiff_t pick = -1;
    const auto next = static_cast<std::size_t>(prev + 1);
    if (prev >= 0 && next < v.ref.size() && !used[next] && v.ref[next] == c) {
      pick = prev + 1;
    } else {
      std::size_t best_run = 0;
      for (std::size_t j = 0; j < v.ref.size(); ++j) {
        if (used[j] || v.ref[j] != c) continue;
        std::size_t run = 0;
        while (i + run < v.hyp.size() && j + run < v.ref.size() && !used[j + run] &&
               v.hyp[i + run] >= 0 && v.hyp[i + run] == v.ref[j + run])
          ++run;
        if (run > best_run) {
          best_run = run;
          pick = static_cast<std::ptrdiff_t>(j);
        }
      }
      ++chunks;
    }
    used[static_cast<std::size_t>(pick)] = true;
    ++got[c];
    prev = pick;
  }
  return chunks;
}

// Depth-first branch and bound over hyp positions. Chunk count never
// decreases along a path, so any branch reaching the incumbent is cut.
class ChunkSearch {
 public:
  ChunkSearch(const ClassView& v, std::size_t incumbent, std::size_t node_budget)
      : v_(v), best_(incumbent), budget_(node_budget) {
    got_.assign(v.target.size(), 0);
    left_.assign(v.target.size(), 0);
    for (int c : v.hyp) {
      if (c >= 0) ++left_[c];
    }
  }

  std::size_t run() {
    visit(0, 0, -2, 0);
    return best_;
  }

  bool complete() const noexcept { return !exhausted_; }

 private:
  void visit(std::size_t i, std::uint32_t used, int prev, std::size_t chunks) {
    if (chunks >= best_) return;
    if (++nodes_ > budget_) {
      exhausted_ = true;
      return;
    }
    if (i == v_.hyp.size()) {
      best_ = chunks;
      return;
    }
    const int c = v_.hyp[i];
    if (c < 0) {
      visit(i + 1, used, -2, chunks);
      return;
    }
    --left_[c];
    if (got_[c] < v_.target[c]) {
      const int cont = prev + 1;
      if (prev >= 0 && static_cast<std::size_t>(cont) < v_.ref.size() && v_.ref[cont] == c &&
          !(used >> cont & 1u)) {
        ++got_[c];
        visit(i + 1, used | (1u << cont), cont, chunks);
        --got_[c];
      }
      for (std::size_t j = 0; j < v_.ref.size() && !exhausted_; ++j) {
        if (static_cast<int>(j) == cont && prev >= 0) continue;
        if (v_.ref[j] != c || (used >> j & 1u)) continue;
        ++got_[c];
        visit(i + 1, used | (1u << j), static_cast<int>(j), chunks + 1);
        --got_[c];
      }
    }
    // Leaving this occurrence unmatched is allowed only if later occurrences
    // can still fill the class quota.
    if (!exhausted_ && left_[c] >= v_.target[c] - got_[c]) visit(i + 1, used, -2, chunks);
    ++left_[c];
  }

  const ClassView& v_;
  std::size_t best_;
  std::size_t budget_;
  std::size_t nodes_ = 0;
  bool exhausted_ = false;
  std::vector<std::size_t> got_, left_;
};

}  // namespace detail

/// Maximum one-to-one unigram matching, and among maximum matchings the
/// fewest chunks (runs contiguous in both sentences). Exact up to
/// kExactAlignLimit tokens per side; greedy beyond that, reported through
/// Alignment::exact.
inline Alignment align(const Tokens& hyp, const Tokens& ref, bool use_stem = false,
                       std::size_t node_budget = 5'000'000) {
  const detail::ClassView v = detail::classify(hyp, ref, use_stem);
  Alignment out;
  out.matches = v.total;
  if (v.total == 0) return out;
  const std::size_t greedy = detail::greedy_chunks(v);
  if (hyp.size() > kExactAlignLimit || ref.size() > kExactAlignLimit) {
    out.chunks = greedy;
    out.exact = false;
    return out;
  }
  detail::ChunkSearch search(v, greedy, node_budget);
  out.chunks = search.run();
  out.exact = search.complete();
  return out;
}

// ---------------------------------------------------------------------------
// METEOR-lite
// ---------------------------------------------------------------------------

struct MeteorResult {
  double score = 0.0;
  bool exact = true;
};

inline double meteor_from_alignment(const Alignment& a, std::size_t hyp_len, std::size_t ref_len,
                                    const MeteorParams& params) {
  if (a.matches == 0 || hyp_len == 0 || ref_len == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double precision = m / static_cast<double>(hyp_len);
  const double recall = m / static_cast<double>(ref_len);
  const double fmean =
      precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
  const double penalty =
      params.gamma * std::pow(static_cast<double>(a.chunks) / m, params.beta);
  return std::clamp(fmean * (1.0 - penalty), 0.0, 1.0);
}

/// Best score over the references.
inline MeteorResult meteor_lite_detail(const Tokens& hyp, std::span<const Tokens> refs,
                                       const MeteorParams& params = {}) {
  if (refs.empty()) throw ValidationError("meteor needs at least one reference");
  MeteorResult out;
  if (hyp.empty()) return out;
  for (const auto& ref : refs) {
    const Alignment a = align(hyp, ref, params.stem);
    out.exact = out.exact && a.exact;
    out.score = std::max(out.score, meteor_from_alignment(a, hyp.size(), ref.size(), params));
  }
  return out;
}

inline double meteor_lite(const Tokens& hyp, std::span<const Tokens> refs,
                          const MeteorParams& params = {}) {
  return meteor_lite_detail(hyp, refs, params).score;
}

// ---------------------------------------------------------------------------
// Corpus scoring
// ---------------------------------------------------------------------------

struct CorpusReport {
  std::map<std::string, double> per_image;  // every gold image, 0 when missing
  std::set<std::string> missing;            // gold images without a prediction
  std::size_t inexact = 0;                  // images scored with greedy alignment
  double score = 0.0;
};

namespace detail {

inline void check_predictions(const PredictionMap& predictions, const GoldMap& gold) {
  for (const auto& [id, _] : predictions) {
    if (!gold.count(id)) throw ValidationError("prediction for '" + id + "' has no references");
  }
}

// Summation follows gold order so every caller gets bit-identical means.
inline double mean_over_gold(const GoldMap& gold, const std::map<std::string, double>& scores) {
  double total = 0.0;
  for (const auto& [id, _] : gold) {
    auto it = scores.find(id);
    if (it != scores.end()) total += it->second;
  }
  return total / static_cast<double>(gold.size());
}

}  // namespace detail

/// Macro average of per-image METEOR-lite over the gold set.
inline CorpusReport corpus_report(const PredictionMap& predictions, const GoldMap& gold,
                                  const MeteorParams& params = {}) {
  params.validate();
  if (gold.empty()) throw ValidationError("gold reference set is empty");
  detail::check_predictions(predictions, gold);
  CorpusReport report;
  for (const auto& [id, refs] : gold) {
    auto it = predictions.find(id);
    if (it == predictions.end()) {
      report.missing.insert(id);
      report.per_image[id] = 0.0;
      continue;
    }
    const MeteorResult r = meteor_lite_detail(it->second, refs.references, params);
    if (!r.exact) ++report.inexact;
    report.per_image[id] = r.score;
  }
  report.score = detail::mean_over_gold(gold, report.per_image);
  return report;
}

inline double corpus_score(const PredictionMap& predictions, const GoldMap& gold,
                           const MeteorParams& params = {}) {
  return corpus_report(predictions, gold, params).score;
}

// ---------------------------------------------------------------------------
// Dataset splitting
// ---------------------------------------------------------------------------

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};

struct Split {
  std::vector<std::string> train, val, test;
};

namespace detail {

// Uniform draw in [0, n) without modulo bias; mt19937_64 output is fixed by
// the standard, so the shuffle is identical on every platform.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t floor = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = rng();
    if (r >= floor) return r % n;
  }
}

}  // namespace detail

/// Seeded shuffle of the (sorted) id set, cut into train/val/test. Each part
/// is returned sorted.
inline Split split_dataset(std::span<const std::string> ids, SplitSizes sizes,
                           std::uint64_t seed) {
  if (sizes.train + sizes.val + sizes.test != ids.size())
    throw ValidationError("split sizes sum to " +
                          std::to_string(sizes.train + sizes.val + sizes.test) + " but there are " +
                          std::to_string(ids.size()) + " ids");
  std::vector<std::string> pool(ids.begin(), ids.end());
  std::sort(pool.begin(), pool.end());
  if (auto dup = std::adjacent_find(pool.begin(), pool.end()); dup != pool.end())
    throw ValidationError("duplicate id '" + *dup + "' in split input");
  std::mt19937_64 rng(seed);
  for (std::size_t i = pool.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(detail::bounded(rng, i));
    std::swap(pool[i - 1], pool[j]);
  }
  Split out;
  auto take = [&, pos = std::size_t{0}](std::vector<std::string>& dst, std::size_t n) mutable {
    dst.assign(pool.begin() + static_cast<std::ptrdiff_t>(pos),
               pool.begin() + static_cast<std::ptrdiff_t>(pos + n));
    std::sort(dst.begin(), dst.end());
    pos += n;
  };
  take(out.train, sizes.train);
  take(out.val, sizes.val);
  take(out.test, sizes.test);
  return out;
}

// ---------------------------------------------------------------------------
// Theta tuning
// ---------------------------------------------------------------------------

struct TuneResult {
  double theta_star = 0.0;
  double best_score = 0.0;
  std::vector<std::pair<double, double>> curve;  // (theta, corpus score)
};

/// Grid points i / N for N = 1 / step. Rejects steps that do not divide 1.
inline std::vector<double> theta_grid(double step) {
  if (!(step > 0.0 && step <= 1.0)) throw RangeError("grid step must lie in (0,1]");
  const double count = std::round(1.0 / step);
  if (std::abs(count * step - 1.0) > 1e-9)
    throw RangeError("grid step does not divide 1 evenly");
  const auto n = static_cast<std::size_t>(count);
  std::vector<double> grid;
  grid.reserve(n + 1);
  for (std::size_t i = 0; i <= n; ++i) grid.push_back(static_cast<double>(i) / count);
  return grid;
}

/// Top-1 caption tokens per image after reranking with `config`.
inline PredictionMap top1_predictions(std::span<const KBestList> lists, const ConceptMap& concepts,
                                      const RerankConfig& config) {
  PredictionMap out;
  static const std::vector<ConceptScore> kNone;
  for (const auto& list : lists) {
    auto it = concepts.find(list.image_id());
    const auto& detected = it == concepts.end() ? kNone : it->second;
    auto ranked = rerank::rerank(list, detected, config);
    out[list.image_id()] = ranked.front().candidate.tokens;
  }
  return out;
}

/// Sweeps theta over the grid, reranks every validation list, scores the
/// top-1 captions, and returns the best theta (smallest on ties) with the
/// full curve.
inline TuneResult tune_theta(std::span<const KBestList> val_kbest, const ConceptMap& val_concepts,
                             const GoldMap& val_gold, double grid_step,
                             const RerankConfig& base = {}, const MeteorParams& params = {}) {
  if (val_kbest.empty()) throw ValidationError("validation set is empty");
  params.validate();
  const std::vector<double> grid = theta_grid(grid_step);
  for (const auto& list : val_kbest) {
    if (!val_gold.count(list.image_id()))
      throw ValidationError("validation image '" + list.image_id() + "' has no references");
  }

  // Each (image, candidate) pair is scored once; theta only changes which
  // candidate lands on top.
  std::vector<std::vector<double>> candidate_scores;
  std::vector<std::vector<rerank::ConceptPattern>> patterns;
  static const std::vector<ConceptScore> kNone;
  for (const auto& list : val_kbest) {
    const auto& refs = val_gold.at(list.image_id()).references;
    std::vector<double> scores;
    for (const auto& c : list.candidates()) scores.push_back(meteor_lite(c.tokens, refs, params));
    candidate_scores.push_back(std::move(scores));
    auto it = val_concepts.find(list.image_id());
    patterns.push_back(rerank::compile(it == val_concepts.end() ? kNone : it->second, base.stem));
  }

  TuneResult result;
  bool first = true;
  for (double theta : grid) {
    RerankConfig config = base;
    config.theta = theta;
    std::map<std::string, double> per_image;
    for (std::size_t i = 0; i < val_kbest.size(); ++i) {
      const auto ranked = rerank::rerank(val_kbest[i], patterns[i], config);
      per_image[val_kbest[i].image_id()] = candidate_scores[i][ranked.front().original_rank];
    }
    const double score = detail::mean_over_gold(val_gold, per_image);
    result.curve.emplace_back(theta, score);
    if (first || score > result.best_score) {
      result.best_score = score;
      result.theta_star = theta;
      first = false;
    }
  }
  return result;
}

}  // namespace conceptrank::eval
