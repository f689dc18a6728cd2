#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "conceptrank/core.hpp"

namespace conceptrank::hierse {

using Vector = std::vector<double>;

class HierarchyError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Word vectors keyed by lowercase term.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return vectors_.size(); }

  void add(std::string_view term, Vector v) {
    if (term.empty()) throw ValidationError("embedding with empty term");
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_ || dim_ == 0)
      throw DimensionError("embedding for '" + std::string(term) + "' has dimension " +
                           std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    for (double x : v) {
      if (!std::isfinite(x))
        throw RangeError("embedding for '" + std::string(term) + "' has a non-finite entry");
    }
    vectors_.insert_or_assign(to_lower(term), std::move(v));
  }

  const Vector* find(std::string_view term) const {
    auto it = vectors_.find(to_lower(term));
    return it == vectors_.end() ? nullptr : &it->second;
  }

  bool contains(std::string_view term) const { return find(term) != nullptr; }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, Vector> vectors_;
};

/// Single-parent taxonomy. Roots have no entry.
class ConceptHierarchy {
 public:
  void add(std::string_view child, std::string_view parent) {
    std::string c = to_lower(child), p = to_lower(parent);
    if (c.empty() || p.empty()) throw ValidationError("hierarchy link with an empty term");
    auto [it, inserted] = parent_.emplace(c, p);
    if (!inserted && it->second != p)
      throw HierarchyError("term '" + c + "' has two parents: '" + it->second + "' and '" + p +
                           "'");
  }

  const std::string* parent(const std::string& term) const {
    auto it = parent_.find(term);
    return it == parent_.end() ? nullptr : &it->second;
  }

  std::size_t size() const noexcept { return parent_.size(); }

  /// Walks every chain once; throws HierarchyError on the first cycle.
  void validate() const;

 private:
  std::unordered_map<std::string, std::string> parent_;
};

inline std::vector<std::string> ancestor_chain(std::string_view term,
                                               const ConceptHierarchy& hierarchy) {
  std::vector<std::string> chain{to_lower(term)};
  std::unordered_set<std::string> seen{chain.front()};
  while (const std::string* p = hierarchy.parent(chain.back())) {
    if (!seen.insert(*p).second) throw HierarchyError("cycle in hierarchy at term '" + *p + "'");
    chain.push_back(*p);
  }
  return chain;
}

inline void ConceptHierarchy::validate() const {
  for (const auto& [child, _] : parent_) ancestor_chain(child, *this);
}

struct LabelDistribution {
  static constexpr std::size_t kMaxLabels = 10;

  std::string image_id;
  std::vector<std::pair<std::string, double>> labels;

  LabelDistribution() = default;

  /// Sorts by probability (descending, ties by term) and keeps the top ten.
  LabelDistribution(std::string id, std::vector<std::pair<std::string, double>> raw)
      : image_id(std::move(id)), labels(std::move(raw)) {
    for (auto& [term, p] : labels) {
      term = to_lower(term);
      if (term.empty()) throw ValidationError("empty label for image '" + image_id + "'");
      if (!std::isfinite(p) || p < 0.0)
        throw RangeError("label '" + term + "' of image '" + image_id +
                         "' has an invalid probability");
    }
    std::stable_sort(labels.begin(), labels.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (labels.size() > kMaxLabels) labels.resize(kMaxLabels);
  }
};

// ---------------------------------------------------------------------------
// Vector helpers
// ---------------------------------------------------------------------------

inline double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline Vector unit(Vector v, std::string_view what) {
  const double n = norm(v);
  if (!(n > 0.0) || !std::isfinite(n))
    throw CoverageError("embedding of '" + std::string(what) + "' has zero norm");
  for (auto& x : v) x /= n;
  return v;
}

/// Weighted sum of vectors. Weights are assumed to already be convex.
inline Vector combine(std::span<const double> weights, std::span<const Vector* const> vectors,
                      std::size_t dim) {
  Vector out(dim, 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const Vector& v = *vectors[i];
    for (std::size_t d = 0; d < dim; ++d) out[d] += weights[i] * v[d];
  }
  return out;
}

inline void renormalize(std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  for (auto& w : weights) w /= total;
}

// ---------------------------------------------------------------------------
// Concept and image embedding
// ---------------------------------------------------------------------------

struct ChainWeights {
  std::vector<std::string> terms;  // chain members present in the table
  std::vector<double> weights;     // convex, aligned with terms
};

/// Geometric decay beta^i over chain positions, restricted to embeddable
/// members and renormalized to sum to one.
inline ChainWeights chain_weights(std::string_view term, const ConceptHierarchy& hierarchy,
                                  const EmbeddingTable& table, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw RangeError("beta must lie in (0,1]");
  ChainWeights out;
  double w = 1.0;
  for (auto& member : ancestor_chain(term, hierarchy)) {
    if (table.contains(member)) {
      out.terms.push_back(std::move(member));
      out.weights.push_back(w);
    }
    w *= beta;
  }
  if (out.terms.empty())
    throw CoverageError("no member of the ancestor chain of '" + std::string(term) +
                        "' has an embedding");
  renormalize(out.weights);
  return out;
}

inline Vector embed_concept(std::string_view term, const ConceptHierarchy& hierarchy,
                            const EmbeddingTable& table, double beta) {
  const ChainWeights cw = chain_weights(term, hierarchy, table, beta);
  std::vector<const Vector*> vectors;
  vectors.reserve(cw.terms.size());
  for (const auto& t : cw.terms) vectors.push_back(table.find(t));
  return unit(combine(cw.weights, vectors, table.dim()), term);
}

/// Label probabilities restricted to labels that embed, renormalized.
struct LabelWeights {
  std::vector<std::string> terms;
  std::vector<double> weights;
  std::vector<Vector> vectors;
};

inline LabelWeights label_weights(const LabelDistribution& dist, const ConceptHierarchy& hierarchy,
                                  const EmbeddingTable& table, double beta) {
  LabelWeights out;
  double total = 0.0;
  for (const auto& [term, p] : dist.labels) {
    Vector v;
    try {
      v = embed_concept(term, hierarchy, table, beta);
    } catch (const CoverageError&) {
      continue;
    }
    out.terms.push_back(term);
    out.weights.push_back(p);
    out.vectors.push_back(std::move(v));
    total += p;
  }
  if (out.terms.empty())
    throw CoverageError("image '" + dist.image_id + "' has no embeddable label");
  if (!(total > 0.0))
    throw CoverageError("image '" + dist.image_id + "' has zero probability mass on embeddable labels");
  renormalize(out.weights);
  return out;
}

inline Vector embed_image(const LabelDistribution& dist, const ConceptHierarchy& hierarchy,
                          const EmbeddingTable& table, double beta) {
  const LabelWeights lw = label_weights(dist, hierarchy, table, beta);
  std::vector<const Vector*> vectors;
  for (const auto& v : lw.vectors) vectors.push_back(&v);
  return unit(combine(lw.weights, vectors, table.dim()), dist.image_id);
}

inline double relevance(std::span<const double> image_vec, std::span<const double> concept_vec) {
  if (image_vec.size() != concept_vec.size())
    throw DimensionError("relevance between vectors of dimension " +
                         std::to_string(image_vec.size()) + " and " +
                         std::to_string(concept_vec.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < image_vec.size(); ++i) s += image_vec[i] * concept_vec[i];
  return std::clamp(s, -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Detection
// ---------------------------------------------------------------------------

/// Scores a fixed vocabulary against images. Concept embeddings are computed
/// once at construction; vocabulary terms without any embeddable ancestor are
/// dropped and listed in dropped().
class Detector {
 public:
  Detector(const EmbeddingTable& table, const ConceptHierarchy& hierarchy,
           std::span<const std::string> vocabulary, double beta)
      : table_(&table), hierarchy_(&hierarchy), beta_(beta) {
    if (!(beta > 0.0 && beta <= 1.0)) throw RangeError("beta must lie in (0,1]");
    if (vocabulary.empty()) throw ValidationError("concept vocabulary is empty");
    std::unordered_set<std::string> seen;
    for (const auto& raw : vocabulary) {
      std::string term = to_lower(raw);
      if (!seen.insert(term).second) continue;
      try {
        vectors_.push_back(embed_concept(term, hierarchy, table, beta));
        terms_.push_back(std::move(term));
      } catch (const CoverageError&) {
        dropped_.push_back(std::move(term));
      }
    }
  }

  std::span<const std::string> terms() const noexcept { return terms_; }
  std::span<const std::string> dropped() const noexcept { return dropped_; }

  std::vector<ConceptScore> detect(const LabelDistribution& dist, std::size_t m) const {
    if (m < 1) throw RangeError("m must be at least 1");
    const Vector image = embed_image(dist, *hierarchy_, *table_, beta_);
    std::vector<ConceptScore> scores;
    scores.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const double cos = relevance(image, vectors_[i]);
      scores.emplace_back(terms_[i], std::clamp((cos + 1.0) / 2.0, 0.0, 1.0));
    }
    const std::size_t keep = std::min(m, scores.size());
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(keep),
                      scores.end(), concept_order);
    scores.resize(keep);
    return scores;
  }

 private:
  const EmbeddingTable* table_;
  const ConceptHierarchy* hierarchy_;
  double beta_;
  std::vector<std::string> terms_;
  std::vector<Vector> vectors_;
  std::vector<std::string> dropped_;
};

inline std::vector<ConceptScore> detect_concepts_hierse(const LabelDistribution& dist,
                                                        std::span<const std::string> vocabulary,
                                                        const ConceptHierarchy& hierarchy,
                                                        const EmbeddingTable& table, double beta,
                                                        std::size_t m) {
  return Detector(table, hierarchy, vocabulary, beta).detect(dist, m);
}

}  // namespace conceptrank::hierse
