#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "conceptrank/core.hpp"

namespace conceptrank::neivote {

struct NeighborHit {
  std::string image_id;
  double distance = 0.0;

  friend bool operator==(const NeighborHit&, const NeighborHit&) = default;
};

namespace detail {

// Sequential double-precision sum of squared differences. Final ranking and
// reported distances always come from this routine.
inline double squared_l2(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc;
}

inline double squared_norm(std::span<const float> a) {
  double acc = 0.0;
  for (float v : a) acc += static_cast<double>(v) * static_cast<double>(v);
  return acc;
}

inline double dot(const float* a, const float* b, std::size_t dim) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= dim; i += 4) {
    s0 += static_cast<double>(a[i]) * b[i];
    s1 += static_cast<double>(a[i + 1]) * b[i + 1];
    s2 += static_cast<double>(a[i + 2]) * b[i + 2];
    s3 += static_cast<double>(a[i + 3]) * b[i + 3];
  }
  for (; i < dim; ++i) s0 += static_cast<double>(a[i]) * b[i];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

/// Exact Euclidean k-NN over an immutable, row-major feature matrix.
///
/// Queries scan in blocks using the expansion |x-q|^2 = |x|^2 - 2x.q + |q|^2
/// with precomputed row norms. Each expanded value carries a rounding-error
/// bound; every row whose lower bound can still reach the top n is rescored
/// with the direct difference sum, so results are identical to an exhaustive
/// scan, including tie order (distance, then image_id).
class NeighborIndex {
 public:
  class Builder {
   public:
    explicit Builder(std::size_t dim = 0) : dim_(dim) {}

    Builder& reserve(std::size_t count) {
      ids_.reserve(count);
      if (dim_) data_.reserve(count * dim_);
      return *this;
    }

    Builder& add(const std::string& image_id, std::span<const float> values) {
      if (image_id.empty()) throw ValidationError("record with empty image_id");
      if (dim_ == 0) {
        if (values.empty()) throw DimensionError("record '" + image_id + "' has dimension 0");
        dim_ = values.size();
      }
      if (values.size() != dim_)
        throw DimensionError("record '" + image_id + "' has dimension " +
                             std::to_string(values.size()) + ", expected " +
                             std::to_string(dim_));
      for (float v : values) {
        if (!std::isfinite(v))
          throw RangeError("record '" + image_id + "' has a non-finite component");
      }
      if (!positions_.emplace(image_id, ids_.size()).second)
        throw ValidationError("duplicate image_id '" + image_id + "'");
      ids_.push_back(image_id);
      data_.insert(data_.end(), values.begin(), values.end());
      return *this;
    }

    Builder& add(const ImageRecord& record) { return add(record.image_id, record.feature.values()); }

    NeighborIndex build() && {
      if (ids_.empty()) throw ValidationError("cannot build an index from zero records");
      return NeighborIndex(dim_, std::move(ids_), std::move(data_), std::move(positions_));
    }

   private:
    std::size_t dim_;
    std::vector<std::string> ids_;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> positions_;
  };

  std::size_t size() const noexcept { return ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::string& id(std::size_t row) const { return ids_[row]; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * dim_, dim_}; }
  double squared_norm(std::size_t r) const { return norms_[r]; }

  std::size_t position(const std::string& image_id) const {
    auto it = positions_.find(image_id);
    if (it == positions_.end()) throw ValidationError("unknown image_id '" + image_id + "'");
    return it->second;
  }

  std::vector<NeighborHit> query(std::span<const float> q, std::size_t n) const;

  /// Answers a batch of queries; rows are distributed over worker threads.
  /// Output order follows input order regardless of thread count.
  std::vector<std::vector<NeighborHit>> query_batch(std::span<const FeatureVector> queries,
                                                    std::size_t n,
                                                    unsigned threads = 0) const;

 private:
  NeighborIndex(std::size_t dim, std::vector<std::string> ids, std::vector<float> data,
                std::unordered_map<std::string, std::size_t> positions)
      : dim_(dim), ids_(std::move(ids)), data_(std::move(data)), positions_(std::move(positions)) {
    norms_.resize(ids_.size());
    for (std::size_t r = 0; r < ids_.size(); ++r) norms_[r] = detail::squared_norm(row(r));
  }

  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> positions_;
  std::vector<double> norms_;
};

inline NeighborIndex build_index(std::span<const ImageRecord> records) {
  if (records.empty()) throw ValidationError("cannot build an index from zero records");
  NeighborIndex::Builder builder(records.front().feature.dim());
  builder.reserve(records.size());
  for (const auto& r : records) builder.add(r);
  return std::move(builder).build();
}

inline std::vector<NeighborHit> NeighborIndex::query(std::span<const float> q,
                                                     std::size_t n) const {
  if (q.size() != dim_)
    throw DimensionError("query has dimension " + std::to_string(q.size()) + ", index has " +
                         std::to_string(dim_));
  if (n < 1) throw RangeError("neighbor count must be at least 1");
  for (float v : q) {
    if (!std::isfinite(v)) throw RangeError("query has a non-finite component");
  }
  n = std::min(n, size());

  constexpr std::size_t kBlock = 256;
  // Covers the rounding error of the expanded form plus the direct sum, with a
  // factor-of-two margin.
  const double eps = std::numeric_limits<double>::epsilon();
  const double err_scale = 4.0 * static_cast<double>(dim_ + 2) * eps;
  const double qnorm = detail::squared_norm(q);
  const double qlen = std::sqrt(qnorm);

  // Max-heap over upper bounds: its top is a valid upper bound on the n-th
  // smallest true distance once it holds n entries.
  std::priority_queue<double> uppers;
  struct Candidate {
    std::size_t row;
    double lower;
  };
  std::vector<Candidate> candidates;
  double threshold = std::numeric_limits<double>::infinity();

  double block_dots[kBlock];
  for (std::size_t start = 0; start < size(); start += kBlock) {
    const std::size_t end = std::min(start + kBlock, size());
    for (std::size_t r = start; r < end; ++r)
      block_dots[r - start] = detail::dot(data_.data() + r * dim_, q.data(), dim_);
    for (std::size_t r = start; r < end; ++r) {
      const double xlen = std::sqrt(norms_[r]);
      const double approx = norms_[r] - 2.0 * block_dots[r - start] + qnorm;
      const double bound = err_scale * (xlen + qlen) * (xlen + qlen) +
                           std::numeric_limits<double>::denorm_min();
      const double lower = approx - bound, upper = approx + bound;
      if (uppers.size() < n) {
        uppers.push(upper);
      } else if (upper < uppers.top()) {
        uppers.pop();
        uppers.push(upper);
      }
      if (uppers.size() == n) threshold = uppers.top();
      if (lower <= threshold * (1.0 + 16.0 * eps)) candidates.push_back({r, lower});
    }
  }

  // Ranking is by the reported distance sqrt(d2). Two squared distances a few
  // ulps apart can share a root, so the cut keeps a small relative margin.
  const double cut = threshold * (1.0 + 16.0 * eps) + std::numeric_limits<double>::denorm_min();
  struct Scored {
    double distance;
    std::size_t row;
  };
  std::vector<Scored> exact;
  exact.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.lower <= cut) exact.push_back({std::sqrt(detail::squared_l2(row(c.row), q)), c.row});
  }
  auto less = [this](const Scored& a, const Scored& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return ids_[a.row] < ids_[b.row];
  };
  std::partial_sort(exact.begin(), exact.begin() + static_cast<std::ptrdiff_t>(n), exact.end(),
                    less);

  std::vector<NeighborHit> hits;
  hits.reserve(n);
  for (std::size_t i = 0; i < n; ++i) hits.push_back({ids_[exact[i].row], exact[i].distance});
  return hits;
}

inline std::vector<std::vector<NeighborHit>> NeighborIndex::query_batch(
    std::span<const FeatureVector> queries, std::size_t n, unsigned threads) const {
  std::vector<std::vector<NeighborHit>> out(queries.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, queries.size()));
  if (threads <= 1) {
    for (std::size_t i = 0; i < queries.size(); ++i) out[i] = query(queries[i].values(), n);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> workers;
    for (unsigned t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < queries.size(); i += threads)
            out[i] = query(queries[i].values(), n);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

inline std::vector<NeighborHit> query_neighbors(const NeighborIndex& index,
                                                const FeatureVector& query, std::size_t n) {
  return index.query(query.values(), n);
}

// ---------------------------------------------------------------------------
// Tag voting
// ---------------------------------------------------------------------------

using TagMap = std::unordered_map<std::string, TagDocument>;

struct VoteStats {
  std::size_t missing_tag_documents = 0;
};

/// Confidence of a term is the fraction of hits whose tag set contains it.
/// Hits without a tag document still count in the denominator.
inline std::vector<ConceptScore> vote_concepts(std::span<const NeighborHit> hits,
                                               const TagMap& tags, std::size_t m,
                                               VoteStats* stats = nullptr) {
  if (m < 1) throw RangeError("m must be at least 1");
  if (hits.empty()) return {};
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& hit : hits) {
    auto it = tags.find(hit.image_id);
    if (it == tags.end()) {
      if (stats) ++stats->missing_tag_documents;
      continue;
    }
    for (const auto& term : it->second.tags()) ++counts[term];
  }
  const double denom = static_cast<double>(hits.size());
  std::vector<ConceptScore> scores;
  scores.reserve(counts.size());
  for (const auto& [term, count] : counts)
    scores.emplace_back(term, static_cast<double>(count) / denom);
  const std::size_t keep = std::min(m, scores.size());
  std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(keep),
                    scores.end(), concept_order);
  scores.resize(keep);
  return scores;
}

}  // namespace conceptrank::neivote
