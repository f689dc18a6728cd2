#pragma once

// Reference implementations used only by tests. Each one takes the most
// direct route to the answer (full enumeration, exhaustive scan, explicit
// weight materialization) and shares no code path with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

struct Hit {
  std::string id;
  double distance;
};

/// Full scan: every distance computed, then sorted by (distance, id).
inline std::vector<Hit> knn(const std::vector<std::string>& ids,
                            const std::vector<std::vector<float>>& rows,
                            const std::vector<float>& query, std::size_t n) {
  std::vector<Hit> all;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double s = 0.0;
    for (std::size_t d = 0; d < query.size(); ++d) {
      const double diff = static_cast<double>(rows[r][d]) - static_cast<double>(query[d]);
      s += diff * diff;
    }
    all.push_back({ids[r], std::sqrt(s)});
  }
  std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  });
  all.resize(std::min(n, all.size()));
  return all;
}

/// Counts with an ordered map, ranks by (count desc, term asc).
inline std::vector<std::pair<std::string, double>> vote(
    const std::vector<std::string>& hit_ids,
    const std::map<std::string, std::set<std::string>>& tags, std::size_t m) {
  std::map<std::string, int> counts;
  for (const auto& id : hit_ids) {
    auto it = tags.find(id);
    if (it == tags.end()) continue;
    for (const auto& t : it->second) counts[t] += 1;
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i = 0; i < ranked.size() && i < m; ++i)
    out.emplace_back(ranked[i].first,
                     static_cast<double>(ranked[i].second) / static_cast<double>(hit_ids.size()));
  return out;
}

inline std::vector<std::string> path_to_root(const std::string& term,
                                             const std::map<std::string, std::string>& parent) {
  std::vector<std::string> path;
  std::set<std::string> visited;
  std::string cur = term;
  for (;;) {
    if (visited.count(cur)) return {};  // cycle
    visited.insert(cur);
    path.push_back(cur);
    auto it = parent.find(cur);
    if (it == parent.end()) break;
    cur = it->second;
  }
  return path;
}

/// Weights beta^i via pow, explicit normalization, explicit sum, unit scale.
inline std::vector<double> embed_chain(const std::vector<std::string>& chain,
                                       const std::map<std::string, std::vector<double>>& table,
                                       double beta) {
  std::vector<double> w;
  std::vector<const std::vector<double>*> vecs;
  for (std::size_t i = 0; i < chain.size(); ++i) {
    auto it = table.find(chain[i]);
    if (it == table.end()) continue;
    w.push_back(std::pow(beta, static_cast<double>(i)));
    vecs.push_back(&it->second);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  const std::size_t dim = vecs.front()->size();
  std::vector<double> out(dim, 0.0);
  for (std::size_t k = 0; k < w.size(); ++k)
    for (std::size_t d = 0; d < dim; ++d) out[d] += (w[k] / total) * (*vecs[k])[d];
  double n = 0.0;
  for (double x : out) n += x * x;
  n = std::sqrt(n);
  for (auto& x : out) x /= n;
  return out;
}

inline std::vector<double> embed_mixture(const std::vector<double>& probs,
                                         const std::vector<std::vector<double>>& vecs) {
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  std::vector<double> out(vecs.front().size(), 0.0);
  for (std::size_t k = 0; k < probs.size(); ++k)
    for (std::size_t d = 0; d < out.size(); ++d) out[d] += probs[k] / total * vecs[k][d];
  double n = 0.0;
  for (double x : out) n += x * x;
  n = std::sqrt(n);
  for (auto& x : out) x /= n;
  return out;
}

/// Naive scan: try every start position, compare element by element.
inline bool occurs(const std::vector<std::string>& sentence, const std::vector<std::string>& pat) {
  if (pat.empty()) return false;
  for (std::size_t s = 0; s + pat.size() <= sentence.size(); ++s) {
    bool ok = true;
    for (std::size_t k = 0; k < pat.size(); ++k) ok = ok && sentence[s + k] == pat[k];
    if (ok) return true;
  }
  return false;
}

struct AlignResult {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

/// Enumerates every one-to-one matching between equal tokens (including
/// partial ones), keeps the largest, and among those the fewest chunks.
inline AlignResult align(const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
  AlignResult best;
  bool have = false;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<bool> used(ref.size(), false);
  auto count_chunks = [&] {
    std::size_t chunks = 0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (k == 0 || pairs[k].first != pairs[k - 1].first + 1 ||
          pairs[k].second != pairs[k - 1].second + 1)
        ++chunks;
    }
    return chunks;
  };
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == hyp.size()) {
      AlignResult r{pairs.size(), count_chunks()};
      if (!have || r.matches > best.matches ||
          (r.matches == best.matches && r.chunks < best.chunks)) {
        best = r;
        have = true;
      }
      return;
    }
    self(self, i + 1);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || ref[j] != hyp[i]) continue;
      used[j] = true;
      pairs.emplace_back(i, j);
      self(self, i + 1);
      pairs.pop_back();
      used[j] = false;
    }
  };
  rec(rec, 0);
  return best;
}

/// Score straight from the formula: F = 10PR/(R+9P), Pen = 0.5 (c/m)^3.
inline double meteor(const std::vector<std::string>& hyp,
                     const std::vector<std::vector<std::string>>& refs) {
  double best = 0.0;
  for (const auto& ref : refs) {
    const AlignResult a = align(hyp, ref);
    if (a.matches == 0) continue;
    const double p = static_cast<double>(a.matches) / static_cast<double>(hyp.size());
    const double r = static_cast<double>(a.matches) / static_cast<double>(ref.size());
    const double f = 10.0 * p * r / (r + 9.0 * p);
    const double pen = 0.5 * std::pow(static_cast<double>(a.chunks) / a.matches, 3.0);
    best = std::max(best, f * (1.0 - pen));
  }
  return best;
}

/// Materializes every fused score and stable-sorts candidate indices.
inline std::vector<std::size_t> rerank_order(const std::vector<double>& conc,
                                             const std::vector<double>& sent_norm, double theta) {
  std::vector<double> fused(conc.size());
  for (std::size_t i = 0; i < conc.size(); ++i)
    fused[i] = theta * conc[i] + (1.0 - theta) * sent_norm[i];
  std::vector<std::size_t> order(conc.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return fused[a] > fused[b]; });
  return order;
}

}  // namespace oracle
