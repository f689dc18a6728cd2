#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace conceptrank {

// ---------------------------------------------------------------------------
// Errors
//
// ValidationError covers anything wrong with caller-supplied data (the CLI
// maps it to exit code 1). Everything else derived from Error is a runtime
// failure (exit code 2).
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class RangeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : ValidationError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class CoverageError : public Error {
 public:
  using Error::Error;
};

using Tokens = std::vector<std::string>;

// ---------------------------------------------------------------------------
// Text handling
// ---------------------------------------------------------------------------

namespace detail {

constexpr bool is_ascii_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

constexpr bool is_ascii_punct(char c) noexcept {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') ||
         (c >= '{' && c <= '~');
}

constexpr char ascii_lower(char c) noexcept {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace detail

inline std::string to_lower(std::string_view text) {
  std::string out(text);
  for (auto& c : out) c = detail::ascii_lower(c);
  return out;
}

/// Lowercases (ASCII only), splits on whitespace, and strips punctuation from
/// both ends of every token. Punctuation inside a token is kept, so "sky-blue"
/// and "dog's" survive intact. Non-ASCII bytes pass through untouched.
inline Tokens tokenize(std::string_view text) {
  Tokens tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && detail::is_ascii_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !detail::is_ascii_space(text[j])) ++j;
    std::size_t b = i, e = j;
    while (b < e && detail::is_ascii_punct(text[b])) ++b;
    while (e > b && detail::is_ascii_punct(text[e - 1])) --e;
    if (e > b) tokens.push_back(to_lower(text.substr(b, e - b)));
    i = j;
  }
  return tokens;
}

inline std::string join(const Tokens& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

/// Light suffix stripper used by the opt-in stem stages. Applies at most one
/// rule and never leaves a stem shorter than three characters.
inline std::string stem(std::string_view word) {
  using detail::ends_with;
  std::string w(word);
  auto strip = [&](std::size_t n, std::string_view repl = {}) {
    if (w.size() - n + repl.size() < 3) return false;
    w.resize(w.size() - n);
    w += repl;
    return true;
  };
  if (ends_with(w, "sses")) {
    strip(2);
  } else if (ends_with(w, "ies")) {
    strip(3, "y");
  } else if (ends_with(w, "ing") || ends_with(w, "ed")) {
    if (strip(ends_with(w, "ing") ? 3 : 2)) {
      // running -> run, stopped -> stop
      const std::size_t n = w.size();
      const char c = w[n - 1];
      if (n >= 4 && c == w[n - 2] && c != 'l' && c != 's' && c != 'z' &&
          std::string_view("aeiou").find(c) == std::string_view::npos)
        w.pop_back();
    }
  } else if (ends_with(w, "ly")) {
    strip(2);
  } else if (ends_with(w, "s") && !ends_with(w, "ss") && !ends_with(w, "us") &&
             !ends_with(w, "is")) {
    strip(1);
  }
  return w;
}

inline Tokens stem_all(const Tokens& tokens) {
  Tokens out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(stem(t));
  return out;
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Dense image feature. Storage is single precision; all distance arithmetic
/// downstream is carried out in double.
class FeatureVector {
 public:
  FeatureVector() = default;

  explicit FeatureVector(std::vector<float> values) : values_(std::move(values)) {
    if (values_.empty()) throw DimensionError("feature vector must have positive dimension");
    for (std::size_t i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_[i]))
        throw RangeError("feature component " + std::to_string(i) + " is not finite");
    }
  }

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const float> values() const noexcept { return values_; }
  float operator[](std::size_t i) const { return values_[i]; }

 private:
  std::vector<float> values_;
};

struct ImageRecord {
  std::string image_id;
  FeatureVector feature;
};

class TagDocument {
 public:
  TagDocument() = default;

  template <class Range>
  TagDocument(std::string image_id, const Range& tags) : image_id_(std::move(image_id)) {
    for (const auto& t : tags) {
      std::string term = to_lower(t);
      if (term.empty()) throw ValidationError("empty tag for image '" + image_id_ + "'");
      tags_.insert(std::move(term));
    }
  }

  TagDocument(std::string image_id, std::initializer_list<std::string_view> tags)
      : TagDocument(std::move(image_id), std::vector<std::string_view>(tags)) {}

  const std::string& image_id() const noexcept { return image_id_; }
  const std::set<std::string>& tags() const noexcept { return tags_; }
  bool contains(const std::string& term) const { return tags_.count(term) != 0; }

 private:
  std::string image_id_;
  std::set<std::string> tags_;
};

struct CandidateSentence {
  std::string text;
  Tokens tokens;
  double sent_score = 0.0;

  CandidateSentence() = default;
  CandidateSentence(std::string t, double score)
      : text(std::move(t)), tokens(tokenize(text)), sent_score(score) {}
};

/// A generator's k-best list for one image. Candidates must already be in
/// descending confidence order; the constructor rejects anything else rather
/// than reordering.
class KBestList {
 public:
  KBestList() = default;

  KBestList(std::string image_id, std::vector<CandidateSentence> candidates)
      : image_id_(std::move(image_id)), candidates_(std::move(candidates)) {
    if (image_id_.empty()) throw ValidationError("k-best list has an empty image_id");
    if (candidates_.empty())
      throw ValidationError("k-best list for '" + image_id_ + "' has no candidates");
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
      if (!std::isfinite(candidates_[i].sent_score))
        throw RangeError("candidate " + std::to_string(i) + " of '" + image_id_ +
                         "' has a non-finite score");
      if (i > 0 && candidates_[i].sent_score > candidates_[i - 1].sent_score)
        throw ValidationError("candidates of '" + image_id_ +
                              "' are not sorted by descending score at index " +
                              std::to_string(i));
    }
  }

  const std::string& image_id() const noexcept { return image_id_; }
  const std::vector<CandidateSentence>& candidates() const noexcept { return candidates_; }
  std::size_t k() const noexcept { return candidates_.size(); }

 private:
  std::string image_id_;
  std::vector<CandidateSentence> candidates_;
};

struct ConceptScore {
  std::string term;
  double confidence = 0.0;

  ConceptScore() = default;
  ConceptScore(std::string t, double c) : term(std::move(t)), confidence(c) {
    if (term.empty()) throw ValidationError("concept term must be nonempty");
    if (!(confidence >= 0.0 && confidence <= 1.0))
      throw RangeError("confidence of '" + term + "' outside [0,1]");
  }

  friend bool operator==(const ConceptScore&, const ConceptScore&) = default;
};

/// Descending confidence, ascending term on ties.
inline bool concept_order(const ConceptScore& a, const ConceptScore& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return a.term < b.term;
}

enum class Normalization { min_max, none };

inline std::string_view to_string(Normalization n) {
  return n == Normalization::min_max ? "min_max" : "none";
}

struct RerankConfig {
  double theta = 0.0;
  std::size_t m = 10;
  std::size_t n_neighbors = 100;
  Normalization normalization = Normalization::min_max;
  bool stem = false;

  void validate() const {
    if (!(theta >= 0.0 && theta <= 1.0)) throw RangeError("theta must lie in [0,1]");
    if (m < 1) throw RangeError("m must be at least 1");
    if (n_neighbors < 1) throw RangeError("neighbor count must be at least 1");
  }
};

// ---------------------------------------------------------------------------
// Score normalization
// ---------------------------------------------------------------------------

inline std::vector<double> normalize_sentence_scores(std::span<const double> scores,
                                                     Normalization mode) {
  if (scores.empty()) throw RangeError("cannot normalize an empty score list");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i]))
      throw RangeError("score at index " + std::to_string(i) + " is not finite");
  }
  std::vector<double> out(scores.begin(), scores.end());
  if (mode == Normalization::none) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (out[i] < 0.0 || out[i] > 1.0)
        throw RangeError("score at index " + std::to_string(i) +
                         " outside [0,1] with normalization 'none'");
    }
    return out;
  }
  auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double min = *lo, max = *hi;
  if (max == min) {
    std::fill(out.begin(), out.end(), 1.0);
    return out;
  }
  const double range = max - min;
  for (auto& s : out) s = std::clamp((s - min) / range, 0.0, 1.0);
  return out;
}

}  // namespace conceptrank
