#pragma once

// Readers and writers for every on-disk format the toolkit touches. Readers
// validate eagerly and report problems as ParseError with file and line.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "conceptrank/core.hpp"
#include "conceptrank/eval.hpp"
#include "conceptrank/hierse.hpp"
#include "conceptrank/neivote.hpp"
#include "conceptrank/rerank.hpp"

namespace conceptrank::io {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Low-level helpers
// ---------------------------------------------------------------------------

inline std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return in;
}

/// Calls fn(line, line_number) for every line; strips a trailing '\r'.
inline void for_each_line(const fs::path& path,
                          const std::function<void(std::string_view, std::size_t)>& fn) {
  auto in = open_input(path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fn(line, number);
  }
}

inline bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return detail::is_ascii_space(c); });
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && detail::is_ascii_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && detail::is_ascii_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && detail::is_ascii_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !detail::is_ascii_space(s[j])) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view text, T& value) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

template <class T>
T parse_number_or_throw(std::string_view text, const std::string& source, std::size_t line) {
  T value{};
  if (!parse_number(text, value))
    throw ParseError(source, line, "malformed number '" + std::string(text) + "'");
  return value;
}

/// Shortest decimal that parses back to the same float.
inline std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::string fixed(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

/// Writes to a sibling temporary file and renames on commit(). An uncommitted
/// writer removes its temporary, so failed commands leave no partial output.
class AtomicFile {
 public:
  explicit AtomicFile(fs::path target) : target_(std::move(target)) {
    tmp_ = target_;
    tmp_ += ".tmp";
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot write '" + tmp_.string() + "'");
  }
  AtomicFile(const AtomicFile&) = delete;
  AtomicFile& operator=(const AtomicFile&) = delete;

  ~AtomicFile() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      fs::remove(tmp_, ec);
    }
  }

  std::ostream& stream() { return out_; }

  void commit() {
    out_.flush();
    if (!out_) throw Error("write to '" + tmp_.string() + "' failed");
    out_.close();
    std::error_code ec;
    fs::rename(tmp_, target_, ec);
    if (ec) throw Error("cannot rename onto '" + target_.string() + "': " + ec.message());
    committed_ = true;
  }

 private:
  fs::path target_, tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

// ---------------------------------------------------------------------------
// JSON lines
// ---------------------------------------------------------------------------

/// Parses each nonblank line as a JSON object; schema errors raised inside
/// `fn` as nlohmann exceptions are rewrapped with the line number.
inline void for_each_record(const fs::path& path,
                            const std::function<void(const json&, std::size_t)>& fn) {
  const std::string source = path.string();
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (is_blank(line)) return;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(source, number, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) throw ParseError(source, number, "record is not a JSON object");
    try {
      fn(record, number);
    } catch (const json::exception& e) {
      throw ParseError(source, number, std::string("schema error: ") + e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(source, number, e.what());
    }
  });
}

inline std::string required_id(const json& record) {
  auto id = record.at("image_id").get<std::string>();
  if (id.empty()) throw ValidationError("empty image_id");
  return id;
}

template <class Map>
void insert_unique(Map& map, const std::string& id, typename Map::mapped_type value) {
  if (!map.emplace(id, std::move(value)).second)
    throw ValidationError("duplicate record for image '" + id + "'");
}

// ---------------------------------------------------------------------------
// Features and the persisted index
// ---------------------------------------------------------------------------

/// Splits "image_id<TAB>v1 v2 ... vD".
inline std::pair<std::string, std::vector<float>> parse_feature_line(std::string_view line,
                                                                      const std::string& source,
                                                                      std::size_t number) {
  const auto tab = line.find('\t');
  if (tab == std::string_view::npos)
    throw ParseError(source, number, "expected 'image_id<TAB>values'");
  std::string id(line.substr(0, tab));
  if (id.empty()) throw ParseError(source, number, "empty image_id");
  std::vector<float> values;
  for (auto field : split_ws(line.substr(tab + 1)))
    values.push_back(parse_number_or_throw<float>(field, source, number));
  if (values.empty()) throw ParseError(source, number, "record has no values");
  return {std::move(id), std::move(values)};
}

inline std::vector<ImageRecord> read_features(const fs::path& path) {
  std::vector<ImageRecord> records;
  const std::string source = path.string();
  std::unordered_map<std::string, std::size_t> seen;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (is_blank(line)) return;
    auto [id, values] = parse_feature_line(line, source, number);
    if (!records.empty() && values.size() != records.front().feature.dim())
      throw ParseError(source, number,
                       "record '" + id + "' has dimension " + std::to_string(values.size()) +
                           ", expected " + std::to_string(records.front().feature.dim()));
    if (!seen.emplace(id, number).second)
      throw ParseError(source, number, "duplicate image_id '" + id + "'");
    try {
      records.push_back({id, FeatureVector(std::move(values))});
    } catch (const ValidationError& e) {
      throw ParseError(source, number, e.what());
    }
  });
  if (records.empty()) throw ValidationError("'" + source + "' contains no feature records");
  return records;
}

inline void write_index(std::ostream& out, const neivote::NeighborIndex& index) {
  out << "NVIDX " << index.dim() << ' ' << index.size() << '\n';
  for (std::size_t r = 0; r < index.size(); ++r) {
    out << index.id(r) << '\t';
    const auto row = index.row(r);
    for (std::size_t d = 0; d < row.size(); ++d) {
      if (d) out << ' ';
      out << format_float(row[d]);
    }
    out << '\n';
  }
}

inline neivote::NeighborIndex read_index(const fs::path& path) {
  const std::string source = path.string();
  std::size_t dim = 0, count = 0;
  bool header = false;
  std::optional<neivote::NeighborIndex::Builder> builder;
  std::size_t rows = 0;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (!header) {
      const auto fields = split_ws(line);
      if (fields.size() != 3 || fields[0] != "NVIDX")
        throw ParseError(source, number, "expected header 'NVIDX <dim> <count>'");
      dim = parse_number_or_throw<std::size_t>(fields[1], source, number);
      count = parse_number_or_throw<std::size_t>(fields[2], source, number);
      if (dim == 0) throw ParseError(source, number, "index dimension must be positive");
      builder.emplace(dim);
      builder->reserve(count);
      header = true;
      return;
    }
    if (is_blank(line)) return;
    auto [id, values] = parse_feature_line(line, source, number);
    try {
      builder->add(id, values);
    } catch (const ValidationError& e) {
      throw ParseError(source, number, e.what());
    }
    ++rows;
  });
  if (!header) throw ValidationError("'" + source + "' is empty");
  if (rows != count)
    throw ValidationError("'" + source + "' declares " + std::to_string(count) +
                          " records but contains " + std::to_string(rows));
  return std::move(*builder).build();
}

// ---------------------------------------------------------------------------
// Tags, concepts, k-best lists, references, predictions
// ---------------------------------------------------------------------------

inline neivote::TagMap read_tags(const fs::path& path) {
  neivote::TagMap tags;
  for_each_record(path, [&](const json& r, std::size_t) {
    auto id = required_id(r);
    insert_unique(tags, id, TagDocument(id, r.at("tags").get<std::vector<std::string>>()));
  });
  return tags;
}

inline eval::ConceptMap read_concepts(const fs::path& path) {
  eval::ConceptMap concepts;
  for_each_record(path, [&](const json& r, std::size_t) {
    auto id = required_id(r);
    std::vector<ConceptScore> list;
    std::set<std::string> terms;
    for (const auto& c : r.at("concepts")) {
      ConceptScore score(to_lower(c.at("term").get<std::string>()), c.at("confidence").get<double>());
      if (!terms.insert(score.term).second)
        throw ValidationError("concept '" + score.term + "' listed twice for '" + id + "'");
      list.push_back(std::move(score));
    }
    insert_unique(concepts, id, std::move(list));
  });
  return concepts;
}

inline void write_concepts(std::ostream& out, const eval::ConceptMap& concepts) {
  for (const auto& [id, list] : concepts) {
    ordered_json record;
    record["image_id"] = id;
    record["concepts"] = ordered_json::array();
    for (const auto& c : list) {
      ordered_json item;
      item["term"] = c.term;
      item["confidence"] = c.confidence;
      record["concepts"].push_back(std::move(item));
    }
    out << record.dump() << '\n';
  }
}

/// k-best lists keyed and ordered by image_id.
inline std::map<std::string, KBestList> read_kbest(const fs::path& path) {
  std::map<std::string, KBestList> lists;
  for_each_record(path, [&](const json& r, std::size_t) {
    auto id = required_id(r);
    std::vector<CandidateSentence> candidates;
    for (const auto& c : r.at("candidates"))
      candidates.emplace_back(c.at("text").get<std::string>(), c.at("score").get<double>());
    insert_unique(lists, id, KBestList(id, std::move(candidates)));
  });
  if (lists.empty()) throw ValidationError("'" + path.string() + "' contains no k-best lists");
  return lists;
}

inline ordered_json kbest_record(const KBestList& list) {
  ordered_json record;
  record["image_id"] = list.image_id();
  record["candidates"] = ordered_json::array();
  for (const auto& c : list.candidates()) {
    ordered_json item;
    item["text"] = c.text;
    item["score"] = c.sent_score;
    record["candidates"].push_back(std::move(item));
  }
  return record;
}

inline void write_kbest(std::ostream& out, const std::map<std::string, KBestList>& lists) {
  for (const auto& [_, list] : lists) out << kbest_record(list).dump() << '\n';
}

inline eval::GoldMap read_references(const fs::path& path) {
  eval::GoldMap gold;
  for_each_record(path, [&](const json& r, std::size_t) {
    auto id = required_id(r);
    std::vector<Tokens> refs;
    for (const auto& text : r.at("references")) refs.push_back(tokenize(text.get<std::string>()));
    insert_unique(gold, id, eval::ReferenceSet(id, std::move(refs)));
  });
  if (gold.empty()) throw ValidationError("'" + path.string() + "' contains no references");
  return gold;
}

inline std::map<std::string, std::string> read_predictions(const fs::path& path) {
  std::map<std::string, std::string> captions;
  for_each_record(path, [&](const json& r, std::size_t) {
    auto id = required_id(r);
    insert_unique(captions, id, r.at("caption").get<std::string>());
  });
  return captions;
}

inline void write_prediction(std::ostream& out, const std::string& id, const std::string& caption) {
  ordered_json record;
  record["image_id"] = id;
  record["caption"] = caption;
  out << record.dump() << '\n';
}

inline ordered_json reranked_record(const std::string& id,
                                    const std::vector<rerank::ScoredCandidate>& ranked) {
  ordered_json record;
  record["image_id"] = id;
  record["candidates"] = ordered_json::array();
  for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
    const auto& sc = ranked[rank];
    ordered_json item;
    item["text"] = sc.candidate.text;
    item["score"] = sc.candidate.sent_score;
    item["old_rank"] = sc.original_rank;
    item["new_rank"] = rank;
    item["sent_score_norm"] = sc.sent_score_norm;
    item["conc_score"] = sc.conc_score;
    item["new_score"] = sc.new_score;
    item["matched"] = ordered_json::array();
    for (const auto& m : sc.matched) item["matched"].push_back(m.term);
    record["candidates"].push_back(std::move(item));
  }
  return record;
}

// ---------------------------------------------------------------------------
// HierSE inputs
// ---------------------------------------------------------------------------

inline std::vector<hierse::LabelDistribution> read_labels(const fs::path& path) {
  std::vector<hierse::LabelDistribution> out;
  std::set<std::string> seen;
  for_each_record(path, [&](const json& r, std::size_t) {
    auto id = required_id(r);
    if (!seen.insert(id).second) throw ValidationError("duplicate record for image '" + id + "'");
    std::vector<std::pair<std::string, double>> labels;
    for (const auto& l : r.at("labels"))
      labels.emplace_back(l.at("term").get<std::string>(), l.at("prob").get<double>());
    out.emplace_back(id, std::move(labels));
  });
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  return out;
}

/// Text word2vec layout: "<vocab_size> <dim>" then "term v1 ... vD".
inline hierse::EmbeddingTable read_embeddings(const fs::path& path) {
  const std::string source = path.string();
  std::size_t declared = 0, dim = 0, rows = 0;
  bool header = false;
  hierse::EmbeddingTable table;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    const auto fields = split_ws(line);
    if (!header) {
      if (fields.size() != 2) throw ParseError(source, number, "expected '<vocab_size> <dim>'");
      declared = parse_number_or_throw<std::size_t>(fields[0], source, number);
      dim = parse_number_or_throw<std::size_t>(fields[1], source, number);
      if (dim == 0) throw ParseError(source, number, "embedding dimension must be positive");
      table = hierse::EmbeddingTable(dim);
      header = true;
      return;
    }
    if (fields.empty()) return;
    if (fields.size() != dim + 1)
      throw ParseError(source, number,
                       "expected a term and " + std::to_string(dim) + " values, got " +
                           std::to_string(fields.size()) + " fields");
    hierse::Vector v;
    v.reserve(dim);
    for (std::size_t i = 1; i < fields.size(); ++i)
      v.push_back(parse_number_or_throw<double>(fields[i], source, number));
    try {
      table.add(fields[0], std::move(v));
    } catch (const ValidationError& e) {
      throw ParseError(source, number, e.what());
    }
    ++rows;
  });
  if (!header) throw ValidationError("'" + source + "' is empty");
  if (rows != declared)
    throw ValidationError("'" + source + "' declares " + std::to_string(declared) +
                          " vectors but contains " + std::to_string(rows));
  return table;
}

/// "child<TAB>parent" per line. The loaded hierarchy is checked for cycles.
inline hierse::ConceptHierarchy read_hierarchy(const fs::path& path) {
  const std::string source = path.string();
  hierse::ConceptHierarchy hierarchy;
  for_each_line(path, [&](std::string_view line, std::size_t number) {
    if (is_blank(line)) return;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw ParseError(source, number, "expected 'child<TAB>parent'");
    try {
      hierarchy.add(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
    } catch (const ValidationError& e) {
      throw ParseError(source, number, e.what());
    }
  });
  hierarchy.validate();
  return hierarchy;
}

/// One entry per nonblank line, trimmed. Used for vocabularies and id lists.
inline std::vector<std::string> read_list(const fs::path& path, bool lowercase = false) {
  std::vector<std::string> out;
  for_each_line(path, [&](std::string_view line, std::size_t) {
    const auto t = trim(line);
    if (!t.empty()) out.push_back(lowercase ? to_lower(t) : std::string(t));
  });
  return out;
}

inline void write_list(std::ostream& out, const std::vector<std::string>& items) {
  for (const auto& item : items) out << item << '\n';
}

}  // namespace conceptrank::io
