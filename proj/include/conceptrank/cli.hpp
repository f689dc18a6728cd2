#pragma once

// Command-line front end. run() is the whole program; tools/conceptrank.cpp
// only forwards argv. Exit codes: 0 success, 1 invalid input or usage,
// 2 runtime failure.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "conceptrank/core.hpp"
#include "conceptrank/eval.hpp"
#include "conceptrank/hierse.hpp"
#include "conceptrank/io.hpp"
#include "conceptrank/neivote.hpp"
#include "conceptrank/rerank.hpp"

namespace conceptrank::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

inline constexpr const char* kMetricNote =
    "# metric: meteor-lite (unigram exact match, optional suffix-stem stage, "
    "F=PR/(alpha*P+(1-alpha)*R), penalty=gamma*(chunks/matches)^beta); "
    "scores are not comparable to official METEOR";

struct IndexOptions {
  fs::path features, out;
};

struct DetectOptions {
  std::string mode;
  std::size_t m = 10;
  fs::path out;
  // neivote
  fs::path index, queries, tags;
  std::size_t neighbors = 100;
  // hierse
  fs::path labels, vocab, embeddings, hierarchy;
  double beta = 0.5;
};

struct RerankOptions {
  fs::path kbest, concepts, out, kbest_out;
  double theta = 0.0;
  bool top1_only = false;
  bool stem = false;
  Normalization normalization = Normalization::min_max;
};

struct TuneOptions {
  fs::path kbest, concepts, refs, ids, out;
  double grid_step = 0.05;
  bool stem = false;
  Normalization normalization = Normalization::min_max;
};

struct EvalOptions {
  fs::path predictions, refs, ids, out;
  bool stem = false;
};

struct SplitOptions {
  fs::path ids, out_dir;
  std::vector<std::size_t> sizes{1600, 200, 200};
  std::uint64_t seed = 0;
};

namespace detail {

inline void require(const fs::path& p, const char* flag) {
  if (p.empty()) throw ValidationError(std::string("missing required option ") + flag);
}

inline void warn_section(std::ostream& err, const std::vector<std::string>& warnings) {
  if (warnings.empty()) return;
  err << "[warnings]\ncount " << warnings.size() << '\n';
  for (const auto& w : warnings) err << w << '\n';
}

inline std::string params_block(const eval::MeteorParams& p) {
  std::string s = "[params]\n";
  s += "alpha " + io::fixed(p.alpha) + "\n";
  s += "beta " + io::fixed(p.beta) + "\n";
  s += "gamma " + io::fixed(p.gamma) + "\n";
  s += std::string("stages ") + (p.stem ? "exact+stem" : "exact") + "\n";
  return s;
}

template <class Map>
Map restrict_to(const Map& map, const std::set<std::string>& ids) {
  Map out;
  for (const auto& [id, v] : map) {
    if (ids.count(id)) out.emplace(id, v);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void cmd_index(const IndexOptions& opt, std::ostream& out) {
  detail::require(opt.features, "--features");
  detail::require(opt.out, "--out");
  const auto start = std::chrono::steady_clock::now();
  const auto records = io::read_features(opt.features);
  const auto index = neivote::build_index(records);
  io::AtomicFile file(opt.out);
  io::write_index(file.stream(), index);
  file.commit();
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  out << "records " << index.size() << "\ndim " << index.dim() << "\nwall_seconds "
      << io::fixed(elapsed.count(), 3) << '\n';
}

inline void cmd_detect(const DetectOptions& opt, std::ostream& out, std::ostream& err) {
  detail::require(opt.out, "--out");
  if (opt.m < 1) throw RangeError("--m must be at least 1");
  eval::ConceptMap concepts;
  std::vector<std::string> warnings;

  if (opt.mode == "neivote") {
    detail::require(opt.index, "--index");
    detail::require(opt.queries, "--queries");
    detail::require(opt.tags, "--tags");
    if (opt.neighbors < 1) throw RangeError("--neighbors must be at least 1");
    const auto index = io::read_index(opt.index);
    const auto queries = io::read_features(opt.queries);
    const auto tags = io::read_tags(opt.tags);
    if (queries.front().feature.dim() != index.dim())
      throw DimensionError("query features have dimension " +
                           std::to_string(queries.front().feature.dim()) + ", index has " +
                           std::to_string(index.dim()));
    std::vector<FeatureVector> vectors;
    vectors.reserve(queries.size());
    for (const auto& q : queries) vectors.push_back(q.feature);
    const auto hits = index.query_batch(vectors, opt.neighbors);
    neivote::VoteStats stats;
    for (std::size_t i = 0; i < queries.size(); ++i)
      concepts[queries[i].image_id] = neivote::vote_concepts(hits[i], tags, opt.m, &stats);
    if (stats.missing_tag_documents)
      warnings.push_back("neighbors without tag documents: " +
                         std::to_string(stats.missing_tag_documents));
  } else if (opt.mode == "hierse") {
    detail::require(opt.labels, "--labels");
    detail::require(opt.vocab, "--vocab");
    detail::require(opt.embeddings, "--embeddings");
    detail::require(opt.hierarchy, "--hierarchy");
    if (!(opt.beta > 0.0 && opt.beta <= 1.0)) throw RangeError("--beta must lie in (0,1]");
    const auto labels = io::read_labels(opt.labels);
    const auto vocabulary = io::read_list(opt.vocab, true);
    const auto table = io::read_embeddings(opt.embeddings);
    const auto hierarchy = io::read_hierarchy(opt.hierarchy);
    const hierse::Detector detector(table, hierarchy, vocabulary, opt.beta);
    if (!detector.dropped().empty()) {
      warnings.push_back("vocabulary concepts without embedding coverage: " +
                         std::to_string(detector.dropped().size()));
      for (const auto& t : detector.dropped()) warnings.push_back("  dropped concept " + t);
    }
    if (detector.terms().empty())
      throw CoverageError("no vocabulary concept has embedding coverage");
    std::size_t skipped = 0;
    std::vector<std::string> skipped_ids;
    for (const auto& dist : labels) {
      try {
        concepts[dist.image_id] = detector.detect(dist, opt.m);
      } catch (const CoverageError&) {
        ++skipped;
        skipped_ids.push_back(dist.image_id);
      }
    }
    if (skipped) {
      warnings.push_back("images skipped for zero label coverage: " + std::to_string(skipped));
      for (const auto& id : skipped_ids) warnings.push_back("  skipped image " + id);
    }
  } else {
    throw ValidationError("--mode must be 'neivote' or 'hierse'");
  }

  io::AtomicFile file(opt.out);
  io::write_concepts(file.stream(), concepts);
  file.commit();
  out << "images " << concepts.size() << '\n';
  detail::warn_section(err, warnings);
}

inline void cmd_rerank(const RerankOptions& opt, std::ostream& out, std::ostream& err) {
  detail::require(opt.kbest, "--kbest");
  detail::require(opt.concepts, "--concepts");
  detail::require(opt.out, "--out");
  RerankConfig config;
  config.theta = opt.theta;
  config.normalization = opt.normalization;
  config.stem = opt.stem;
  config.validate();
  const auto lists = io::read_kbest(opt.kbest);
  const auto concepts = io::read_concepts(opt.concepts);

  std::vector<std::string> warnings;
  std::map<std::string, std::vector<rerank::ScoredCandidate>> ranked;
  static const std::vector<ConceptScore> kNone;
  for (const auto& [id, list] : lists) {
    auto it = concepts.find(id);
    if (it == concepts.end()) warnings.push_back("no concepts for image " + id);
    ranked[id] = rerank::rerank(list, it == concepts.end() ? kNone : it->second, config);
  }

  io::AtomicFile file(opt.out);
  std::optional<io::AtomicFile> kbest_file;
  if (!opt.kbest_out.empty()) kbest_file.emplace(opt.kbest_out);
  std::size_t changed = 0;
  for (const auto& [id, r] : ranked) {
    if (r.front().original_rank != 0) ++changed;
    if (opt.top1_only) {
      io::write_prediction(file.stream(), id, r.front().candidate.text);
    } else {
      file.stream() << io::reranked_record(id, r).dump() << '\n';
    }
    if (kbest_file) {
      // Same schema as the input; scores travel with their sentences.
      io::ordered_json record;
      record["image_id"] = id;
      record["candidates"] = io::ordered_json::array();
      for (const auto& sc : r) {
        io::ordered_json item;
        item["text"] = sc.candidate.text;
        item["score"] = sc.candidate.sent_score;
        record["candidates"].push_back(std::move(item));
      }
      kbest_file->stream() << record.dump() << '\n';
    }
  }
  file.commit();
  if (kbest_file) kbest_file->commit();
  out << "images " << ranked.size() << "\ntop1_changed " << changed << '\n';
  detail::warn_section(err, warnings);
}

inline eval::TuneResult cmd_tune(const TuneOptions& opt, std::ostream& out, std::ostream& err) {
  detail::require(opt.kbest, "--kbest");
  detail::require(opt.concepts, "--concepts");
  detail::require(opt.refs, "--refs");
  detail::require(opt.out, "--out");
  eval::theta_grid(opt.grid_step);
  auto lists = io::read_kbest(opt.kbest);
  auto concepts = io::read_concepts(opt.concepts);
  auto gold = io::read_references(opt.refs);
  if (!opt.ids.empty()) {
    const auto id_list = io::read_list(opt.ids);
    const std::set<std::string> ids(id_list.begin(), id_list.end());
    lists = detail::restrict_to(lists, ids);
    concepts = detail::restrict_to(concepts, ids);
    gold = detail::restrict_to(gold, ids);
  }
  std::vector<KBestList> val;
  std::vector<std::string> warnings;
  std::set<std::string> val_ids;
  for (const auto& [id, list] : lists) {
    if (!concepts.count(id)) warnings.push_back("no concepts for image " + id);
    val.push_back(list);
    val_ids.insert(id);
  }
  gold = detail::restrict_to(gold, val_ids);
  RerankConfig base;
  base.normalization = opt.normalization;
  base.stem = opt.stem;
  eval::MeteorParams params;
  params.stem = opt.stem;
  const auto result = eval::tune_theta(val, concepts, gold, opt.grid_step, base, params);

  io::AtomicFile file(opt.out);
  auto& s = file.stream();
  s << "# conceptrank tune report\n" << kMetricNote << '\n';
  s << detail::params_block(params);
  s << "grid_step " << io::fixed(opt.grid_step) << '\n';
  s << "normalization " << to_string(opt.normalization) << '\n';
  s << "images " << val.size() << '\n';
  s << "[curve]\n";
  for (const auto& [theta, score] : result.curve)
    s << io::fixed(theta) << ' ' << io::fixed(score, 8) << '\n';
  s << "[result]\ntheta_star " << io::fixed(result.theta_star) << "\nscore "
    << io::fixed(result.best_score, 8) << '\n';
  file.commit();
  out << "theta_star " << io::fixed(result.theta_star) << '\n';
  detail::warn_section(err, warnings);
  return result;
}

inline eval::CorpusReport cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  detail::require(opt.predictions, "--predictions");
  detail::require(opt.refs, "--refs");
  detail::require(opt.out, "--out");
  const auto captions = io::read_predictions(opt.predictions);
  auto gold = io::read_references(opt.refs);
  eval::PredictionMap predictions;
  for (const auto& [id, text] : captions) predictions[id] = tokenize(text);
  if (!opt.ids.empty()) {
    const auto id_list = io::read_list(opt.ids);
    const std::set<std::string> ids(id_list.begin(), id_list.end());
    gold = detail::restrict_to(gold, ids);
    predictions = detail::restrict_to(predictions, ids);
  }
  eval::MeteorParams params;
  params.stem = opt.stem;
  const auto report = eval::corpus_report(predictions, gold, params);

  io::AtomicFile file(opt.out);
  auto& s = file.stream();
  s << "# conceptrank eval report\n" << kMetricNote << '\n';
  s << detail::params_block(params);
  s << "[images]\n";
  for (const auto& [id, score] : report.per_image) {
    s << id << ' ' << io::fixed(score, 8);
    if (report.missing.count(id)) s << " missing";
    s << '\n';
  }
  s << "[corpus]\nscore " << io::fixed(report.score, 8) << "\nimages " << report.per_image.size()
    << "\nmissing " << report.missing.size() << "\ngreedy_alignments " << report.inexact << '\n';
  file.commit();
  out << "score " << io::fixed(report.score, 8) << '\n';
  std::vector<std::string> warnings;
  if (!report.missing.empty())
    warnings.push_back("gold images without predictions: " + std::to_string(report.missing.size()));
  if (report.inexact)
    warnings.push_back("images scored with greedy alignment: " + std::to_string(report.inexact));
  detail::warn_section(err, warnings);
  return report;
}

inline eval::Split cmd_split(const SplitOptions& opt, std::ostream& out) {
  detail::require(opt.ids, "--ids");
  detail::require(opt.out_dir, "--out-dir");
  if (opt.sizes.size() != 3) throw ValidationError("--sizes takes exactly three values");
  const auto ids = io::read_list(opt.ids);
  const auto split = eval::split_dataset(ids, {opt.sizes[0], opt.sizes[1], opt.sizes[2]}, opt.seed);
  std::error_code ec;
  fs::create_directories(opt.out_dir, ec);
  if (ec) throw Error("cannot create '" + opt.out_dir.string() + "': " + ec.message());
  io::AtomicFile train(opt.out_dir / "train.txt"), val(opt.out_dir / "val.txt"),
      test(opt.out_dir / "test.txt");
  io::write_list(train.stream(), split.train);
  io::write_list(val.stream(), split.val);
  io::write_list(test.stream(), split.test);
  train.commit();
  val.commit();
  test.commit();
  out << "train " << split.train.size() << "\nval " << split.val.size() << "\ntest "
      << split.test.size() << '\n';
  return split;
}

// ---------------------------------------------------------------------------
// Argument parsing
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"conceptrank: concept-based reranking of caption k-best lists"};
  app.require_subcommand(1);

  const std::vector<std::string> norm_names{"min_max", "none"};
  std::string rerank_norm = "min_max", tune_norm = "min_max";

  IndexOptions index_opt;
  auto* index = app.add_subcommand("index", "build a persisted exact k-NN index from features");
  index->add_option("--features", index_opt.features, "image_id<TAB>values per line")->required();
  index->add_option("--out", index_opt.out, "index file")->required();

  DetectOptions detect_opt;
  auto* detect = app.add_subcommand("detect", "detect concepts per image");
  detect->add_option("--mode", detect_opt.mode, "neivote or hierse")
      ->required()
      ->check(CLI::IsMember({"neivote", "hierse"}));
  detect->add_option("--m", detect_opt.m, "concepts kept per image")->capture_default_str();
  detect->add_option("--out", detect_opt.out, "concepts file (JSON lines)")->required();
  detect->add_option("--index", detect_opt.index, "[neivote] index file");
  detect->add_option("--queries", detect_opt.queries, "[neivote] query features");
  detect->add_option("--tags", detect_opt.tags, "[neivote] tag documents (JSON lines)");
  detect->add_option("--neighbors", detect_opt.neighbors, "[neivote] neighbor count")
      ->capture_default_str();
  detect->add_option("--labels", detect_opt.labels, "[hierse] label distributions (JSON lines)");
  detect->add_option("--vocab", detect_opt.vocab, "[hierse] concept vocabulary, one per line");
  detect->add_option("--embeddings", detect_opt.embeddings, "[hierse] word2vec text file");
  detect->add_option("--hierarchy", detect_opt.hierarchy, "[hierse] child<TAB>parent lines");
  detect->add_option("--beta", detect_opt.beta, "[hierse] ancestor decay in (0,1]")
      ->capture_default_str();

  RerankOptions rerank_opt;
  auto* rr = app.add_subcommand("rerank", "rerank k-best lists with detected concepts");
  rr->add_option("--kbest", rerank_opt.kbest)->required();
  rr->add_option("--concepts", rerank_opt.concepts)->required();
  rr->add_option("--theta", rerank_opt.theta, "concept weight in [0,1]")->required();
  rr->add_option("--out", rerank_opt.out)->required();
  rr->add_option("--kbest-out", rerank_opt.kbest_out, "also write reordered lists in k-best form");
  rr->add_flag("--top1-only", rerank_opt.top1_only, "write only the chosen caption per image");
  rr->add_flag("--stem", rerank_opt.stem, "suffix-stem tokens before concept matching");
  rr->add_option("--normalization", rerank_norm, "min_max or none")
      ->transform(CLI::IsMember(norm_names, CLI::ignore_case))
      ->capture_default_str();

  TuneOptions tune_opt;
  auto* tune = app.add_subcommand("tune", "grid-search theta on a validation set");
  tune->add_option("--kbest", tune_opt.kbest)->required();
  tune->add_option("--concepts", tune_opt.concepts)->required();
  tune->add_option("--refs", tune_opt.refs)->required();
  tune->add_option("--ids", tune_opt.ids, "restrict to these image ids");
  tune->add_option("--grid-step", tune_opt.grid_step)->capture_default_str();
  tune->add_option("--out", tune_opt.out)->required();
  tune->add_flag("--stem", tune_opt.stem, "stem stage for matching and scoring");
  tune->add_option("--normalization", tune_norm, "min_max or none")
      ->transform(CLI::IsMember(norm_names, CLI::ignore_case))
      ->capture_default_str();

  EvalOptions eval_opt;
  auto* ev = app.add_subcommand("eval", "score predictions with METEOR-lite");
  ev->add_option("--predictions", eval_opt.predictions)->required();
  ev->add_option("--refs", eval_opt.refs)->required();
  ev->add_option("--ids", eval_opt.ids, "restrict to these image ids");
  ev->add_option("--out", eval_opt.out)->required();
  ev->add_flag("--stem", eval_opt.stem, "enable the stem matching stage");

  SplitOptions split_opt;
  auto* split = app.add_subcommand("split", "seeded train/val/test split of an id list");
  split->add_option("--ids", split_opt.ids)->required();
  split->add_option("--sizes", split_opt.sizes, "train val test")->expected(3)->delimiter(',');
  split->add_option("--seed", split_opt.seed)->capture_default_str();
  split->add_option("--out-dir", split_opt.out_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  rerank_opt.normalization = rerank_norm == "none" ? Normalization::none : Normalization::min_max;
  tune_opt.normalization = tune_norm == "none" ? Normalization::none : Normalization::min_max;

  try {
    if (*index) cmd_index(index_opt, out);
    else if (*detect) cmd_detect(detect_opt, out, err);
    else if (*rr) cmd_rerank(rerank_opt, out, err);
    else if (*tune) cmd_tune(tune_opt, out, err);
    else if (*ev) cmd_eval(eval_opt, out, err);
    else if (*split) cmd_split(split_opt, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"conceptrank"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace conceptrank::cli
