#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "test_util.hpp"

using namespace conceptrank;
using testutil::read_file;
using testutil::read_lines;
using testutil::run_cli;
using testutil::TempDir;
using testutil::write_file;

namespace {

const std::string kKbest =
    "{\"image_id\":\"a\",\"candidates\":[{\"text\":\"a man riding a horse\",\"score\":-1.0},"
    "{\"text\":\"a dog on a beach\",\"score\":-2.0},{\"text\":\"a plane in the sky\",\"score\":-3.0}]}\n"
    "{\"image_id\":\"b\",\"candidates\":[{\"text\":\"a red kite\",\"score\":-0.5},"
    "{\"text\":\"a blue kite\",\"score\":-0.75}]}\n";

const std::string kConcepts =
    "{\"image_id\":\"a\",\"concepts\":[{\"term\":\"plane\",\"confidence\":0.9},"
    "{\"term\":\"sky\",\"confidence\":0.8}]}\n";

const std::string kRefs =
    "{\"image_id\":\"a\",\"references\":[\"a plane in the blue sky\",\"an airplane flying\"]}\n"
    "{\"image_id\":\"b\",\"references\":[\"a red kite in the air\"]}\n";

}  // namespace

TEST(CliIndex, WritesHeaderAndRoundTrips) {
  TempDir dir;
  write_file(dir / "f.tsv", "x\t1 2 3 4\ny\t0.5 0 0 1\nz\t-1 -2 -3 -4\n");
  const auto r = run_cli({"index", "--features", (dir / "f.tsv").string(), "--out",
                          (dir / "idx").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("records 3"), std::string::npos);
  EXPECT_NE(r.out.find("wall_seconds"), std::string::npos);
  const auto lines = read_lines(dir / "idx");
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "NVIDX 4 3");
  const auto loaded = io::read_index(dir / "idx");
  EXPECT_EQ(loaded.id(2), "z");
  EXPECT_EQ(loaded.row(1)[0], 0.5f);
}

TEST(CliIndex, MalformedFloatFailsWithLineNumber) {
  TempDir dir;
  std::string content;
  for (int i = 1; i <= 6; ++i) content += "id" + std::to_string(i) + "\t1 2\n";
  content += "id7\t1 zz\n";
  write_file(dir / "f.tsv", content);
  const auto r = run_cli({"index", "--features", (dir / "f.tsv").string(), "--out",
                          (dir / "idx").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(":7:"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "idx"));
}

TEST(CliDetect, NeiVoteMatchesLibraryAndIsDeterministic) {
  TempDir dir;
  const auto fx = testutil::data_dir() / "fixture";
  ASSERT_EQ(run_cli({"index", "--features", (fx / "collection.tsv").string(), "--out",
                     (dir / "idx").string()})
                .code,
            0);
  const std::vector<std::string> args{"detect", "--mode", "neivote", "--index",
                                      (dir / "idx").string(), "--queries",
                                      (fx / "queries.tsv").string(), "--tags",
                                      (fx / "tags.jsonl").string(), "--neighbors", "3", "--m",
                                      "4", "--out"};
  auto a = args, b = args;
  a.push_back((dir / "a.jsonl").string());
  b.push_back((dir / "b.jsonl").string());
  ASSERT_EQ(run_cli(a).code, 0);
  ASSERT_EQ(run_cli(b).code, 0);
  EXPECT_EQ(read_file(dir / "a.jsonl"), read_file(dir / "b.jsonl"));

  const auto index = neivote::build_index(io::read_features(fx / "collection.tsv"));
  const auto tags = io::read_tags(fx / "tags.jsonl");
  const auto detected = io::read_concepts(dir / "a.jsonl");
  for (const auto& q : io::read_features(fx / "queries.tsv")) {
    const auto expected = neivote::vote_concepts(index.query(q.feature.values(), 3), tags, 4);
    EXPECT_EQ(detected.at(q.image_id), expected) << q.image_id;
  }
}

TEST(CliDetect, SingleConcept) {
  TempDir dir;
  const auto fx = testutil::data_dir() / "fixture";
  run_cli({"index", "--features", (fx / "collection.tsv").string(), "--out", (dir / "idx").string()});
  ASSERT_EQ(run_cli({"detect", "--mode", "neivote", "--index", (dir / "idx").string(), "--queries",
                     (fx / "queries.tsv").string(), "--tags", (fx / "tags.jsonl").string(), "--m",
                     "1", "--out", (dir / "c.jsonl").string()})
                .code,
            0);
  for (const auto& [id, list] : io::read_concepts(dir / "c.jsonl")) EXPECT_EQ(list.size(), 1u) << id;
}

TEST(CliDetect, HierSEWarnsAboutSkippedImages) {
  TempDir dir;
  write_file(dir / "labels.jsonl",
             "{\"image_id\":\"a\",\"labels\":[{\"term\":\"beagle\",\"prob\":0.9}]}\n"
             "{\"image_id\":\"b\",\"labels\":[{\"term\":\"mystery\",\"prob\":0.9}]}\n");
  write_file(dir / "vocab.txt", "dog\ncat\nunicorn\n");
  write_file(dir / "emb.txt", "2 2\ndog 1 0\ncat 0 1\n");
  write_file(dir / "h.tsv", "beagle\tdog\n");
  const auto r = run_cli({"detect", "--mode", "hierse", "--labels", (dir / "labels.jsonl").string(),
                          "--vocab", (dir / "vocab.txt").string(), "--embeddings",
                          (dir / "emb.txt").string(), "--hierarchy", (dir / "h.tsv").string(),
                          "--m", "2", "--out", (dir / "c.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("[warnings]"), std::string::npos);
  EXPECT_NE(r.err.find("dropped concept unicorn"), std::string::npos);
  EXPECT_NE(r.err.find("skipped image b"), std::string::npos);
  const auto concepts = io::read_concepts(dir / "c.jsonl");
  ASSERT_EQ(concepts.size(), 1u);
  EXPECT_EQ(concepts.at("a")[0].term, "dog");
  EXPECT_NEAR(concepts.at("a")[0].confidence, 1.0, 1e-12);
}

TEST(CliRerank, ThetaZeroReproducesInput) {
  TempDir dir;
  write_file(dir / "k.jsonl", kKbest);
  write_file(dir / "c.jsonl", kConcepts);
  const auto r = run_cli({"rerank", "--kbest", (dir / "k.jsonl").string(), "--concepts",
                          (dir / "c.jsonl").string(), "--theta", "0", "--out",
                          (dir / "r.jsonl").string(), "--kbest-out", (dir / "k2.jsonl").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_file(dir / "k2.jsonl"), kKbest);
  EXPECT_NE(r.out.find("top1_changed 0"), std::string::npos);
  // Image b has no concepts; that is reported, not fatal.
  EXPECT_NE(r.err.find("no concepts for image b"), std::string::npos);
}

TEST(CliRerank, ConceptsPromoteMatchingCaption) {
  TempDir dir;
  write_file(dir / "k.jsonl", kKbest);
  write_file(dir / "c.jsonl", kConcepts);
  ASSERT_EQ(run_cli({"rerank", "--kbest", (dir / "k.jsonl").string(), "--concepts",
                     (dir / "c.jsonl").string(), "--theta", "0.6", "--out",
                     (dir / "r.jsonl").string()})
                .code,
            0);
  const auto line = read_lines(dir / "r.jsonl").at(0);
  const auto rec = io::json::parse(line);
  const auto& top = rec["candidates"][0];
  EXPECT_EQ(top["text"], "a plane in the sky");
  EXPECT_EQ(top["old_rank"], 2);
  EXPECT_EQ(top["new_rank"], 0);
  EXPECT_EQ(top["matched"], io::json::array({"plane", "sky"}));
  EXPECT_NEAR(top["new_score"].get<double>(), 0.51, 1e-12);

  ASSERT_EQ(run_cli({"rerank", "--kbest", (dir / "k.jsonl").string(), "--concepts",
                     (dir / "c.jsonl").string(), "--theta", "0.6", "--top1-only", "--out",
                     (dir / "p.jsonl").string()})
                .code,
            0);
  EXPECT_EQ(read_file(dir / "p.jsonl"),
            "{\"image_id\":\"a\",\"caption\":\"a plane in the sky\"}\n"
            "{\"image_id\":\"b\",\"caption\":\"a red kite\"}\n");
}

TEST(CliRerank, ValidationFailuresLeaveNoOutput) {
  TempDir dir;
  write_file(dir / "k.jsonl", kKbest);
  write_file(dir / "c.jsonl", kConcepts);
  const auto bad_theta = run_cli({"rerank", "--kbest", (dir / "k.jsonl").string(), "--concepts",
                                  (dir / "c.jsonl").string(), "--theta", "1.5", "--out",
                                  (dir / "r.jsonl").string()});
  EXPECT_EQ(bad_theta.code, 1);
  const auto bad_norm = run_cli({"rerank", "--kbest", (dir / "k.jsonl").string(), "--concepts",
                                 (dir / "c.jsonl").string(), "--theta", "0.5", "--normalization",
                                 "none", "--out", (dir / "r.jsonl").string()});
  EXPECT_EQ(bad_norm.code, 1);
  EXPECT_NE(bad_norm.err.find("index 0"), std::string::npos) << bad_norm.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "r.jsonl"));
  EXPECT_FALSE(std::filesystem::exists(dir / "r.jsonl.tmp"));
}

TEST(CliSplit, WritesThreeDisjointFiles) {
  TempDir dir;
  std::string ids;
  for (int i = 0; i < 20; ++i) ids += "img" + std::to_string(i) + "\n";
  write_file(dir / "ids.txt", ids);
  const auto r = run_cli({"split", "--ids", (dir / "ids.txt").string(), "--sizes", "10,5,5",
                          "--seed", "3", "--out-dir", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto train = read_lines(dir / "out" / "train.txt");
  const auto val = read_lines(dir / "out" / "val.txt");
  const auto test = read_lines(dir / "out" / "test.txt");
  EXPECT_EQ(train.size(), 10u);
  EXPECT_EQ(val.size(), 5u);
  EXPECT_EQ(test.size(), 5u);
  std::set<std::string> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  all.insert(test.begin(), test.end());
  EXPECT_EQ(all.size(), 20u);

  const auto again = run_cli({"split", "--ids", (dir / "ids.txt").string(), "--sizes", "10,5,5",
                              "--seed", "3", "--out-dir", (dir / "again").string()});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(read_file(dir / "again" / "val.txt"), read_file(dir / "out" / "val.txt"));

  const auto bad = run_cli({"split", "--ids", (dir / "ids.txt").string(), "--sizes", "10,5,4",
                            "--out-dir", (dir / "bad").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_FALSE(std::filesystem::exists(dir / "bad" / "train.txt"));
}

TEST(CliTuneEval, ReportsAgreeWithLibrary) {
  TempDir dir;
  write_file(dir / "k.jsonl", kKbest);
  write_file(dir / "c.jsonl", kConcepts);
  write_file(dir / "r.jsonl", kRefs);
  const auto t = run_cli({"tune", "--kbest", (dir / "k.jsonl").string(), "--concepts",
                          (dir / "c.jsonl").string(), "--refs", (dir / "r.jsonl").string(),
                          "--grid-step", "0.1", "--out", (dir / "tune.txt").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  const std::string report = read_file(dir / "tune.txt");
  EXPECT_NE(report.find("not comparable to official METEOR"), std::string::npos);
  EXPECT_NE(report.find("[curve]"), std::string::npos);
  const auto lists = io::read_kbest(dir / "k.jsonl");
  std::vector<KBestList> val;
  for (const auto& [_, l] : lists) val.push_back(l);
  const auto expected = eval::tune_theta(val, io::read_concepts(dir / "c.jsonl"),
                                         io::read_references(dir / "r.jsonl"), 0.1);
  EXPECT_GT(expected.theta_star, 0.0);
  EXPECT_NE(report.find("theta_star " + io::fixed(expected.theta_star)), std::string::npos);

  ASSERT_EQ(run_cli({"rerank", "--kbest", (dir / "k.jsonl").string(), "--concepts",
                     (dir / "c.jsonl").string(), "--theta", io::fixed(expected.theta_star),
                     "--top1-only", "--out", (dir / "p.jsonl").string()})
                .code,
            0);
  const auto e = run_cli({"eval", "--predictions", (dir / "p.jsonl").string(), "--refs",
                          (dir / "r.jsonl").string(), "--out", (dir / "eval.txt").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(read_file(dir / "eval.txt").find("score " + io::fixed(expected.best_score, 8)),
            std::string::npos);
}

TEST(CliEval, MissingPredictionsAreCountedAndWarned) {
  TempDir dir;
  write_file(dir / "r.jsonl", kRefs);
  write_file(dir / "p.jsonl", "{\"image_id\":\"a\",\"caption\":\"a plane in the blue sky\"}\n");
  const auto e = run_cli({"eval", "--predictions", (dir / "p.jsonl").string(), "--refs",
                          (dir / "r.jsonl").string(), "--out", (dir / "eval.txt").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string report = read_file(dir / "eval.txt");
  EXPECT_NE(report.find("b 0.00000000 missing"), std::string::npos) << report;
  EXPECT_NE(report.find("missing 1"), std::string::npos);
  EXPECT_NE(e.err.find("gold images without predictions: 1"), std::string::npos);

  write_file(dir / "bad.jsonl", "{\"image_id\":\"zz\",\"caption\":\"x\"}\n");
  EXPECT_EQ(run_cli({"eval", "--predictions", (dir / "bad.jsonl").string(), "--refs",
                     (dir / "r.jsonl").string(), "--out", (dir / "e2.txt").string()})
                .code,
            1);
}

TEST(CliExitCodes, UsageValidationRuntime) {
  TempDir dir;
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"bogus"}).code, 1);
  EXPECT_EQ(run_cli({"index", "--features"}).code, 1);
  EXPECT_EQ(run_cli({"index", "--features", (dir / "absent").string(), "--out",
                     (dir / "x").string()})
                .code,
            1);
  EXPECT_EQ(run_cli({"--help"}).code, 0);

  // Output into a directory that does not exist is a runtime failure.
  write_file(dir / "f.tsv", "x\t1 2\n");
  const auto r = run_cli({"index", "--features", (dir / "f.tsv").string(), "--out",
                          (dir / "no" / "such" / "idx").string()});
  EXPECT_EQ(r.code, 2) << r.err;

  // No vocabulary concept embeds: coverage failure is a runtime error.
  write_file(dir / "labels.jsonl", "{\"image_id\":\"a\",\"labels\":[{\"term\":\"x\",\"prob\":1}]}\n");
  write_file(dir / "vocab.txt", "unicorn\n");
  write_file(dir / "emb.txt", "1 2\ndog 1 0\n");
  write_file(dir / "h.tsv", "\n");
  const auto h = run_cli({"detect", "--mode", "hierse", "--labels", (dir / "labels.jsonl").string(),
                          "--vocab", (dir / "vocab.txt").string(), "--embeddings",
                          (dir / "emb.txt").string(), "--hierarchy", (dir / "h.tsv").string(),
                          "--out", (dir / "c.jsonl").string()});
  EXPECT_EQ(h.code, 2) << h.err;
  EXPECT_FALSE(std::filesystem::exists(dir / "c.jsonl"));
}
