#include <gtest/gtest.h>

#include "cotmr/error.hpp"
#include "cotmr/pipeline.hpp"
#include "cotmr/synthetic.hpp"
#include "oracles.hpp"

namespace cotmr {
namespace {

namespace fs = std::filesystem;

class SyntheticRun : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = oracle::fresh_dir(std::string("pipe-") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    write_synthetic_workspace(generate_synthetic_split(3, 20, 60, 16), 3, dir);
    config = RunConfig::load(dir / "run.conf");
  }
  std::string read(const fs::path& p) { return read_text_file(p); }
  fs::path dir;
  RunConfig config;
};

TEST(Config, KeyValueAndJsonAgree) {
  const auto dir = oracle::fresh_dir("cfg");
  write_text_file(dir / "a.conf",
                  "# comment\nqueries = q.jsonl\ngallery=g.jsonl\nbenchmark = cirr\nlambda = 0.7\n"
                  "dump_scores = false\nchat_backend = mock:c.jsonl\n");
  write_text_file(dir / "b.json",
                  R"({"queries":"q.jsonl","gallery":"g.jsonl","benchmark":"cirr","lambda":0.7,)"
                  R"("dump_scores":false,"chat_backend":"mock:c.jsonl"})");
  const auto a = RunConfig::load(dir / "a.conf");
  const auto b = RunConfig::load(dir / "b.json");
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.queries, dir / "q.jsonl");
  EXPECT_EQ(a.chat_backend, "mock:" + (dir / "c.jsonl").string());
  EXPECT_EQ(a.hyperparams(), (Hyperparams{0.7, 0.3}));
  EXPECT_FALSE(a.dump_scores);
  EXPECT_EQ(a.metric_plan().name, "cirr");
}

TEST(Config, Errors) {
  EXPECT_THROW(RunConfig::from_json(Json{{"lamda", 1.0}}), Error);
  EXPECT_THROW(RunConfig::from_json(Json{{"retry_budget", "many"}}), Error);
  EXPECT_THROW(RunConfig::parse_key_values("novalue\n"), Error);
  RunConfig synth;
  EXPECT_THROW(synth.hyperparams(), Error);
  RunConfig c = RunConfig::from_json(Json{{"split", "/data/x"}});
  EXPECT_EQ(c.queries, fs::path("/data/x/queries.jsonl"));
  EXPECT_EQ(c.gallery, fs::path("/data/x/gallery.jsonl"));
}

TEST_F(SyntheticRun, FingerprintIgnoresOutDirAndTracksInputs) {
  auto other = config;
  other.out = dir / "elsewhere";
  EXPECT_EQ(fingerprint(config), fingerprint(other));
  other.mu = 0.25;
  EXPECT_NE(fingerprint(config)["hash"], fingerprint(other)["hash"]);
  EXPECT_EQ(reasoning_fingerprint(fingerprint(config)), reasoning_fingerprint(fingerprint(other)));
  other.prompt_mode = "circot-0";
  EXPECT_NE(reasoning_fingerprint(fingerprint(config)), reasoning_fingerprint(fingerprint(other)));
}

TEST_F(SyntheticRun, RetrieveNeedsEmbeddings) {
  try {
    run_retrieve(config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
    EXPECT_NE(std::string(e.what()).find("embed"), std::string::npos);
  }
}

TEST_F(SyntheticRun, FullRunRecoversPlantedTargets) {
  const auto emb = run_embed(config);
  EXPECT_EQ(emb.records, 60u);
  const auto r = run_retrieve(config);
  EXPECT_EQ(r.ranked, 20u);
  EXPECT_EQ(r.failed, 0u);
  const auto report = run_evaluate(config, {});
  EXPECT_EQ(report.metric("R@1"), 1.0);
  EXPECT_EQ(report.mean_target_rank, 1.0);
  EXPECT_TRUE(fs::exists(config.out / kScoresFile));
  EXPECT_TRUE(fs::exists(config.out / kReportFile));
}

TEST_F(SyntheticRun, ZeroWeightsEqualBaseOnly) {
  run_embed(config);
  auto zero = config;
  zero.lambda = 0.0;
  zero.mu = 0.0;
  run_retrieve(zero);
  const auto a = read_rankings(zero.out / kRankingsFile);
  auto base = config;
  base.components = "base";
  base.out = dir / "base";
  fs::create_directories(base.out);
  fs::copy_file(config.out / kEmbeddingsFile, base.out / kEmbeddingsFile);
  run_retrieve(base, true);
  const auto b = read_rankings(base.out / kRankingsFile);
  ASSERT_EQ(a.rankings.size(), b.rankings.size());
  for (const auto& [qid, r] : a.rankings) {
    const auto& other = b.rankings.at(qid);
    for (std::size_t j = 0; j < r.items.size(); ++j) {
      EXPECT_EQ(r.items[j].image_id, other.items[j].image_id);
      EXPECT_NEAR(r.items[j].score, other.items[j].score, 1e-12);
    }
  }
}

TEST_F(SyntheticRun, EvaluateChecksFingerprints) {
  run_embed(config);
  run_retrieve(config);
  // A second run under other weights yields rankings with another fingerprint.
  auto other = config;
  other.mu = 0.1;
  other.out = dir / "other";
  fs::create_directories(other.out);
  fs::copy_file(config.out / kEmbeddingsFile, other.out / kEmbeddingsFile);
  run_retrieve(other, true);
  const std::vector<fs::path> both{config.out / kRankingsFile, other.out / kRankingsFile};
  try {
    run_evaluate(config, both);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FingerprintMismatch);
  }
  // With force the overlapping shards still collide on query ids.
  EXPECT_THROW(run_evaluate(config, both, true), Error);

  // Rankings for another split are refused unless forced.
  auto changed = config;
  write_text_file(dir / "queries2.jsonl", read(config.queries) + "\n");
  changed.queries = dir / "queries2.jsonl";
  EXPECT_THROW(run_evaluate(changed, {config.out / kRankingsFile}), Error);
  EXPECT_EQ(run_evaluate(changed, {config.out / kRankingsFile}, true).metric("R@1"), 1.0);
}

TEST_F(SyntheticRun, ShardsMergeToTheSameReport) {
  run_embed(config);
  run_retrieve(config);
  const auto whole = read_rankings(config.out / kRankingsFile);
  RankingsFile a, b;
  a.fingerprint = b.fingerprint = whole.fingerprint;
  std::size_t i = 0;
  for (const auto& qid : whole.order) {
    auto& shard = (i++ % 2) ? a : b;
    shard.order.push_back(qid);
    shard.rankings.emplace(qid, whole.rankings.at(qid));
  }
  write_rankings(dir / "a.jsonl", a);
  write_rankings(dir / "b.jsonl", b);
  const auto merged = run_evaluate(config, {dir / "a.jsonl", dir / "b.jsonl"});
  const auto single = run_evaluate(config, {});
  EXPECT_EQ(merged.metrics, single.metrics);
}

TEST_F(SyntheticRun, AblationGrid) {
  run_embed(config);
  EXPECT_THROW(run_ablate(config, {}, {0.5}, {"base"}), Error);
  EXPECT_THROW(run_ablate(config, {1.0}, {0.5}, {"base"}), Error);  // no traces yet
  run_reason(config);
  const auto points = run_ablate(config, {0.0, 1.0}, {0.0, 0.5}, {"base", "base,pos,neg"});
  ASSERT_EQ(points.size(), 8u);
  const auto& base_only = points[0].report;
  for (const auto& p : points) {
    if (p.components == "base" || (p.lambda == 0.0 && p.mu == 0.0)) {
      EXPECT_EQ(p.report.metrics, base_only.metrics);
      EXPECT_EQ(p.report.mean_target_rank, base_only.mean_target_rank);
    }
  }
  EXPECT_EQ(base_only.metric("R@1"), 0.0);
  EXPECT_EQ(points.back().report.metric("R@1"), 1.0);
  EXPECT_LT(points.back().report.mean_target_rank, base_only.mean_target_rank);
  const auto tsv = read(config.out / "ablation.tsv");
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 9);
}

TEST_F(SyntheticRun, TraceShowEditReplay) {
  run_embed(config);
  run_retrieve(config);
  const auto shown = trace_show(config, "q00004");
  EXPECT_NE(shown.find("Image understanding"), std::string::npos);
  EXPECT_NE(shown.find("[caption]"), std::string::npos);
  EXPECT_THROW(trace_show(config, "q_missing"), Error);

  // No edit: replay reproduces the run.
  const auto same = trace_replay(config);
  EXPECT_TRUE(same.rescored.empty());
  EXPECT_EQ(same.report.metrics, run_evaluate(config, {}).metrics);

  // Swapping the caption for another query's moves only this query.
  const auto traces = load_run_traces(config.out);
  const auto before = read_rankings(config.out / kRankingsFile);
  trace_edit(config, "q00004", Scale::image, traces[9].scales[0].raw_reply);
  const auto replay = trace_replay(config);
  EXPECT_EQ(replay.rescored, std::vector<std::string>{"q00004"});
  const auto after = read_rankings(config.out / "replay" / kRankingsFile);
  EXPECT_EQ(after.order, before.order);
  for (const auto& [qid, r] : before.rankings) {
    if (qid == "q00004") {
      EXPECT_NE(after.rankings.at(qid), r);
    } else {
      EXPECT_EQ(after.rankings.at(qid), r);
    }
  }
  EXPECT_TRUE(fs::exists(config.out / "replay" / kScoresFile));
  EXPECT_TRUE(fs::exists(config.out / "replay" / kReportFile));
}

TEST_F(SyntheticRun, ReasoningFingerprintGuardsTraces) {
  run_embed(config);
  run_retrieve(config);
  auto other = config;
  other.prompt_mode = "no-cot";
  try {
    run_retrieve(other);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FingerprintMismatch);
  }
  EXPECT_NO_THROW(run_retrieve(other, true));
}

TEST_F(SyntheticRun, RunsAreByteIdenticalAcrossDirectories) {
  auto second = config;
  second.out = dir / "second";
  for (const auto& c : {config, second}) {
    run_embed(c);
    run_retrieve(c);
    run_evaluate(c, {});
  }
  for (const auto* name : {kRankingsFile.data(), kScoresFile.data(), kReportFile.data(), kEmbeddingsFile.data()}) {
    EXPECT_EQ(read(config.out / name), read(second.out / name)) << name;
  }
}

}  // namespace
}  // namespace cotmr
