#include <gtest/gtest.h>

#include <algorithm>

#include "cotmr/error.hpp"
#include "cotmr/evaluation.hpp"
#include "cotmr/synthetic.hpp"
#include "oracles.hpp"

namespace cotmr {
namespace {

Ranking ranking_of(const std::vector<std::string>& ids, const std::string& qid = "q") {
  Ranking r;
  r.query_id = qid;
  double s = 1.0;
  for (const auto& id : ids) {
    r.items.push_back({id, s});
    s -= 1e-3;
  }
  return r;
}

std::vector<std::string> numbered(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t i = 1; i <= n; ++i) ids.push_back("i" + std::to_string(1000 + i));
  return ids;
}

TEST(Metrics, AveragePrecisionWorkedExample) {
  // Relevant at ranks 1, 3, 5 of |T| = 3: (1 + 2/3 + 3/5) / 3.
  const auto r = ranking_of({"t1", "x", "t2", "y", "t3", "z"});
  EXPECT_NEAR(average_precision_at_k(r, {"t1", "t2", "t3"}, 5), (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0, 1e-12);
  // Relevant at ranks 1 and 3, |T| = 2 -> (1 + 2/3) / 2.
  EXPECT_NEAR(average_precision_at_k(r, {"t1", "t2"}, 5), 0.833333, 1e-6);
  // More targets than k: normalised by k.
  const auto all = ranking_of({"a", "b", "c"});
  EXPECT_NEAR(average_precision_at_k(all, {"a", "b", "c"}, 2), 1.0, 1e-12);
  EXPECT_EQ(average_precision_at_k(all, {"zzz"}, 3), 0.0);
}

TEST(Metrics, RecallBoundaries) {
  auto ids = numbered(20);
  const auto r = ranking_of(ids);
  EXPECT_EQ(recall_at_k(r, {ids[9]}, 10), 1.0);
  EXPECT_EQ(recall_at_k(r, {ids[10]}, 10), 0.0);
  EXPECT_EQ(recall_at_k(r, {ids[10], ids[0]}, 1), 1.0);
  EXPECT_EQ(best_target_rank(r, {ids[14], ids[6]}), 7u);
  for (std::size_t bad : {std::size_t{0}, std::size_t{21}}) {
    try {
      recall_at_k(r, {ids[0]}, bad);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::KOutOfRange);
    }
  }
  EXPECT_THROW(recall_at_k(r, {}, 1), Error);
}

// Queries whose targets sit at ranks 2, 7 and 15: R@10 = 2/3.
TEST(Metrics, SplitMeanRecall) {
  const auto ids = numbered(20);
  DatasetSplit split;
  split.name = "s";
  for (const auto& id : ids) split.gallery.entries.push_back({id, id});
  std::map<std::string, Ranking> rankings;
  const std::size_t ranks[] = {2, 7, 15};
  for (std::size_t q = 0; q < 3; ++q) {
    const auto qid = "q" + std::to_string(q);
    split.queries.push_back({qid, ids[19], "t", {ids[ranks[q] - 1]}, std::nullopt});
    rankings[qid] = ranking_of(ids, qid);
  }
  MetricPlan plan;
  plan.name = "custom";
  plan.recall_ks = {10};
  const auto rep = evaluate_split(rankings, split, plan);
  EXPECT_NEAR(rep.metric("R@10"), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(rep.mean_target_rank, 8.0, 1e-12);
  EXPECT_EQ(rep.n_evaluated, 3u);
}

TEST(Metrics, SubsetRecallIgnoresOutsiders) {
  std::vector<std::string> ids = numbered(600);
  const std::vector<std::string> subset = {ids[599], ids[100], ids[200], ids[300], ids[400], ids[550]};
  // Target is ranked 500th overall but first among the subset.
  const auto target = ids[499];
  std::vector<std::string> order;
  for (const auto& id : ids) {
    if (id != target && std::find(subset.begin(), subset.end(), id) == subset.end()) order.push_back(id);
  }
  order.insert(order.begin() + 499, target);
  std::vector<std::string> tail(subset.begin(), subset.end());
  order.insert(order.end(), tail.begin(), tail.end());
  std::vector<std::string> sub6 = subset;
  sub6[0] = target;
  const auto r = ranking_of(order);
  EXPECT_EQ(best_target_rank(r, {target}), 500u);
  EXPECT_EQ(recall_subset_at_k(r, sub6, {target}, 1), 1.0);
  EXPECT_EQ(recall_at_k(r, {target}, 50), 0.0);
  try {
    recall_subset_at_k(r, {"nope", ids[1], ids[2], ids[3], ids[4], ids[5]}, {target}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SubsetNotInGallery);
  }
  EXPECT_THROW(recall_subset_at_k(r, sub6, {target}, 7), Error);
}

TEST(Plans, Named) {
  const auto f = MetricPlan::named("fashioniq");
  EXPECT_EQ(f.recall_ks, (std::vector<std::size_t>{10, 50}));
  EXPECT_TRUE(f.r_mean);
  const auto c = MetricPlan::named("cirr");
  EXPECT_EQ(c.recall_ks, (std::vector<std::size_t>{1, 5, 10, 50}));
  EXPECT_EQ(c.subset_ks, (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_TRUE(c.cirr_avg);
  EXPECT_EQ(MetricPlan::named("circo").map_ks, (std::vector<std::size_t>{5, 10, 25, 50}));
  EXPECT_EQ(MetricPlan::for_benchmark(BenchmarkKind::cirr).name, "cirr");
  EXPECT_THROW(MetricPlan::named("imagenet"), Error);
}

DatasetSplit gallery_split(std::size_t n) {
  DatasetSplit split;
  split.name = "t";
  for (const auto& id : numbered(n)) split.gallery.entries.push_back({id, id});
  return split;
}

TEST(Aggregates, RMeanAndCirrAvg) {
  auto split = gallery_split(100);
  const auto ids = numbered(100);
  std::map<std::string, Ranking> rankings;
  // q0 target rank 3 (in top 5, first of subset); q1 rank 30 (misses R@10 and R@5);
  // q2 rank 80; q3 rank 8 behind a subset member.
  const std::size_t ranks[] = {3, 30, 80, 8};
  for (std::size_t q = 0; q < 4; ++q) {
    const auto qid = "q" + std::to_string(q);
    const auto target = ids[ranks[q] - 1];
    std::vector<std::string> subset = {target, ids[90], ids[91], ids[92], ids[93], ids[94]};
    if (q == 3) subset[1] = ids[1];
    split.queries.push_back({qid, ids[99], "t", {target}, subset});
    rankings[qid] = ranking_of(ids, qid);
  }
  const auto fiq = evaluate_split(rankings, split, MetricPlan::named("fashioniq"));
  // R@10 = 2/4, R@50 = 3/4.
  EXPECT_NEAR(fiq.metric("R_mean"), (0.5 + 0.75) / 2, 1e-12);
  const auto cirr = evaluate_split(rankings, split, MetricPlan::named("cirr"));
  // R@5 = 1/4; R_sub@1 = 3/4 (q3 loses to ids[1]).
  EXPECT_NEAR(cirr.metric("R@5"), 0.25, 1e-12);
  EXPECT_NEAR(cirr.metric("R_sub@1"), 0.75, 1e-12);
  EXPECT_NEAR(cirr.metric("Avg"), 0.5, 1e-12);
  EXPECT_EQ(percent(cirr.metric("Avg")), "50.00");
  const auto j = cirr.to_json();
  EXPECT_EQ(j["format"], "cotmr-report-v1");
  EXPECT_EQ(j["metrics_x100"]["R@5"], "25.00");
  EXPECT_NE(cirr.render_table().find("R_sub@1"), std::string::npos);
}

TEST(Aggregates, RMeanWorkedValue) {
  // R@10 = 0.3 and R@50 = 0.5 give 0.4.
  auto split = gallery_split(60);
  const auto ids = numbered(60);
  std::map<std::string, Ranking> rankings;
  for (std::size_t q = 0; q < 10; ++q) {
    const std::size_t rank = q < 3 ? 1 : (q < 5 ? 20 : 55);
    const auto qid = "q" + std::to_string(q);
    split.queries.push_back({qid, ids[59], "t", {ids[rank - 1]}, std::nullopt});
    rankings[qid] = ranking_of(ids, qid);
  }
  EXPECT_NEAR(evaluate_split(rankings, split, MetricPlan::named("fashioniq")).metric("R_mean"), 0.4, 1e-12);
}

TEST(Errors, MissingRankingAndMissingSubset) {
  auto split = gallery_split(10);
  const auto ids = numbered(10);
  split.queries.push_back({"q0", ids[0], "t", {ids[1]}, std::nullopt});
  std::map<std::string, Ranking> none;
  try {
    evaluate_split(none, split, MetricPlan::named("fashioniq"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingRanking);
  }
  std::map<std::string, Ranking> one{{"q0", ranking_of(ids, "q0")}};
  MetricPlan plan;
  plan.name = "sub";
  plan.subset_ks = {1};
  EXPECT_THROW(evaluate_split(one, split, plan), Error);
  // A failed query needs no ranking and is excluded.
  const auto rep = evaluate_split(none, split, MetricPlan::named("synthetic"), {"q0"});
  EXPECT_EQ(rep.n_failed, 1u);
  EXPECT_EQ(rep.n_evaluated, 0u);
}

struct RandomCase {
  std::vector<std::string> ranked;
  std::vector<std::string> targets;
  std::vector<std::string> subset;
};

RandomCase random_case(SplitMix64& rng) {
  RandomCase c;
  const std::size_t n = 6 + rng.below(80);
  auto ids = numbered(n);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);
  c.ranked = ids;
  const std::size_t nt = 1 + rng.below(5);
  auto pool = ids;
  for (std::size_t i = 0; i < nt; ++i) {
    const auto j = rng.below(pool.size());
    c.targets.push_back(pool[j]);
    pool.erase(pool.begin() + static_cast<long>(j));
  }
  c.subset = {c.targets[0]};
  while (c.subset.size() < kSubsetSize) {
    const auto& id = ids[rng.below(ids.size())];
    if (!oracle::contains(c.subset, id)) c.subset.push_back(id);
  }
  return c;
}

TEST(Properties, MatchBruteForceAndMonotoneInK) {
  SplitMix64 rng(77);
  for (int i = 0; i < 500; ++i) {
    const auto c = random_case(rng);
    const auto r = ranking_of(c.ranked);
    double prev = 0.0;
    for (std::size_t k = 1; k <= c.ranked.size(); ++k) {
      const double got = recall_at_k(r, c.targets, k);
      EXPECT_EQ(got, oracle::recall(c.ranked, c.targets, k));
      EXPECT_GE(got, prev);
      prev = got;
      EXPECT_NEAR(average_precision_at_k(r, c.targets, k), oracle::average_precision(c.ranked, c.targets, k), 1e-9);
    }
    for (std::size_t k = 1; k <= kSubsetSize; ++k) {
      EXPECT_EQ(recall_subset_at_k(r, c.subset, c.targets, k), oracle::recall_subset(c.ranked, c.subset, c.targets, k));
    }
  }
}

TEST(Properties, QueryOrderDoesNotMatter) {
  SplitMix64 rng(8);
  auto split = gallery_split(60);
  std::map<std::string, Ranking> rankings;
  for (int q = 0; q < 30; ++q) {
    auto ids = numbered(60);
    for (std::size_t i = ids.size() - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);
    const auto qid = "q" + std::to_string(q);
    split.queries.push_back({qid, ids[0], "t", {ids[rng.below(60)], ids[rng.below(60)]}, std::nullopt});
    if (split.queries.back().targets[0] == split.queries.back().targets[1]) split.queries.back().targets.pop_back();
    rankings[qid] = ranking_of(ids, qid);
  }
  const auto a = evaluate_split(rankings, split, MetricPlan::named("circo"));
  auto shuffled = split;
  std::reverse(shuffled.queries.begin(), shuffled.queries.end());
  const auto b = evaluate_split(rankings, shuffled, MetricPlan::named("circo"));
  EXPECT_EQ(a.metrics, b.metrics);
}

}  // namespace
}  // namespace cotmr
